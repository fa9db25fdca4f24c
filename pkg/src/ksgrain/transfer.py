"""Ulam discretisation of the Frobenius-Perron operator and mixing statistics.

The Ulam matrix of a map ``T`` on a grid partition ``{A_i}`` is

    P[i, j] ~ mu(A_i & T^{-1} A_j) / mu(A_i),

estimated by pushing sample points of each cell forward one step and
recording the cell they land in. No inverse map is needed because every
catalogue map preserves Lebesgue measure. Densities are row vectors of cell
weights and evolve as ``f <- f P``.

Two sampling schemes are offered:

``random``
    ``samples_per_cell`` uniform points per cell, drawn from a per-cell
    child of ``SeedSequence(rng_seed)``.
``lattice``
    a regular sub-grid of ``k_q x k_p`` points per cell anchored at the cell
    corner, with ``k`` a power of two. Images falling within 1e-6 (in
    sub-grid units) of a lattice point are snapped onto it before being
    binned, so maps that permute the sub-lattice (cat, doubling, baker,
    rational rotations) give exactly doubly stochastic matrices.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .dynamics import MapSystem, check_domain, warn_precision
from .errors import NonConvergenceError, NonNormalizedError, OrbitEscapeError, ValidationError
from .measure import sample_uniform
from .phase_space import Partition

SNAP_TOLERANCE = 1e-6


@dataclass(frozen=True)
class UlamOperator:
    partition: Partition
    matrix: sp.csr_matrix
    samples_per_cell: int
    scheme: str = "random"
    map_spec: str = ""

    @property
    def M(self) -> int:
        return self.partition.M

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    def power(self, t: int) -> sp.csr_matrix:
        if t < 0:
            raise ValidationError(f"matrix power needs t >= 0, got {t}")
        out = sp.identity(self.M, format="csr")
        base = self.matrix
        while t:
            if t & 1:
                out = out @ base
            base = base @ base
            t >>= 1
        return out.tocsr()

    def write_csv(self, path: str | Path) -> None:
        """Sparse triplets ``row,col,value`` in row-major order."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["row", "col", "value"])
            for k in order:
                w.writerow([int(coo.row[k]), int(coo.col[k]), repr(float(coo.data[k]))])

    @classmethod
    def read_csv(cls, path: str | Path, partition: Partition, samples_per_cell: int = 0) -> "UlamOperator":
        rows, cols, vals = [], [], []
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                rows.append(int(rec["row"]))
                cols.append(int(rec["col"]))
                vals.append(float(rec["value"]))
        mat = sp.csr_matrix((vals, (rows, cols)), shape=(partition.M, partition.M))
        return cls(partition, mat, samples_per_cell)


@dataclass(frozen=True)
class Density:
    weights: np.ndarray
    partition: Partition | None = field(default=None, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or not np.all(np.isfinite(w)):
            raise NonNormalizedError("density weights must be a finite non-negative vector")
        if abs(w.sum() - 1.0) > 1e-12:
            raise NonNormalizedError(f"density weights sum to {w.sum()!r}, not 1")
        object.__setattr__(self, "weights", w)

    def l1_distance(self, other) -> float:
        o = other.weights if isinstance(other, Density) else np.asarray(other, dtype=float)
        return float(np.abs(self.weights - o).sum())

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["cell", "weight"])
            for i, v in enumerate(self.weights):
                w.writerow([i, repr(float(v))])


def uniform_density(partition: Partition) -> Density:
    return Density(np.full(partition.M, 1.0 / partition.M), partition)


def _next_pow2(n: int) -> int:
    return 1 << max(0, math.ceil(math.log2(max(n, 1))))


def lattice_shape(m: MapSystem, samples_per_cell: int) -> tuple[int, int]:
    """Sub-grid points per cell along q and p for the lattice scheme."""
    if m.dimension == 1:
        return _next_pow2(samples_per_cell), 1
    k = _next_pow2(math.ceil(math.sqrt(samples_per_cell)))
    return k, k


def _bin_snapped(partition: Partition, q, p, kq: int, kp: int) -> np.ndarray:
    r = partition.region
    out = []
    axes = ((q, r.q_min, r.width, partition.cells_q, kq), (p, r.p_min, r.height, partition.cells_p, kp))
    for x, lo, width, cells, k in axes:
        u = (x - lo) / width * (cells * k)
        nearest = np.rint(u)
        snapped = np.abs(u - nearest) < SNAP_TOLERANCE
        # an image snapped onto the upper edge is the lower edge of the torus
        idx = np.where(snapped, np.mod(nearest, cells * k) // k, np.floor(u / k))
        out.append(np.clip(idx.astype(np.int64), 0, cells - 1))
    col, row = out
    return row * partition.cells_q + col


def _lattice_points(partition: Partition, cells: np.ndarray, kq: int, kp: int):
    r = partition.region
    row, col = np.divmod(cells, partition.cells_q)
    jq, jp = np.meshgrid(np.arange(kq), np.arange(kp), indexing="ij")
    jq, jp = jq.ravel(), jp.ravel()
    gq = (col[:, None] * kq + jq[None, :]).ravel()
    gp = (row[:, None] * kp + jp[None, :]).ravel()
    q = r.q_min + r.width * gq / (partition.cells_q * kq)
    p = r.p_min + r.height * gp / (partition.cells_p * kp)
    return q, p


def _random_points(partition: Partition, cell: int, n: int, seed):
    q_lo, q_hi, p_lo, p_hi = partition.cell_bounds(cell)
    u = np.random.default_rng(seed).random((2, n))
    q = np.minimum(q_lo + (q_hi - q_lo) * u[0], np.nextafter(q_hi, q_lo))
    p = np.minimum(p_lo + (p_hi - p_lo) * u[1], np.nextafter(p_hi, p_lo))
    return q, p


def build_ulam(
    m: MapSystem,
    partition: Partition,
    samples_per_cell: int = 1000,
    rng_seed: int = 0,
    scheme: str = "random",
    workers: int = 1,
) -> UlamOperator:
    """Row-stochastic Ulam matrix from forward images of per-cell samples."""
    if samples_per_cell < 100:
        raise ValidationError(f"samples_per_cell must be >= 100, got {samples_per_cell}")
    if scheme not in ("random", "lattice"):
        raise ValidationError(f"unknown Ulam scheme {scheme!r}; expected 'random' or 'lattice'")
    M = partition.M
    if scheme == "lattice":
        kq, kp = lattice_shape(m, samples_per_cell)
        per = kq * kp
    else:
        kq = kp = 0
        per = samples_per_cell
        seeds = np.random.SeedSequence(rng_seed).spawn(M)
    # keep each block at roughly a million points
    chunk = max(1, 1_000_000 // per)
    blocks = [np.arange(s, min(s + chunk, M)) for s in range(0, M, chunk)]

    def run(cells: np.ndarray) -> np.ndarray:
        if scheme == "lattice":
            q, p = _lattice_points(partition, cells, kq, kp)
        else:
            pts = [_random_points(partition, int(c), per, seeds[c]) for c in cells]
            q = np.concatenate([a for a, _ in pts])
            p = np.concatenate([b for _, b in pts])
        check_domain(q, p, m.name)
        q2, p2 = m.step(q, p)
        if not np.all(partition.region.contains(q2, p2)):
            raise OrbitEscapeError(f"image of {m.name} left the region")
        if scheme == "lattice":
            dest = _bin_snapped(partition, q2, p2, kq, kp)
        else:
            dest = partition._raw_indices(q2, p2)
        src = np.repeat(cells, per)
        return src * M + dest

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            keys = list(pool.map(run, blocks))
    else:
        keys = [run(b) for b in blocks]
    uniq, counts = np.unique(np.concatenate(keys), return_counts=True)
    rows, cols = np.divmod(uniq, M)
    mat = sp.csr_matrix((counts.astype(float), (rows, cols)), shape=(M, M))
    row_sums = np.asarray(mat.sum(axis=1)).ravel()
    mat = sp.diags(1.0 / row_sums) @ mat
    return UlamOperator(partition, mat.tocsr(), per, scheme, m.spec)


def _weights(density) -> np.ndarray:
    if isinstance(density, Density):
        return density.weights
    return np.asarray(density, dtype=float)


def apply_operator(op: UlamOperator, density) -> Density:
    """One Frobenius-Perron step ``f -> f P`` on cell weights."""
    w = _weights(density)
    if w.shape != (op.M,):
        raise ValidationError(f"density has shape {w.shape}, operator is {op.M}x{op.M}")
    out = op.matrix.T @ w
    out = np.maximum(out, 0.0)
    return Density(out / out.sum(), op.partition)


def fixed_density(
    op: UlamOperator, tolerance: float = 1e-10, max_iters: int = 10_000, start=None
) -> Density:
    """Power iteration for the invariant cell density, started from uniform.

    Stops once the L1 change between successive iterates drops below
    ``tolerance``.
    """
    if tolerance <= 0 or max_iters < 1:
        raise ValidationError("need tolerance > 0 and max_iters >= 1")
    f = np.full(op.M, 1.0 / op.M) if start is None else _weights(start).astype(float)
    if f.shape != (op.M,) or abs(f.sum() - 1.0) > 1e-9 or np.any(f < 0):
        raise NonNormalizedError("start density must be a normalised non-negative vector")
    PT = op.matrix.T.tocsr()
    residual = math.inf
    for _ in range(max_iters):
        g = PT @ f
        g /= g.sum()
        residual = float(np.abs(g - f).sum())
        f = g
        if residual < tolerance:
            return Density(f / f.sum(), op.partition)
    raise NonConvergenceError(
        f"power iteration did not converge in {max_iters} iterations (L1 change {residual:.3e})", residual
    )


def stationarity_residual(op: UlamOperator, density) -> float:
    w = _weights(density)
    return float(np.abs(op.matrix.T @ w - w).sum())


@dataclass(frozen=True)
class SpectralGap:
    slem: float
    gap: float
    iterations: int


def spectral_gap(
    op: UlamOperator, stationary=None, n_iter: int = 2000, window: int = 50, rng_seed: int = 0
) -> SpectralGap:
    """Second-largest eigenvalue modulus by power iteration with deflation.

    The stationary direction is removed by iterating ``v -> v (P - 1 pi)``.
    The modulus is read from the geometric growth over the last ``window``
    steps, which is insensitive to rotation inside complex eigenvalue pairs.
    """
    if stationary is None:
        stationary = fixed_density(op)
    pi = _weights(stationary)
    PT = op.matrix.T.tocsr()
    v = np.random.default_rng(rng_seed).standard_normal(op.M)
    v -= pi * v.sum()
    log_norms = []
    total = 0.0
    for k in range(n_iter):
        # (P - 1 pi)^T v = P^T v - pi * sum(v)
        v = PT @ v - pi * v.sum()
        norm = float(np.linalg.norm(v))
        if norm < 1e-300:
            return SpectralGap(0.0, 1.0, k + 1)
        total += math.log(norm)
        log_norms.append(total)
        v /= norm
    w = min(window, len(log_norms) - 1)
    slem = math.exp((log_norms[-1] - log_norms[-1 - w]) / w) if w > 0 else math.exp(log_norms[-1])
    return SpectralGap(slem, 1.0 - slem, n_iter)


def _cell_mask(partition: Partition, cells: Iterable[int]) -> np.ndarray:
    mask = np.zeros(partition.M, dtype=bool)
    idx = np.fromiter((int(c) for c in cells), dtype=np.int64)
    if idx.size == 0:
        raise ValidationError("cell sets must be non-empty")
    if idx.min() < 0 or idx.max() >= partition.M:
        raise ValidationError(f"cell indices must lie in [0, {partition.M})")
    mask[idx] = True
    return mask


@dataclass(frozen=True)
class CorrelationSeries:
    set_a: tuple[int, ...]
    set_b: tuple[int, ...]
    times: list[int]
    values: list[float]
    stderr: list[float]
    n_samples: int = 0
    map_spec: str = ""

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "C"])
            for t, c in zip(self.times, self.values):
                w.writerow([t, repr(c)])

    def max_abs(self, t_min: int = 0) -> float:
        return max(abs(c) for t, c in zip(self.times, self.values) if t >= t_min)


def _covariance(a: np.ndarray, b: np.ndarray) -> tuple[float, float]:
    """Sample covariance of two indicator arrays and its standard error."""
    n = a.size
    ma, mb = a.mean(), b.mean()
    d = (a - ma) * (b - mb)
    c = float(d.mean())
    return c, float(d.std() / math.sqrt(n))


def correlation_series(
    m: MapSystem,
    partition: Partition,
    set_a: Iterable[int],
    set_b: Iterable[int],
    t_max: int,
    n_samples: int = 1_000_000,
    rng_seed: int = 0,
) -> CorrelationSeries:
    """``C(t) = mu(T_t A & B) - mu(A) mu(B)`` for t = 0..t_max from one sample.

    A sample point ``x`` counts towards ``T_t A & B`` when ``x`` is in ``A``
    and ``T^t x`` is in ``B``. The estimator is the sample covariance of the
    two indicators, whose means estimate ``mu(A)`` and ``mu(B)`` because the
    map preserves the sampling measure.
    """
    if t_max < 0:
        raise ValidationError(f"t_max must be >= 0, got {t_max}")
    A = tuple(sorted(set(int(c) for c in set_a)))
    B = tuple(sorted(set(int(c) for c in set_b)))
    mask_a, mask_b = _cell_mask(partition, A), _cell_mask(partition, B)
    q, p = sample_uniform(partition, n_samples, rng_seed)
    check_domain(q, p, m.name)
    warn_precision(m, t_max)
    in_a = mask_a[partition._raw_indices(q, p)].astype(float)
    values, errs = [], []
    for t in range(t_max + 1):
        if t:
            q, p = m.step(q, p)
            if not np.all(partition.region.contains(q, p)):
                raise OrbitEscapeError(f"orbit of {m.name} left the region at t={t}")
        in_b = mask_b[partition._raw_indices(q, p)].astype(float)
        c, s = _covariance(in_a, in_b)
        values.append(c)
        errs.append(s)
    return CorrelationSeries(A, B, list(range(t_max + 1)), values, errs, n_samples, m.spec)


def mixing_correlation(
    m: MapSystem,
    partition: Partition,
    set_a: Iterable[int],
    set_b: Iterable[int],
    t: int,
    n_samples: int = 1_000_000,
    rng_seed: int = 0,
) -> float:
    if t < 0:
        raise ValidationError(f"t must be >= 0, got {t}")
    return correlation_series(m, partition, set_a, set_b, t, n_samples, rng_seed).values[-1]


def ulam_correlation(op: UlamOperator, set_a: Iterable[int], set_b: Iterable[int], t: int) -> float:
    """Markov-chain correlation ``u^T P^t v - mu(A) mu(B)`` with uniform cell weights."""
    mask_a = _cell_mask(op.partition, set_a).astype(float)
    mask_b = _cell_mask(op.partition, set_b).astype(float)
    u = mask_a / op.M
    v = mask_b
    for _ in range(t):
        v = op.matrix @ v
    return float(u @ v - mask_a.mean() * mask_b.mean())


def _sample_density(partition: Partition, density: Density, n: int, rng_seed: int):
    """Draw cells by weight, then a uniform point inside each drawn cell."""
    rng = np.random.default_rng(np.random.SeedSequence(rng_seed))
    cells = rng.choice(partition.M, size=n, p=density.weights)
    row, col = np.divmod(cells, partition.cells_q)
    u = rng.random((2, n))
    r = partition.region
    q = r.q_min + (col + u[0]) * partition.dq
    p = r.p_min + (row + u[1]) * partition.dp
    q = np.minimum(q, np.nextafter(r.q_min + (col + 1) * partition.dq, r.q_min))
    p = np.minimum(p, np.nextafter(r.p_min + (row + 1) * partition.dp, r.p_min))
    return q, p


def factorization_residual(
    m: MapSystem,
    partition: Partition,
    cell_sets: Sequence[Iterable[int]],
    t_gap: int,
    n_samples: int = 1_000_000,
    rng_seed: int = 0,
    density: Density | None = None,
) -> float:
    """``|E[1_A1(x) 1_A2(T^t x) ... 1_Ak(T^{(k-1)t} x)] - prod E[1_Ai]|``.

    Expectations are over the density ``density`` (uniform when omitted);
    the product uses the exact cell-weight measures of each set. For a
    general density, points are drawn cell by cell from its weights, which
    treats it as piecewise constant.
    """
    if len(cell_sets) < 2:
        raise ValidationError(f"need at least 2 cell sets, got {len(cell_sets)}")
    if t_gap < 0:
        raise ValidationError(f"t_gap must be >= 0, got {t_gap}")
    masks = [_cell_mask(partition, s) for s in cell_sets]
    if density is None:
        weights = np.full(partition.M, 1.0 / partition.M)
        q, p = sample_uniform(partition, n_samples, rng_seed)
    else:
        weights = density.weights
        q, p = _sample_density(partition, density, n_samples, rng_seed)
    check_domain(q, p, m.name)
    warn_precision(m, t_gap * (len(masks) - 1))
    hit = np.ones(n_samples, dtype=bool)
    for j, mask in enumerate(masks):
        if j:
            for _ in range(t_gap):
                q, p = m.step(q, p)
            if not np.all(partition.region.contains(q, p)):
                raise OrbitEscapeError(f"orbit of {m.name} left the region")
        hit &= mask[partition._raw_indices(q, p)]
    product = float(np.prod([weights[mask].sum() for mask in masks]))
    return abs(float(hit.mean()) - product)


def factorization_series(
    m: MapSystem,
    partition: Partition,
    cell_sets: Sequence[Iterable[int]],
    t_gaps: Iterable[int],
    n_samples: int = 1_000_000,
    rng_seed: int = 0,
    density: Density | None = None,
) -> list[tuple[int, float]]:
    return [
        (int(t), factorization_residual(m, partition, cell_sets, int(t), n_samples, rng_seed, density))
        for t in t_gaps
    ]
