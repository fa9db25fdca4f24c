"""Partition entropies, KS-entropy estimates and the graininess bound.

Two entropy series are available:

``entropy_series``
    H[n] = H(Q v T_s^{-1} Q v ... v T_s^{-n} Q) for the grid partition Q,
    estimated from one shared Monte Carlo sample. Its slope is the
    (stride-rescaled) KS-entropy and it can never outgrow (n+1) log M.

``spreading_series``
    H[n] = H(x_n | x_0), the entropy of the grid cells visited at lag n by
    points started inside a single grain, averaged over a few grains. It
    grows at the stretching rate and stops once one grain has spread over
    all M cells, i.e. after about log(M) / h_KS steps. This is the series
    used for the logarithmic timescale.

All entropies are in nats.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import MapSystem
from .errors import NoSaturationError, NonNormalizedError, ValidationError, WindowTooShortError
from .measure import JointDistribution, iter_symbols, relabel, sample_uniform
from .phase_space import Partition, quasiclassical_parameter

EXHAUSTION_FRACTION = 0.1


def partition_entropy(weights) -> float:
    """Shannon entropy ``-sum w log w`` with ``0 log 0 = 0``."""
    if isinstance(weights, JointDistribution):
        w = weights.frequencies
    else:
        w = np.asarray(weights, dtype=float).ravel()
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise NonNormalizedError("weights must be finite and non-negative")
    if abs(w.sum() - 1.0) > 1e-9:
        raise NonNormalizedError(f"weights sum to {w.sum()!r}, not 1")
    w = w[w > 0]
    return float(-(w * np.log(w)).sum())


def _entropy_stats(counts: np.ndarray, total: int) -> tuple[float, float]:
    """Plug-in entropy and its delta-method standard error."""
    w = counts / total
    logw = np.log(w)
    H = float(-(w * logw).sum())
    second = float((w * logw * logw).sum())
    sigma = math.sqrt(max(second - H * H, 0.0) / total)
    return H, sigma


@dataclass(frozen=True)
class EntropySeries:
    stride: int
    depths: list[int]
    H: list[float]
    bound: list[float]
    distinct: list[int]
    sigma: list[float]
    eps_mc: list[float]
    flagged: list[bool]
    total_samples: int
    M: int
    kind: str = "refinement"
    map_spec: str = ""

    @property
    def increments(self) -> list[float]:
        return [b - a for a, b in zip(self.H[:-1], self.H[1:])]

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "H", "bound", "increment"])
            for i, n in enumerate(self.depths):
                inc = repr(self.H[i] - self.H[i - 1]) if i else ""
                w.writerow([n, repr(self.H[i]), repr(self.bound[i]), inc])

    def write_plot(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "H"])
            for n, h in zip(self.depths, self.H):
                w.writerow([n, repr(h)])

    def to_dict(self) -> dict:
        return asdict(self)


def entropy_series(
    m: MapSystem,
    partition: Partition,
    n_max: int,
    stride: int = 1,
    n_samples: int = 1_000_000,
    rng_seed: int = 0,
    shards: int = 1,
    bias_correction: str | None = None,
) -> EntropySeries:
    """Refined-partition entropies H[0..n_max] from one shared sample set.

    Depths whose distinct-itinerary count exceeds 10% of the samples are
    flagged as sample-exhausted (biased low) and left out of default fit
    windows. ``bias_correction="miller-madow"`` adds (K - 1) / (2N).
    """
    if n_max < 1:
        raise ValidationError(f"n_max must be >= 1, got {n_max}")
    if bias_correction not in (None, "miller-madow"):
        raise ValidationError(f"unknown bias correction {bias_correction!r}")
    q, p = sample_uniform(partition, n_samples, rng_seed, shards)
    ids = np.zeros(n_samples, dtype=np.int64)
    logq = math.log(quasiclassical_parameter(partition))
    H, bound, distinct, sigma, eps, flagged = [], [], [], [], [], []
    for n, sym in enumerate(iter_symbols(m, partition, q, p, n_max, stride)):
        ids, counts = relabel(ids, sym, partition.M)
        h, s = _entropy_stats(counts, n_samples)
        K = int(counts.size)
        bias = (K - 1) / (2.0 * n_samples)
        if bias_correction == "miller-madow":
            h += bias
        H.append(h)
        bound.append((n + 1) * logq)
        distinct.append(K)
        sigma.append(s)
        eps.append(3.0 * s + bias)
        flagged.append(K > EXHAUSTION_FRACTION * n_samples)
    return EntropySeries(
        stride, list(range(n_max + 1)), H, bound, distinct, sigma, eps, flagged, n_samples, partition.M,
        "refinement", m.spec,
    )


def spreading_series(
    m: MapSystem,
    partition: Partition,
    n_max: int,
    stride: int = 1,
    n_samples: int = 1_000_000,
    rng_seed: int = 0,
    n_grains: int = 4,
) -> EntropySeries:
    """Entropy of the cell distribution of one grain's image, H(x_n | x_0).

    ``n_grains`` cells are picked at random and each receives an equal share
    of uniform samples. The cap is log M: once a grain has spread over every
    cell there is nothing left to resolve. Depths within log 2 of the
    (sample-limited) cap are flagged.
    """
    if n_max < 1:
        raise ValidationError(f"n_max must be >= 1, got {n_max}")
    M = partition.M
    ss = np.random.SeedSequence(rng_seed)
    pick_seed, sample_seed = ss.spawn(2)
    n_grains = min(n_grains, M)
    grains = np.sort(np.random.default_rng(pick_seed).choice(M, size=n_grains, replace=False))
    per = n_samples // n_grains
    if per < 1:
        raise ValidationError("need at least one sample per grain")
    rng = np.random.default_rng(sample_seed)
    curves = np.zeros((n_grains, n_max + 1))
    sigmas = np.zeros((n_grains, n_max + 1))
    counts_at = np.zeros((n_grains, n_max + 1), dtype=np.int64)
    for g, cell in enumerate(grains):
        q_lo, q_hi, p_lo, p_hi = partition.cell_bounds(cell)
        u = rng.random((2, per))
        q = np.minimum(q_lo + (q_hi - q_lo) * u[0], np.nextafter(q_hi, q_lo))
        p = np.minimum(p_lo + (p_hi - p_lo) * u[1], np.nextafter(p_hi, p_lo))
        for n, sym in enumerate(iter_symbols(m, partition, q, p, n_max, stride)):
            c = np.bincount(sym, minlength=M)
            c = c[c > 0]
            curves[g, n], sigmas[g, n] = _entropy_stats(c, per)
            counts_at[g, n] = c.size
    H = curves.mean(axis=0)
    sigma = np.sqrt((sigmas**2).sum(axis=0)) / n_grains
    cap = math.log(min(M, per))
    bias = (counts_at.mean(axis=0) - 1) / (2.0 * per)
    return EntropySeries(
        stride,
        list(range(n_max + 1)),
        [float(h) for h in H],
        [math.log(M)] * (n_max + 1),
        [int(k) for k in counts_at.max(axis=0)],
        [float(s) for s in sigma],
        [float(3 * s + b) for s, b in zip(sigma, bias)],
        [bool(h > cap - math.log(2.0)) for h in H],
        per * n_grains,
        M,
        "spreading",
        m.spec,
    )


@dataclass(frozen=True)
class KsEstimate:
    h_ks_tau: float
    h_ks: float
    stride: int
    method: str
    fit_window: tuple[int, int]
    stderr: float
    saturation_depth: int | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit_window"] = list(self.fit_window)
        return d


def _valid_increments(series: EntropySeries) -> list[int]:
    f = series.flagged
    return [n for n in range(len(series.H) - 1) if not f[n] and not f[n + 1]]


def default_window(series: EntropySeries, length: int = 3, flatness: float = 0.1) -> tuple[int, int]:
    """Latest run of ``length`` consecutive unflagged, nearly constant increments.

    Conditional entropies approach the entropy rate from above, so later
    increments are preferred; a run qualifies when the spread of its
    increments is at most ``flatness`` times their mean. Without a
    qualifying run the flattest one is used. Shorter runs are accepted when
    no run of full length exists, down to two increments (three depths).
    """
    valid = set(_valid_increments(series))
    inc = series.increments
    for L in range(length, 1, -1):
        latest, flattest, best_score = None, None, math.inf
        for start in range(len(inc) - L + 1):
            run = range(start, start + L)
            if not all(n in valid for n in run):
                continue
            d = np.array([inc[n] for n in run])
            spread = float(d.max() - d.min())
            score = spread / max(abs(float(d.mean())), 1e-12) if spread > 0 else 0.0
            if score <= flatness:
                latest = start
            if score < best_score - 1e-12:
                flattest, best_score = start, score
        start = latest if latest is not None else flattest
        if start is not None:
            return start, start + L
    raise WindowTooShortError(
        f"fewer than 3 consecutive unflagged depths in a series of {len(series.H)} "
        f"(flagged: {[n for n, f in enumerate(series.flagged) if f]})"
    )


def ks_estimate(
    series: EntropySeries,
    method: str = "increment-average",
    fit_window: tuple[int, int] | None = None,
    threshold_fraction: float = 0.5,
) -> KsEstimate:
    """Entropy rate of a series, divided by the stride.

    ``fit_window = (n_lo, n_hi)`` selects depths ``n_lo..n_hi`` inclusive; by
    default it is chosen by :func:`default_window`.
    """
    if method not in ("increment-average", "slope-fit"):
        raise ValidationError(f"unknown method {method!r}")
    if fit_window is None:
        lo, hi = default_window(series)
    else:
        lo, hi = int(fit_window[0]), int(fit_window[1])
        if lo < 0 or hi >= len(series.H):
            raise ValidationError(f"window {fit_window} outside depths 0..{len(series.H) - 1}")
        if hi - lo + 1 < 3:
            raise WindowTooShortError(f"window {fit_window} has fewer than 3 depths")
        if any(series.flagged[lo : hi + 1]):
            warnings.warn(f"fit window {fit_window} includes sample-exhausted depths", RuntimeWarning, stacklevel=2)
    H = np.asarray(series.H[lo : hi + 1])
    d = np.diff(H)
    if method == "increment-average":
        rate = float(d.mean())
    else:
        rate = float(np.polyfit(np.arange(lo, hi + 1), H, 1)[0])
    spread = float(d.std(ddof=1)) / math.sqrt(d.size) if d.size > 1 else 0.0
    mc = math.hypot(series.sigma[lo], series.sigma[hi]) / (hi - lo)
    stderr = math.hypot(spread, mc)
    tau = series.stride
    try:
        n_star = saturation_depth(series, threshold_fraction, rate)
    except NoSaturationError:
        n_star = None
    return KsEstimate(rate, rate / tau, tau, method, (lo, hi), stderr, n_star)


def saturation_depth(series: EntropySeries, threshold_fraction: float = 0.5, rate: float | None = None) -> int:
    """First depth n whose next increment falls below ``threshold_fraction * rate``.

    ``rate`` defaults to the increment-average estimate of the series. A
    non-positive rate means the series never grew, and 0 is returned.
    """
    if rate is None:
        rate = ks_estimate(series, threshold_fraction=threshold_fraction).h_ks_tau
    if rate <= 0:
        return 0
    for n, d in enumerate(series.increments):
        if d < threshold_fraction * rate:
            return n
    raise NoSaturationError(f"increments stay above {threshold_fraction} x {rate:.4g} up to n={len(series.H) - 1}")


@dataclass(frozen=True)
class BoundReport:
    h_ks: float
    bound_value: float
    satisfied: bool
    slack: float
    log_timescale: float
    non_chaotic: bool
    tolerance: float
    stride: int
    q_param: float

    def to_dict(self) -> dict:
        d = asdict(self)
        if math.isinf(self.log_timescale):
            d["log_timescale"] = None
        return d

    def summary(self) -> str:
        tau = "inf" if math.isinf(self.log_timescale) else f"{self.log_timescale:.3g}"
        return (
            f"h_KS={self.h_ks:.3f} bound={self.bound_value:.3g} "
            f"satisfied={str(self.satisfied).lower()} tau_log={tau}"
            + (" non_chaotic=true" if self.non_chaotic else "")
        )


def bound_report(
    estimate: KsEstimate,
    partition: Partition,
    stride: int | None = None,
    n_sigma: float = 3.0,
    chaos_threshold: float = 0.02,
) -> BoundReport:
    """Compare an estimate with log(q) / tau and derive log(q) / h_KS.

    Estimates below ``chaos_threshold`` nats per step are reported as
    non-chaotic with an infinite logarithmic timescale.
    """
    tau = estimate.stride if stride is None else int(stride)
    if tau < 1:
        raise ValidationError(f"stride must be >= 1, got {tau}")
    q = quasiclassical_parameter(partition)
    bound = math.log(q) / tau
    tol = n_sigma * estimate.stderr / tau
    h = estimate.h_ks_tau / tau
    non_chaotic = h < chaos_threshold
    return BoundReport(
        h_ks=h,
        bound_value=bound,
        satisfied=bool(h <= bound + tol),
        slack=bound - h,
        log_timescale=math.inf if non_chaotic else math.log(q) / h,
        non_chaotic=bool(non_chaotic),
        tolerance=tol,
        stride=tau,
        q_param=q,
    )


def write_json(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
