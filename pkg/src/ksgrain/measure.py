"""Monte Carlo estimates of refined-partition cell measures.

A sample point ``x`` drawn from normalised Lebesgue measure on the region is
coded by its itinerary ``(c(x), c(T^s x), ..., c(T^{ns} x))`` where ``c`` is
the grid cell index and ``s`` the stride. Because every catalogue map
preserves Lebesgue measure, the fraction of samples sharing an itinerary
estimates the measure of the corresponding refined cell, so no map inverses
are needed.

Random streams: ``rng_seed`` seeds a :class:`numpy.random.SeedSequence`
which is split with ``spawn(shards)``; shard ``k`` draws its share of points
from its own child stream. Results are bit-identical for a fixed
``(rng_seed, shards)`` pair regardless of ``workers``.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Iterator

import numpy as np

from .dynamics import MapSystem, check_domain, warn_precision
from .errors import OrbitEscapeError, ValidationError
from .phase_space import Partition, cell_index


@dataclass(frozen=True)
class Itinerary:
    symbols: tuple[int, ...]
    stride: int = 1

    def __len__(self) -> int:
        return len(self.symbols)

    def key(self) -> str:
        return "-".join(str(s) for s in self.symbols)


def shard_sizes(n_samples: int, shards: int) -> list[int]:
    base, extra = divmod(n_samples, shards)
    return [base + (1 if k < extra else 0) for k in range(shards)]


def sample_uniform(partition: Partition, n_samples: int, rng_seed: int, shards: int = 1):
    """Uniform points on the partition's region as two arrays ``(q, p)``."""
    if n_samples < 1:
        raise ValidationError(f"n_samples must be >= 1, got {n_samples}")
    if shards < 1:
        raise ValidationError(f"shards must be >= 1, got {shards}")
    children = np.random.SeedSequence(rng_seed).spawn(shards)
    qs, ps = [], []
    for child, size in zip(children, shard_sizes(n_samples, shards)):
        q, p = _uniform_block(partition, size, child)
        qs.append(q)
        ps.append(p)
    return np.concatenate(qs), np.concatenate(ps)


def _uniform_block(partition: Partition, size: int, seed) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    r = partition.region
    u = rng.random((2, size))
    q = r.q_min + r.width * u[0]
    p = r.p_min + r.height * u[1]
    # q_min + width * u can round up to q_max when u is close to 1
    q = np.where(q >= r.q_max, np.nextafter(r.q_max, r.q_min), q)
    p = np.where(p >= r.p_max, np.nextafter(r.p_max, r.p_min), p)
    return q, p


def iter_symbols(
    m: MapSystem, partition: Partition, q: np.ndarray, p: np.ndarray, n: int, stride: int = 1
) -> Iterator[np.ndarray]:
    """Yield the cell-index array at lags 0, 1, ..., n (stride map steps apart)."""
    if n < 0 or stride < 1:
        raise ValidationError(f"need n >= 0 and stride >= 1, got n={n}, stride={stride}")
    check_domain(q, p, m.name)
    warn_precision(m, n * stride)
    for j in range(n + 1):
        if j:
            for _ in range(stride):
                q, p = m.step(q, p)
            if not np.all(partition.region.contains(q, p)):
                raise OrbitEscapeError(f"orbit of {m.name} left the region at lag {j}")
        yield partition._raw_indices(q, p)


def relabel(ids: np.ndarray, symbols: np.ndarray, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Refine prefix labels by one more symbol.

    Returns ``(new_ids, counts)`` with ``new_ids`` dense in ``[0, K)`` and
    ordered lexicographically by itinerary.
    """
    _, new_ids, counts = np.unique(ids * M + symbols, return_inverse=True, return_counts=True)
    return new_ids.reshape(-1), counts


def itinerary_of(m: MapSystem, partition: Partition, point, n: int, stride: int = 1) -> Itinerary:
    pt = np.atleast_1d(np.asarray(point, dtype=float)).ravel()
    q = pt[0]
    p = pt[1] if pt.size > 1 else partition.region.p_min
    cell_index(partition, (q, p))
    syms = [int(s[0]) for s in iter_symbols(m, partition, np.array([q]), np.array([p]), n, stride)]
    return Itinerary(tuple(syms), stride)


@dataclass(frozen=True)
class JointDistribution:
    """Itinerary histogram at a fixed depth.

    ``itineraries`` holds one row per distinct itinerary (lexicographic order)
    and ``counts`` the matching sample counts.
    """

    depth: int
    stride: int
    itineraries: np.ndarray
    counts: np.ndarray
    total_samples: int
    partition: Partition

    @property
    def distinct(self) -> int:
        return int(self.counts.size)

    @property
    def frequencies(self) -> np.ndarray:
        return self.counts / self.total_samples

    def as_dict(self) -> dict[tuple[int, ...], int]:
        return {tuple(int(s) for s in row): int(c) for row, c in zip(self.itineraries, self.counts)}

    def marginal(self, lag: int = 0) -> np.ndarray:
        """Cell frequencies at one lag; a length-``M`` vector."""
        if not 0 <= lag <= self.depth:
            raise ValidationError(f"lag {lag} outside [0, {self.depth}]")
        w = np.bincount(self.itineraries[:, lag], weights=self.counts, minlength=self.partition.M)
        return w / self.total_samples

    def merge(self, other: "JointDistribution") -> "JointDistribution":
        if (self.depth, self.stride, self.partition) != (other.depth, other.stride, other.partition):
            raise ValidationError("can only merge distributions with equal depth, stride and partition")
        itins, counts = aggregate(
            np.concatenate([self.itineraries, other.itineraries]),
            np.concatenate([self.counts, other.counts]),
            self.partition.M,
        )
        return JointDistribution(
            self.depth, self.stride, itins, counts, self.total_samples + other.total_samples, self.partition
        )

    def sidecar(self) -> dict:
        return {
            "depth": self.depth,
            "stride": self.stride,
            "total_samples": self.total_samples,
            "partition": self.partition.to_dict(),
        }

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["itinerary", "count"])
            for row, c in zip(self.itineraries, self.counts):
                w.writerow(["-".join(str(int(s)) for s in row), int(c)])

    def write(self, csv_path: str | Path, json_path: str | Path) -> None:
        self.write_csv(csv_path)
        Path(json_path).write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, csv_path: str | Path, json_path: str | Path) -> "JointDistribution":
        meta = json.loads(Path(json_path).read_text())
        rows, counts = [], []
        with open(csv_path, newline="") as fh:
            reader = csv.DictReader(fh)
            for rec in reader:
                rows.append([int(s) for s in rec["itinerary"].split("-")])
                counts.append(int(rec["count"]))
        part = Partition.from_dict(meta["partition"])
        itins = np.array(rows, dtype=np.int64).reshape(-1, meta["depth"] + 1)
        return cls(meta["depth"], meta["stride"], itins, np.array(counts, dtype=np.int64), meta["total_samples"], part)


def aggregate(itineraries: np.ndarray, counts: np.ndarray, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Combine duplicate itinerary rows, summing their counts."""
    ids = np.zeros(len(counts), dtype=np.int64)
    for col in itineraries.T:
        ids, _ = relabel(ids, col.astype(np.int64), M)
    first = np.unique(ids, return_index=True)[1]
    summed = np.bincount(ids, weights=counts).astype(np.int64)
    return itineraries[first], summed


def _joint_block(m, partition, q, p, n, stride):
    cols = list(iter_symbols(m, partition, q, p, n, stride))
    sym = np.stack(cols, axis=1).astype(np.int64)
    ids = np.zeros(len(q), dtype=np.int64)
    for col in cols:
        ids, _ = relabel(ids, col, partition.M)
    uniq, first, counts = np.unique(ids, return_index=True, return_counts=True)
    return sym[first], counts.astype(np.int64)


def sample_joint(
    m: MapSystem,
    partition: Partition,
    n: int,
    stride: int = 1,
    n_samples: int = 100_000,
    rng_seed: int = 0,
    shards: int = 1,
    workers: int = 1,
) -> JointDistribution:
    if n_samples < 1:
        raise ValidationError(f"n_samples must be >= 1, got {n_samples}")
    children = np.random.SeedSequence(rng_seed).spawn(shards)
    sizes = shard_sizes(n_samples, shards)

    def run(k):
        q, p = _uniform_block(partition, sizes[k], children[k])
        return _joint_block(m, partition, q, p, n, stride)

    if workers > 1 and shards > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            blocks = list(pool.map(run, range(shards)))
    else:
        blocks = [run(k) for k in range(shards)]
    if len(blocks) == 1:
        itins, counts = blocks[0]
    else:
        itins, counts = aggregate(
            np.concatenate([b[0] for b in blocks]), np.concatenate([b[1] for b in blocks]), partition.M
        )
    return JointDistribution(n, stride, itins, counts, n_samples, partition)


def measure_of_cellset(
    distribution: JointDistribution, cell_predicate: Callable[[int], bool] | Iterable[int]
) -> float:
    """Estimated measure of the set of points whose lag-0 cell satisfies the predicate."""
    M = distribution.partition.M
    if callable(cell_predicate):
        mask = np.array([bool(cell_predicate(i)) for i in range(M)], dtype=bool)
    else:
        mask = np.zeros(M, dtype=bool)
        idx = list(cell_predicate)
        if idx:
            mask[np.asarray(idx, dtype=np.int64)] = True
    hit = mask[distribution.itineraries[:, 0]]
    return int(distribution.counts[hit].sum()) / distribution.total_samples
