"""Finite-dimensional quantum mechanics on the torus.

States live in C^N with position basis ``|k>``, k in Z_N, and effective
Planck constant ``h_eff = 1/N``. For odd N the discrete Wigner function is

    W[q, p] = (1/N) sum_y rho[q + y, q - y] * omega^(-2 p y),   omega = exp(2 pi i / N)

with indices mod N. It is real, sums to 1, its p-marginal is the diagonal of
``rho``, and ``sum W_rho * (N W_O) == Tr(rho O)`` holds exactly. The quantized
cat map transports it classically: ``W_{U rho U^+}(S x) = W_rho(x)`` with
``S = [[2, 1], [1, 1]]`` acting on the lattice Z_N x Z_N.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .dynamics import MapSystem
from .errors import (
    EigensolverError,
    EvenDimensionError,
    GridMismatchError,
    NonNormalizedError,
    ValidationError,
)

DEGENERACY_THRESHOLD = 1e-9


@dataclass(frozen=True)
class QuantumSystem:
    dim: int
    propagator: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        U = np.asarray(self.propagator, dtype=complex)
        if U.shape != (self.dim, self.dim):
            raise ValidationError(f"propagator shape {U.shape} does not match dim={self.dim}")
        err = np.linalg.norm(U.conj().T @ U - np.eye(self.dim))
        if err > 1e-10:
            raise ValidationError(f"propagator is not unitary (||U^+U - I||_F = {err:.2e})")
        object.__setattr__(self, "propagator", U)

    @property
    def h_eff(self) -> float:
        return 1.0 / self.dim


def _check_odd(N: int) -> None:
    if N % 2 == 0:
        raise EvenDimensionError(f"dimension must be odd for the discrete Wigner grid, got {N}")


def dft_matrix(N: int) -> np.ndarray:
    """Unitary DFT with ``F|k> = N^{-1/2} sum_j omega^(jk) |j>``."""
    j = np.arange(N)
    return np.exp(2j * np.pi * np.outer(j, j) / N) / math.sqrt(N)


def quantized_cat(N: int) -> QuantumSystem:
    """Quantized cat map ``(q, p) -> (2q + p, q + p)`` on Z_N x Z_N, N odd.

    Built as a momentum kick ``p -> p + q`` followed by a free shear
    ``q -> q + p``; the quadratic phases use the inverse of 2 mod N.
    """
    _check_odd(N)
    if N < 3:
        raise ValidationError(f"dimension must be >= 3, got {N}")
    half = (N + 1) // 2
    k = np.arange(N)
    # exponents reduced mod N before exponentiating keeps the phases exact
    kick = np.exp(2j * np.pi * ((half * k * k) % N) / N)
    F = dft_matrix(N)
    shear = F @ np.diag(kick.conj()) @ F.conj().T
    U = shear @ np.diag(kick)
    return QuantumSystem(N, U, "cat")


def validate_density(rho, tol: float = 1e-10) -> np.ndarray:
    r = np.asarray(rho, dtype=complex)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValidationError(f"density operator must be square, got shape {r.shape}")
    if np.abs(r - r.conj().T).max() > 1e-12:
        raise NonNormalizedError("density operator is not Hermitian")
    if abs(np.trace(r) - 1.0) > 1e-12:
        raise NonNormalizedError(f"density operator has trace {np.trace(r).real!r}, not 1")
    if np.linalg.eigvalsh(r).min() < -tol:
        raise NonNormalizedError("density operator has a negative eigenvalue")
    return r


def validate_observable(O) -> np.ndarray:
    o = np.asarray(O, dtype=complex)
    if o.ndim != 2 or o.shape[0] != o.shape[1]:
        raise ValidationError(f"observable must be square, got shape {o.shape}")
    if np.abs(o - o.conj().T).max() > 1e-12:
        raise ValidationError("observable is not Hermitian")
    return o


def maximally_mixed(N: int) -> np.ndarray:
    return np.eye(N, dtype=complex) / N


def position_state(N: int, k: int) -> np.ndarray:
    rho = np.zeros((N, N), dtype=complex)
    rho[k % N, k % N] = 1.0
    return rho


def random_pure_state(N: int, rng) -> np.ndarray:
    """Haar-random pure state as a density matrix."""
    rng = np.random.default_rng(rng)
    psi = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


def random_mixed_state(N: int, rng, rank: int | None = None) -> np.ndarray:
    rng = np.random.default_rng(rng)
    G = rng.standard_normal((N, rank or N)) + 1j * rng.standard_normal((N, rank or N))
    rho = G @ G.conj().T
    return rho / np.trace(rho).real


def random_observable(N: int, rng) -> np.ndarray:
    rng = np.random.default_rng(rng)
    A = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    return (A + A.conj().T) / 2


def position_window(N: int, lo: int, hi: int) -> np.ndarray:
    """Projector onto position basis states ``lo <= k < hi``."""
    if not 0 <= lo < hi <= N:
        raise ValidationError(f"window [{lo}, {hi}) must lie inside [0, {N})")
    d = np.zeros(N)
    d[lo:hi] = 1.0
    return np.diag(d).astype(complex)


def purity(rho) -> float:
    r = np.asarray(rho)
    return float(np.real(np.trace(r @ r)))


def evolve(system: QuantumSystem, rho, t_steps: int) -> np.ndarray:
    """``U^t rho U^{+t}``."""
    if t_steps < 0:
        raise ValidationError(f"t_steps must be >= 0, got {t_steps}")
    Ut = np.linalg.matrix_power(system.propagator, t_steps)
    return Ut @ np.asarray(rho, dtype=complex) @ Ut.conj().T


@dataclass(frozen=True)
class Eigenspaces:
    phases: np.ndarray
    projectors: list[np.ndarray]


def eigenspaces(system: QuantumSystem, threshold: float = DEGENERACY_THRESHOLD) -> Eigenspaces:
    """Spectral projectors of the propagator, grouping eigenphases closer than ``threshold``."""
    try:
        T, Z = scipy.linalg.schur(system.propagator, output="complex")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverError(f"Schur decomposition failed: {exc}") from exc
    off = np.linalg.norm(np.triu(T, 1))
    if not np.isfinite(off) or off > 1e-8:
        raise EigensolverError(f"propagator is not numerically normal (off-diagonal norm {off:.2e})")
    phases = np.angle(np.diag(T))
    order = np.argsort(phases)
    sp = phases[order]
    # split the sorted phases at gaps, then merge across the -pi/pi seam
    cuts = np.flatnonzero(np.diff(sp) > threshold) + 1
    groups = [list(g) for g in np.split(order, cuts)]
    if len(groups) > 1 and (sp[0] + 2 * np.pi - sp[-1]) <= threshold:
        groups[0] = groups.pop() + groups[0]
    projectors = []
    for g in groups:
        V = Z[:, g]
        projectors.append(V @ V.conj().T)
    return Eigenspaces(np.array([phases[g[0]] for g in groups]), projectors)


def stationary_state(system: QuantumSystem, rho0, threshold: float = DEGENERACY_THRESHOLD) -> np.ndarray:
    """Dephase ``rho0`` in the propagator eigenbasis: ``sum_k P_k rho0 P_k``.

    This is the long-time average of ``rho(t)`` and commutes with ``U``.
    """
    rho = np.asarray(rho0, dtype=complex)
    out = np.zeros_like(rho)
    for P in eigenspaces(system, threshold).projectors:
        out += P @ rho @ P
    return (out + out.conj().T) / 2


def check_stationarity(system: QuantumSystem, rho) -> float:
    """Frobenius norm of ``U rho U^+ - rho``."""
    return float(np.linalg.norm(evolve(system, rho, 1) - np.asarray(rho)))


def expectation(rho, O) -> float:
    return float(np.real(np.trace(np.asarray(rho) @ np.asarray(O))))


def quantum_correlation(system: QuantumSystem, rho0, observable, t_steps: int, rho_star=None) -> float:
    """``Tr(rho(t) O) - Tr(rho* O)``."""
    if rho_star is None:
        rho_star = stationary_state(system, rho0)
    return expectation(evolve(system, rho0, t_steps), observable) - expectation(rho_star, observable)


@dataclass(frozen=True)
class QuantumCorrelationSeries:
    times: list[int]
    values: list[float]
    mean_abs: float
    fluctuation: float
    dim: int

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "C"])
            for t, c in zip(self.times, self.values):
                w.writerow([t, repr(c)])


def quantum_correlation_series(
    system: QuantumSystem, rho0, observable, t_max: int
) -> QuantumCorrelationSeries:
    """Correlations for t = 0..t_max with their time-averaged size.

    ``mean_abs`` is the average of |C| over t = 1..t_max and ``fluctuation``
    its root mean square; in finite dimension these stay positive because
    the dynamics is quasi-periodic.
    """
    if t_max < 0:
        raise ValidationError(f"t_max must be >= 0, got {t_max}")
    rho_star = stationary_state(system, rho0)
    ref = expectation(rho_star, observable)
    U = system.propagator
    rho = np.asarray(rho0, dtype=complex)
    values = []
    for t in range(t_max + 1):
        if t:
            rho = U @ rho @ U.conj().T
        values.append(expectation(rho, observable) - ref)
    tail = np.abs(np.array(values[1:])) if t_max else np.zeros(1)
    return QuantumCorrelationSeries(
        list(range(t_max + 1)), values, float(tail.mean()), float(np.sqrt((tail**2).mean())), system.dim
    )


def quantum_period(system: QuantumSystem, max_period: int | None = None, tol: float = 1e-8) -> int | None:
    """Smallest t >= 1 with ``U^t`` proportional to the identity, if any up to ``max_period``."""
    N = system.dim
    max_period = max_period or 4 * N
    U = system.propagator
    V = np.eye(N, dtype=complex)
    for t in range(1, max_period + 1):
        V = U @ V
        phase = V[0, 0]
        if abs(abs(phase) - 1) < tol and np.abs(V - phase * np.eye(N)).max() < tol:
            return t
    return None


@dataclass(frozen=True)
class WignerGrid:
    values: np.ndarray

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["q_index", "p_index", "value"])
            N = self.dim
            for q in range(N):
                for p in range(N):
                    w.writerow([q, p, repr(float(self.values[q, p]))])


def _wigner_kernel(A: np.ndarray) -> np.ndarray:
    """``(1/N) sum_y A[q+y, q-y] omega^(-2py)`` on the full grid, via FFT."""
    N = A.shape[0]
    q = np.arange(N)[:, None]
    y = np.arange(N)[None, :]
    g = A[(q + y) % N, (q - y) % N]
    G = np.fft.fft(g, axis=1) / N
    return G[:, (2 * np.arange(N)) % N]


def discrete_wigner(rho) -> WignerGrid:
    r = np.asarray(rho, dtype=complex)
    _check_odd(r.shape[0])
    W = _wigner_kernel(r)
    # imaginary parts are rounding noise for Hermitian input
    return WignerGrid(np.real(W).copy())


def weyl_symbol(O) -> np.ndarray:
    """Discrete Weyl symbol ``N * W_O``, so that ``Tr(rho O) = sum W_rho * symbol``."""
    o = np.asarray(O, dtype=complex)
    _check_odd(o.shape[0])
    return np.real(o.shape[0] * _wigner_kernel(o))


def expectation_wigner(rho, observable) -> float:
    """Phase-space pairing ``sum_{q,p} W_rho[q,p] * O~[q,p]``."""
    return float((discrete_wigner(rho).values * weyl_symbol(observable)).sum())


def lattice_permutation(classical_map: MapSystem, N: int, tol: float = 1e-9) -> np.ndarray:
    """Flat index of the image of each lattice point ``(k/N, l/N)``.

    Raises :class:`GridMismatchError` unless the map sends the Z_N x Z_N
    lattice onto itself bijectively.
    """
    k, l = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    q, p = classical_map.step(k.ravel() / N, l.ravel() / N)
    uq, up = np.asarray(q) * N, np.asarray(p) * N
    iq, ip = np.rint(uq), np.rint(up)
    if np.abs(uq - iq).max() > tol or np.abs(up - ip).max() > tol:
        raise GridMismatchError(f"{classical_map.spec} does not map the {N}x{N} lattice onto itself")
    dest = (iq.astype(np.int64) % N) * N + (ip.astype(np.int64) % N)
    if np.unique(dest).size != N * N:
        raise GridMismatchError(f"{classical_map.spec} is not a bijection of the {N}x{N} lattice")
    return dest


def push_forward(W: np.ndarray, perm: np.ndarray) -> np.ndarray:
    """``W o T^{-1}``: the value at ``T x`` is the old value at ``x``."""
    out = np.empty(W.size)
    out[perm] = W.ravel()
    return out.reshape(W.shape)


def wigner_transport_residual(system: QuantumSystem, rho, classical_map: MapSystem) -> float:
    """``max |W_{U rho U^+} - W_rho o T^{-1}|`` on the lattice."""
    _check_odd(system.dim)
    perm = lattice_permutation(classical_map, system.dim)
    W0 = discrete_wigner(rho).values
    W1 = discrete_wigner(evolve(system, rho, 1)).values
    return float(np.abs(W1 - push_forward(W0, perm)).max())


def wigner_invariance_residual(rho, classical_map: MapSystem) -> float:
    """``max |W_rho o T^{-1} - W_rho|``: zero when W_rho is a fixed point of the classical action."""
    W = discrete_wigner(rho).values
    perm = lattice_permutation(classical_map, W.shape[0])
    return float(np.abs(push_forward(W, perm) - W).max())
