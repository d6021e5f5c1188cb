"""Fourier transform of self-similar measures.

The self-similarity relation gives

    mu^(t) = sum_j Phi_j(t) * mu^(gamma_j t),   Phi_j(t) = sum_k p_k^(j) exp(i a_k^(j) t).

Unfolding it ``L`` times produces a sum over words whose terms depend on a
word only through its letter counts, so the sum is carried on the type-vector
lattice instead of over ``m**L`` words.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence, TextIO

import numpy as np

from .errors import DegenerateFit, TolTooSmall, ValidationError
from .measure import IfsSpec, SupportInterval, discretize, support_interval

DEFAULT_MAX_LEVELS = 10_000
_CHUNK_CELLS = 2_000_000


@dataclass(frozen=True)
class FourierValue:
    value: complex
    error_bound: float
    levels: int = 0


@dataclass(frozen=True)
class DecayBlock:
    N: int
    sup_abs: float
    argmax_t: float


@dataclass(frozen=True)
class DecayCurve:
    """Grid sups of ``|mu^|`` over the blocks ``(B1**(N-1), B1**N]``.

    A sup over a finite grid is a lower bound for the true block sup.
    """

    B1: float
    blocks: tuple[DecayBlock, ...]
    alpha_hat: float = math.nan
    fit_residual: float = math.nan
    alpha_running: tuple[float, ...] = field(default=(), compare=False)


@lru_cache(maxsize=256)
def _support(spec: IfsSpec) -> SupportInterval:
    return support_interval(spec)


def phase_factor(spec: IfsSpec, j: int, t):
    """``Phi_j(t)``; ``t`` may be a scalar or an array."""
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape, dtype=complex)
    for a, p in zip(spec.translations[j], spec.probs[j]):
        out += p * np.exp(1j * a * t)
    return out[()] if out.ndim == 0 else out


def ft_bruteforce(spec: IfsSpec, t: float, N: int) -> FourierValue:
    """Direct sum over the ``m**N`` atoms of :func:`discretize`."""
    sup = _support(spec)
    atoms, weights = discretize(spec, N, sup.midpoint)
    value = complex(np.sum(weights * np.exp(1j * t * atoms)))
    return FourierValue(value, abs(t) * spec.gamma_max**N * sup.radius, N)


def _levels_needed(spec: IfsSpec, tmax: float, R: float, tol: float, cap: int) -> int:
    if not math.isfinite(tmax):
        raise ValidationError(f"frequency must be finite, got {tmax!r}")
    if tmax * R <= tol:
        return 0
    L = max(0, math.ceil((math.log(tmax) + math.log(R) - math.log(tol)) / -math.log(spec.gamma_max)))
    if L > cap + 1:
        raise TolTooSmall(f"tol={tol!r} at |t|={tmax!r} needs about {L} lattice levels (cap {cap})")
    # guard against rounding in the log estimate
    while L > 0 and spec.gamma_max ** (L - 1) * tmax * R <= tol:
        L -= 1
    while spec.gamma_max**L * tmax * R > tol:
        L += 1
    if L > cap:
        raise TolTooSmall(f"tol={tol!r} at |t|={tmax!r} needs {L} lattice levels (cap {cap})")
    return L


def _lattice_batch(spec: IfsSpec, ts: np.ndarray, L: int, x0: float, masses: list | None = None):
    """Run the lattice recursion to level ``L`` for every frequency in ``ts``.

    Level ``l`` is stored as a dense array over ``(n_1, ..., n_{d-1})`` with
    ``n_d = l - sum``; cells with ``n_d < 0`` stay zero.
    """
    d = spec.d
    T = ts.shape[0]
    logg = np.log(np.asarray(spec.gamma, dtype=float))
    C = np.ones((1,) * (d - 1) + (T,), dtype=complex)
    for level in range(L + 1):
        shape = (level + 1,) * (d - 1)
        grids = np.indices(shape) if d > 1 else np.zeros((0,), dtype=int)
        head = grids.sum(axis=0) if d > 1 else 0
        tail = level - head
        logs = np.full(shape, level * logg[-1]) if d == 1 else tail * logg[-1]
        for j in range(d - 1):
            logs = logs + grids[j] * logg[j]
        if d > 1:
            logs = np.where(tail >= 0, logs, -np.inf)
        s = np.exp(logs)[..., None] * ts
        if masses is not None:
            masses.append(float(np.abs(C).sum(axis=tuple(range(d - 1))).max()) if d > 1
                          else float(np.abs(C).max()))
        if level == L:
            return (C * np.exp(1j * s * x0)).reshape(-1, T).sum(axis=0)
        new = np.zeros((level + 2,) * (d - 1) + (T,), dtype=complex)
        core = tuple(slice(0, level + 1) for _ in range(d - 1))
        new[core] += C * phase_factor(spec, d - 1, s)
        for j in range(d - 1):
            idx = list(core)
            idx[j] = slice(1, level + 2)
            new[tuple(idx)] += C * phase_factor(spec, j, s)
        C = new
    raise AssertionError("unreachable")


def ft_lattice_many(spec: IfsSpec, ts: Sequence[float], tol: float = 1e-8,
                    max_levels: int = DEFAULT_MAX_LEVELS) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate ``mu^`` at many frequencies with one shared depth.

    The depth is the one required by ``max |t|``, so every returned error
    bound is at most ``tol``.  Returns ``(values, error_bounds)``.
    """
    if tol <= 0:
        raise TolTooSmall("tol must be positive")
    ts = np.asarray(ts, dtype=float).ravel()
    if ts.size == 0:
        return np.zeros(0, dtype=complex), np.zeros(0)
    sup = _support(spec)
    R = sup.radius
    L = _levels_needed(spec, float(np.max(np.abs(ts))), R, tol, max_levels)
    cells = max(1, (L + 1) ** (spec.d - 1))
    step = max(1, _CHUNK_CELLS // cells)
    values = np.empty(ts.size, dtype=complex)
    for start in range(0, ts.size, step):
        chunk = ts[start:start + step]
        values[start:start + step] = _lattice_batch(spec, chunk, L, sup.midpoint)
    return values, spec.gamma_max**L * np.abs(ts) * R


def ft_lattice(spec: IfsSpec, t: float, tol: float = 1e-8,
               max_levels: int = DEFAULT_MAX_LEVELS) -> FourierValue:
    """``mu^(t)`` to within ``tol`` by the type-vector recursion.

    Stops at the first level ``L`` with ``gamma_max**L * |t| * R <= tol`` and
    replaces each terminal ``mu^(s)`` by ``exp(i s x0)``.
    """
    if tol <= 0:
        raise TolTooSmall("tol must be positive")
    sup = _support(spec)
    L = _levels_needed(spec, abs(t), sup.radius, tol, max_levels)
    value = _lattice_batch(spec, np.array([float(t)]), L, sup.midpoint)[0]
    return FourierValue(complex(value), spec.gamma_max**L * abs(t) * sup.radius, L)


def coefficient_masses(spec: IfsSpec, t: float, tol: float = 1e-8) -> list[float]:
    """``sum_n |c_n|`` at each lattice level (diagnostic)."""
    sup = _support(spec)
    L = _levels_needed(spec, abs(t), sup.radius, tol, DEFAULT_MAX_LEVELS)
    masses: list[float] = []
    _lattice_batch(spec, np.array([float(t)]), L, sup.midpoint, masses)
    return masses


def ft_homogeneous_product(lam: float, a: Sequence[float], p: Sequence[float], t: float,
                           M: int | None = None) -> FourierValue:
    """Infinite-convolution formula for a single contraction ratio.

    The digit set is recentered to mean zero before truncating the product
    at ``n = M``; the removed mean contributes the exact phase
    ``exp(i t abar / (1 - lam))``.  With ``M=None`` the product runs until
    the truncation bound drops below 1e-14.
    """
    a = np.asarray(a, dtype=float)
    p = np.asarray(p, dtype=float)
    abar = float(p @ a)
    ac = a - abar
    R = float(np.max(np.abs(ac)))
    if M is None:
        M = 0
        while lam ** (M + 1) * abs(t) * R / (1 - lam) > 1e-14 and M < 100_000:
            M += 1
    s = lam ** np.arange(M + 1) * t
    factors = np.exp(1j * np.outer(s, ac)) @ p
    value = np.exp(1j * t * abar / (1 - lam)) * np.prod(factors)
    return FourierValue(complex(value), lam ** (M + 1) * abs(t) * R / (1 - lam), M)


def block_grid(B1: float, N: int, M: int) -> np.ndarray:
    """``M`` log-spaced points in ``(B1**(N-1), B1**N]``, right end included."""
    return B1 ** (N - 1 + np.arange(1, M + 1) / M)


def _block_sup(args) -> tuple[int, float, float]:
    spec, B1, N, M, tol = args
    ts = block_grid(B1, N, M)
    vals, _ = ft_lattice_many(spec, ts, tol)
    k = int(np.argmax(np.abs(vals)))
    return N, float(abs(vals[k])), float(ts[k])


def _fit(Ns, sups, B1: float) -> tuple[float, float]:
    Ns = np.asarray(Ns, dtype=float)
    sups = np.asarray(sups, dtype=float)
    if np.all(sups < 1e-12):
        raise DegenerateFit("every block sup is below 1e-12")
    keep = sups >= 1e-12
    if keep.sum() < 2:
        raise DegenerateFit("fewer than two blocks above 1e-12")
    x = Ns[keep] * math.log(B1)
    y = -np.log(sups[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    return float(slope), float(np.sqrt(np.mean(resid**2)))


def fit_alpha(curve: DecayCurve) -> float:
    """Least-squares slope of ``-log sup_abs`` against ``N log B1``."""
    return _fit([b.N for b in curve.blocks], [b.sup_abs for b in curve.blocks], curve.B1)[0]


def decay_scan(spec: IfsSpec, N0: int, N1: int, M: int = 256, tol: float = 1e-8,
               threads: int = 1) -> DecayCurve:
    """Block sups of ``|mu^|`` for ``N0 <= N <= N1`` and the fitted exponent.

    Work is split by block, so the result does not depend on ``threads``.
    """
    if N0 < 1 or N1 < N0:
        raise ValueError(f"need 1 <= N0 <= N1, got N0={N0}, N1={N1}")
    if M < 16:
        raise ValueError(f"grid needs at least 16 points per block, got {M}")
    B1 = float(spec.B1 if spec.B1 is not None else 1.0 / spec.gamma_max)
    tasks = [(spec, B1, N, M, tol) for N in range(N0, N1 + 1)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as pool:
            rows = list(pool.map(_block_sup, tasks))
    else:
        rows = [_block_sup(task) for task in tasks]
    blocks = tuple(DecayBlock(N, s, ta) for N, s, ta in rows)

    running = []
    for k in range(1, len(blocks) + 1):
        if k < 4:
            running.append(math.nan)
            continue
        try:
            running.append(_fit([b.N for b in blocks[:k]], [b.sup_abs for b in blocks[:k]], B1)[0])
        except DegenerateFit:
            running.append(math.nan)
    alpha, resid = math.nan, math.nan
    if len(blocks) >= 4:
        alpha, resid = _fit([b.N for b in blocks], [b.sup_abs for b in blocks], B1)
    return DecayCurve(B1, blocks, alpha, resid, tuple(running))


CSV_COLUMNS = ("N", "t_argmax", "sup_abs", "alpha_hat_running")


def write_decay_csv(curve: DecayCurve, fh: TextIO, config_line: str | None = None) -> None:
    """CSV with a leading ``# config:`` comment and an ``# alpha_hat`` footer."""
    if config_line is not None:
        fh.write(f"# config: {config_line}\n")
    fh.write(",".join(CSV_COLUMNS) + "\n")
    for block, run in zip(curve.blocks, curve.alpha_running):
        fh.write(f"{block.N},{block.argmax_t!r},{block.sup_abs!r},{run!r}\n")
    fh.write(f"# alpha_hat={curve.alpha_hat!r},fit_residual={curve.fit_residual!r}\n")
