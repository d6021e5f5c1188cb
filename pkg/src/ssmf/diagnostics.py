"""Path processes along random words and their (sub)martingale structure.

For a fixed frequency ``t`` the good vertices form a deterministic
environment on the lattice; a random word drawn from the aggregated weights
walks through it.  Index conventions: ``X[r, i]`` and ``Y[i]`` count over the
prefix path ``l(w[1,0]), ..., l(w[1,i])`` for ``i = 0..N``; ``Z[r, i-1]`` and
``U[i-1]`` hold ``Z_i^(r)`` and ``U_i`` for ``i = 1..N-1``.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InsufficientSamples, ValidationError
from .lattice import _default_rho, good_mask, vertex_values
from .measure import AggregatedWeights, IfsSpec, aggregate_weights

MIN_SAMPLES = 1000
_SUPPORT_TOL = 1e-9


def _probs(weights) -> np.ndarray:
    p = np.asarray(weights.p if isinstance(weights, AggregatedWeights) else weights, dtype=float)
    return p / p.sum()


def sample_word(weights, N: int, seed) -> np.ndarray:
    """I.i.d. letters in ``1..d`` with ``P(j) = p_j``; ``seed`` may be an int or a tuple."""
    rng = np.random.default_rng(seed)
    p = _probs(weights)
    return rng.choice(len(p), size=N, p=p) + 1


def sample_words(weights, N: int, seed: int, n: int, start: int = 0, tag: Sequence[int] = ()) -> np.ndarray:
    """``n`` words, row ``k`` drawn from the stream ``(seed, *tag, start + k)``.

    Each row has its own stream, so any split of the index range into
    chunks reproduces the same words.
    """
    return np.stack([sample_word(weights, N, (seed, *tag, start + k)) for k in range(n)]) \
        if n else np.zeros((0, N), dtype=np.int64)


def _compositions(r: int, d: int) -> np.ndarray:
    """All ``m`` in ``Z_+^d`` with ``|m| = r``."""
    out = [m for m in itertools.product(range(r + 1), repeat=d) if sum(m) == r]
    return np.array(out, dtype=np.int64).reshape(-1, d)


def _paths(words: np.ndarray, d: int) -> np.ndarray:
    S, N = words.shape
    steps = np.zeros((S, N + 1, d), dtype=np.int64)
    rows = np.repeat(np.arange(S), N)
    cols = np.tile(np.arange(1, N + 1), S)
    steps[rows, cols, words.ravel() - 1] = 1
    return np.cumsum(steps, axis=1)


def _descendant_tables(gamma, t: float, rho: float, verts: np.ndarray, r_max: int) -> np.ndarray:
    """``out[r, v]``: vertex ``verts[v]`` has a good descendant of level exactly ``r``."""
    d = len(gamma)
    out = np.zeros((r_max + 1, len(verts)), dtype=bool)
    for r in range(r_max + 1):
        offs = _compositions(r, d)
        cand = verts[:, None, :] + offs[None, :, :]
        out[r] = good_mask(vertex_values(gamma, t, cand), rho).any(axis=1)
    return out


@dataclass(frozen=True)
class PathProcessBatch:
    words: np.ndarray  # (S, N)
    X: np.ndarray      # (S, d+1, N+1)
    Y: np.ndarray      # (S, N+1)
    p_min: float
    p1: float

    @property
    def Z(self) -> np.ndarray:
        """``(S, d, N-1)``: ``Z_i^(r) = X_{i+1}^(r) / p_min - X_i^(r+1)``."""
        return self.X[:, :-1, 2:] / self.p_min - self.X[:, 1:, 1:-1]

    @property
    def U(self) -> np.ndarray:
        """``(S, N-1)``: ``U_i = Y_{i+1} / p1 - X_i``."""
        return self.Y[:, 2:] / self.p1 - self.X[:, 0, 1:-1]

    def __len__(self) -> int:
        return self.words.shape[0]

    def sample(self, k: int) -> PathProcessSample:
        return PathProcessSample(tuple(int(x) for x in self.words[k]), self.X[k], self.Y[k],
                                 self.Z[k], self.U[k], self.p_min, self.p1)


@dataclass(frozen=True)
class PathProcessSample:
    word: tuple[int, ...]
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    U: np.ndarray
    p_min: float
    p1: float


def path_processes_batch(spec: IfsSpec, t: float, rho: float | None, words,
                         weights: AggregatedWeights | None = None) -> PathProcessBatch:
    rho = _default_rho(spec, rho)
    d = spec.d
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    if weights is None:
        weights = aggregate_weights(spec)
    paths = _paths(words, d)
    verts, inv = np.unique(paths.reshape(-1, d), axis=0, return_inverse=True)
    inv = inv.reshape(paths.shape[:2])
    desc = _descendant_tables(spec.gamma, t, rho, verts, d)
    hits = desc[:, inv]                      # (d+1, S, N+1)
    X = np.cumsum(hits, axis=2).transpose(1, 0, 2)
    good_src = hits[0][:, :-1]               # source n_{k-1} of edge k
    edge = good_src & (words == 1)
    Y = np.concatenate([np.zeros((len(words), 1), dtype=np.int64), np.cumsum(edge, axis=1)], axis=1)
    return PathProcessBatch(words, X.astype(np.int64), Y.astype(np.int64), weights.p_min, weights.p1)


def path_processes(spec: IfsSpec, t: float, rho: float | None, w: Sequence[int],
                   weights: AggregatedWeights | None = None) -> PathProcessSample:
    return path_processes_batch(spec, t, rho, [list(w)], weights).sample(0)


def _as_batch(samples) -> PathProcessBatch:
    if isinstance(samples, PathProcessBatch):
        return samples
    samples = list(samples)
    if not samples:
        raise InsufficientSamples("no samples")
    return PathProcessBatch(
        np.array([s.word for s in samples]),
        np.stack([s.X for s in samples]),
        np.stack([s.Y for s in samples]),
        samples[0].p_min,
        samples[0].p1,
    )


def _in_support(x: np.ndarray, support: Sequence[float]) -> np.ndarray:
    return np.any(np.abs(x[..., None] - np.asarray(support)) <= _SUPPORT_TOL, axis=-1)


@dataclass(frozen=True)
class DriftStratum:
    i: int
    count: int
    mean: float
    se: float


@dataclass(frozen=True)
class DriftReport:
    """Stratified increments of a (sub)martingale.

    ``idle`` is the stratum where the proof forces a zero increment, ``active``
    the one with two possible jumps.
    """

    kind: str
    r: int | None
    samples: int
    idle_count: int
    idle_nonzero: int
    active_count: int
    active_up: int
    support: tuple[float, ...]
    support_ok: bool
    drift: float
    drift_se: float
    drift_ok: bool
    per_i: tuple[DriftStratum, ...]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "r": self.r,
            "samples": self.samples,
            "idle_count": self.idle_count,
            "idle_nonzero": self.idle_nonzero,
            "active_count": self.active_count,
            "active_up": self.active_up,
            "support": list(self.support),
            "support_ok": self.support_ok,
            "drift": self.drift,
            "drift_se": self.drift_se,
            "drift_ci_lo": self.drift - 3 * self.drift_se,
            "drift_ci_hi": self.drift + 3 * self.drift_se,
            "drift_ok": self.drift_ok,
            "per_i": [[s.i, s.count, s.mean, s.se] for s in self.per_i],
        }


def _stratified(kind: str, r, inc: np.ndarray, active: np.ndarray, up_value: float,
                submartingale: bool) -> DriftReport:
    support = (0.0, -1.0, up_value)
    idle = ~active
    act = inc[active]
    n = int(act.size)
    mean = float(act.mean()) if n else 0.0
    se = float(act.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    ok = mean >= -3 * se if submartingale else abs(mean) <= 3 * se
    per_i = []
    for col in range(inc.shape[1]):
        vals = inc[:, col][active[:, col]]
        if vals.size >= 2:
            per_i.append(DriftStratum(col + 2, int(vals.size), float(vals.mean()),
                                      float(vals.std(ddof=1) / math.sqrt(vals.size))))
    return DriftReport(
        kind=kind,
        r=r,
        samples=inc.shape[0],
        idle_count=int(idle.sum()),
        idle_nonzero=int(np.count_nonzero(np.abs(inc[idle]) > _SUPPORT_TOL)),
        active_count=n,
        active_up=int(np.count_nonzero(np.abs(act - up_value) <= _SUPPORT_TOL)),
        support=support,
        support_ok=bool(_in_support(inc, support).all()
                        and _in_support(act, support[1:]).all()),
        drift=mean,
        drift_se=se,
        drift_ok=bool(ok),
        per_i=tuple(per_i),
    )


def submartingale_check(samples, r: int, min_samples: int = MIN_SAMPLES) -> DriftReport:
    """Increments of ``Z^(r)`` split by whether ``X^(r+1)`` moved at step ``i``."""
    batch = _as_batch(samples)
    if len(batch) < min_samples:
        raise InsufficientSamples(f"{len(batch)} samples < {min_samples}")
    d = batch.X.shape[1] - 1
    if not 0 <= r < d:
        raise ValidationError(f"r must be in 0..{d - 1}, got {r}")
    Z = batch.Z[:, r, :]
    inc = np.diff(Z, axis=1)                                 # i = 2..N-1
    Xn = batch.X[:, r + 1, :]
    active = (Xn[:, 2:-1] - Xn[:, 1:-2]) == 1               # X_i^(r+1) - X_{i-1}^(r+1)
    return _stratified("Z", r, inc, active, 1.0 / batch.p_min - 1.0, submartingale=True)


def martingale_check(samples, weights: AggregatedWeights | None = None,
                     min_samples: int = MIN_SAMPLES) -> DriftReport:
    """Increments of ``U`` split by whether the source vertex ``n_i`` is good."""
    batch = _as_batch(samples)
    if len(batch) < min_samples:
        raise InsufficientSamples(f"{len(batch)} samples < {min_samples}")
    p1 = weights.p1 if weights is not None else batch.p1
    inc = np.diff(batch.U, axis=1)
    X0 = batch.X[:, 0, :]
    active = (X0[:, 2:-1] - X0[:, 1:-2]) == 1
    return _stratified("U", None, inc, active, 1.0 / p1 - 1.0, submartingale=False)


@dataclass(frozen=True)
class TailBoundParams:
    delta_r: tuple[float, ...]   # indexed by r = 0..d
    delta: float


def delta_chain(d: int, k1: int, p_min: float, p1: float) -> TailBoundParams:
    if k1 < 1:
        raise ValidationError(f"k1 must be >= 1, got {k1}")
    for name, p in (("p_min", p_min), ("p1", p1)):
        if not 0.0 < p <= 1.0:
            raise ValidationError(f"{name}={p!r} is not a probability in (0, 1]")
    deltas = [0.0] * (d + 1)
    deltas[d] = 1.0 / ((d + 1) * k1)
    for r in range(d - 1, -1, -1):
        deltas[r] = deltas[r + 1] * p_min / 3
    return TailBoundParams(tuple(deltas), deltas[0] * p1 / 3)


def azuma_rhs(delta_next: float, p_min: float, N: float) -> float:
    return math.exp(-N * p_min**2 * delta_next**2 / 18)


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    denom = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


@dataclass(frozen=True)
class TailRow:
    N: int
    t: float
    count: int
    trials: int
    p_hat: float
    ci_lo: float
    ci_hi: float


@dataclass(frozen=True)
class TailReport:
    delta: float
    rows: tuple[TailRow, ...]
    c_hat: float
    nonincreasing_within_ci: bool

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "rows": [[r.N, r.t, r.count, r.trials, r.p_hat, r.ci_lo, r.ci_hi] for r in self.rows],
            "row_columns": ["N", "t", "count", "trials", "p_hat", "ci_lo", "ci_hi"],
            "c_hat": self.c_hat,
            "nonincreasing_within_ci": self.nonincreasing_within_ci,
        }


def _tail_chunk(args) -> int:
    spec, t, rho, p, N, delta, seed, start, n = args
    words = sample_words(p, N, seed, n, start, tag=(N,))
    batch = path_processes_batch(spec, t, rho, words)
    return int(np.count_nonzero(batch.Y[:, -1] < delta * N))


def tail_estimate(spec: IfsSpec, t: float | Callable[[int], float], rho: float | None,
                  weights: AggregatedWeights | None, N_list: Sequence[int], delta: float,
                  trials: int, seed: int = 0, threads: int = 1,
                  min_samples: int = MIN_SAMPLES) -> TailReport:
    """Empirical ``P(Y_N < delta N)`` for each ``N``.

    ``t`` is either fixed or a function of ``N`` (for instance a point of the
    block ``(B1**(N-1), B1**N]``).  ``c_hat`` is the slope of
    ``log((count + 1/2) / (trials + 1))`` against ``N``.
    """
    if trials < min_samples:
        raise InsufficientSamples(f"{trials} trials < {min_samples}")
    rho = _default_rho(spec, rho)
    weights = weights or aggregate_weights(spec)
    p = tuple(weights.p)
    chunk = max(1, math.ceil(trials / max(1, threads)))
    rows = []
    for N in N_list:
        tN = float(t(N)) if callable(t) else float(t)
        tasks = [(spec, tN, rho, p, N, delta, seed, s, min(chunk, trials - s))
                 for s in range(0, trials, chunk)]
        if threads > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=len(tasks)) as pool:
                count = sum(pool.map(_tail_chunk, tasks))
        else:
            count = sum(_tail_chunk(task) for task in tasks)
        lo, hi = wilson_interval(count, trials)
        rows.append(TailRow(int(N), tN, count, trials, count / trials, lo, hi))
    c_hat = math.nan
    if len(rows) >= 2:
        x = np.array([r.N for r in rows], dtype=float)
        y = np.log([(r.count + 0.5) / (r.trials + 1) for r in rows])
        c_hat = float(np.polyfit(x, y, 1)[0])
    mono = all(b.ci_lo <= a.ci_hi for a, b in zip(rows, rows[1:]))
    return TailReport(delta, tuple(rows), c_hat, mono)


def _batch_chunk(args) -> PathProcessBatch:
    spec, t, rho, p, N, seed, start, n = args
    return path_processes_batch(spec, t, rho, sample_words(p, N, seed, n, start))


def sample_path_processes(spec: IfsSpec, t: float, rho: float | None, N: int, trials: int,
                          seed: int, threads: int = 1) -> PathProcessBatch:
    """Path processes for ``trials`` words; row ``k`` uses stream ``(seed, k)``."""
    rho = _default_rho(spec, rho)
    weights = aggregate_weights(spec)
    p = tuple(weights.p)
    chunk = max(1, math.ceil(trials / max(1, threads)))
    tasks = [(spec, t, rho, p, N, seed, s, min(chunk, trials - s)) for s in range(0, trials, chunk)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=len(tasks)) as pool:
            parts = list(pool.map(_batch_chunk, tasks))
    else:
        parts = [_batch_chunk(task) for task in tasks]
    return PathProcessBatch(
        np.concatenate([b.words for b in parts]),
        np.concatenate([b.X for b in parts]),
        np.concatenate([b.Y for b in parts]),
        weights.p_min,
        weights.p1,
    )
