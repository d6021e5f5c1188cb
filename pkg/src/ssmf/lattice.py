"""Type-vector lattice, goodness predicates and digit reconstruction.

Vertices are points ``n`` of ``Z_+^d``; a word ``w`` over ``{1..d}`` traces
the path ``l(w[1,0]) -> l(w[1,1]) -> ...``.  The frequency attached to a
vertex is ``gamma**n * t``, always computed in extended precision
(``np.longdouble``) so that distances to the nearest integer stay meaningful
for ``t`` up to about ``1e15``.
"""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence, TextIO

import numpy as np

from .bounds import A_of, rho_of
from .errors import BadK, PathTooShort, ValidationError
from .fourier import block_grid
from .measure import IfsSpec

Word = tuple[int, ...]


def _gamma(spec) -> tuple[float, ...]:
    return spec.gamma if isinstance(spec, IfsSpec) else tuple(float(g) for g in spec)


def _default_rho(spec, rho: float | None) -> float:
    if rho is not None:
        return float(rho)
    if not isinstance(spec, IfsSpec) or spec.B2 is None:
        raise ValidationError("rho not given and spec carries no B2")
    return float(rho_of(spec.B2))


def subsets(d: int) -> np.ndarray:
    """All ``2**d`` 0/1 vectors, empty subset first."""
    return np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)


def vertex_values(gamma: Sequence[float], t: float, ns) -> np.ndarray:
    """``gamma**n * t`` for an array of vertices (last axis = coordinates)."""
    logg = np.log(np.asarray(gamma, dtype=np.longdouble))
    ns = np.asarray(ns, dtype=np.longdouble)
    return np.longdouble(t) * np.exp(ns @ logg)


def vertex_value(spec, t: float, n) -> np.longdouble:
    return vertex_values(_gamma(spec), t, np.asarray(n)[None, :])[0]


def type_vector(w: Sequence[int], d: int) -> tuple[int, ...]:
    counts = [0] * d
    for letter in w:
        if not 1 <= letter <= d:
            raise ValidationError(f"letter {letter!r} outside alphabet 1..{d}")
        counts[letter - 1] += 1
    return tuple(counts)


def path_vertices(w: Sequence[int], d: int) -> np.ndarray:
    """``(len(w) + 1, d)`` array of prefix type vectors, starting at 0."""
    w = np.asarray(w, dtype=np.int64)
    steps = np.zeros((len(w) + 1, d), dtype=np.int64)
    if len(w):
        steps[np.arange(1, len(w) + 1), w - 1] = 1
    return np.cumsum(steps, axis=0)


def nearest_integer_split(x) -> tuple[int, float]:
    """``x = K + eps`` with ``eps`` in ``[-1/2, 1/2)``; halves round up."""
    K = math.floor(x + 0.5) if not isinstance(x, np.floating) else int(np.floor(x + np.longdouble(0.5)))
    return int(K), float(x - K)


def _split_array(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    K = np.floor(x + np.longdouble(0.5))
    return K, x - K


def good_mask(values: np.ndarray, rho: float) -> np.ndarray:
    _, eps = _split_array(values)
    return (values >= 1) & (np.abs(eps) >= rho)


def is_good_vertex(spec, t: float, n, rho: float | None = None) -> bool:
    rho = _default_rho(spec, rho)
    x = vertex_value(spec, t, n)
    return bool(good_mask(np.array([x]), rho)[0])


def is_on_good_track(spec, t: float, n, rho: float | None = None) -> bool:
    """Some ``n + sum_{k in G} e_k`` is good, ``G`` ranging over all subsets."""
    rho = _default_rho(spec, rho)
    gamma = _gamma(spec)
    cand = np.asarray(n, dtype=np.int64)[None, :] + subsets(len(gamma))
    return bool(good_mask(vertex_values(gamma, t, cand), rho).any())


def is_good_edge(spec, t: float, n, rho: float | None = None) -> bool:
    """Edge ``n -> n + e_1`` is good exactly when ``n`` is good."""
    return is_good_vertex(spec, t, n, rho)


def ek_candidates(K1: int, K2: int, B2: float) -> list[int]:
    """Possible ``K_n`` given ``K1 = K_{n+e_j}`` and ``K2 = K_{n+2e_j}``.

    Integers ``K >= 0`` within ``(A - 1)/2`` of ``K1**2 / K2``.
    """
    if K2 < 1:
        raise BadK(f"K2 = {K2} must be >= 1")
    center = Fraction(int(K1) ** 2, int(K2))
    radius = (A_of(B2) - 1) / 2
    lo = max(0, math.ceil(center - radius))
    hi = math.floor(center + radius)
    return list(range(lo, hi + 1))


def ek_reconstruct_unique(K1: int, K2: int, B2: float | None = None, rho: float | None = None) -> int:
    """Nearest integer to ``K1**2 / K2`` (halves up), exact in integers.

    Valid when the three digits involved all sit within ``rho`` of their
    frequencies, ``rho <= 1/(4(1+B2)(1+3B2))``.
    """
    if K2 < 1:
        raise BadK(f"K2 = {K2} must be >= 1")
    if B2 is not None and rho is not None and Fraction(rho) > rho_of(B2):
        raise ValidationError(f"rho={rho!r} exceeds the uniqueness radius {float(rho_of(B2))!r}")
    K1, K2 = int(K1), int(K2)
    return (2 * K1 * K1 + K2) // (2 * K2)


@dataclass(frozen=True)
class StepRecord:
    i: int
    letter: int
    branching: bool
    max_candidates: int


@dataclass(frozen=True)
class Reconstruction:
    q: int
    gamma_inv_center: tuple[float, ...]
    gamma_inv_halfwidth: tuple[float, ...]
    branching_steps: int
    good_track_count: int
    log: tuple[StepRecord, ...]
    consistent: bool

    def contains(self, gamma: Sequence[float]) -> bool:
        return all(abs(1.0 / g - c) <= h for g, c, h in
                   zip(gamma, self.gamma_inv_center, self.gamma_inv_halfwidth))


def good_track_count(spec, t: float, w: Sequence[int], rho: float | None = None) -> int:
    """Vertices ``l(w[1,i])``, ``d+1 <= i <= N-d-1``, that are on a good track."""
    rho = _default_rho(spec, rho)
    gamma = _gamma(spec)
    d, N = len(gamma), len(w)
    path = path_vertices(w, d)[d + 1:N - d]
    if len(path) == 0:
        return 0
    cand = path[:, None, :] + subsets(d)[None, :, :]
    good = good_mask(vertex_values(gamma, t, cand), rho)
    return int(good.any(axis=1).sum())


def reconstruct_along_path(spec: IfsSpec, t: float, w: Sequence[int],
                           rho: float | None = None) -> Reconstruction:
    """Replay the backward digit reconstruction along the path of ``w``.

    Starting from the digits ``K_v`` around the cutoff vertex ``n_q`` (the
    last one with ``gamma**n_q * t >= B2**d``), each step back to ``n_{i-1}``
    recovers the ``K_v`` with ``n_{i-1} ~> v`` from two known neighbours.
    A step is *branching* when some triple has a digit farther than ``rho``
    from its frequency, so only the candidate list (at most ``A`` entries)
    is known.  Forward digits are used as the ground truth throughout and
    every recovered or candidate value is checked against them.
    """
    rho = _default_rho(spec, rho)
    gamma = spec.gamma
    d, B2 = spec.d, float(spec.B2)
    path = path_vertices(w, d)
    vals = vertex_values(gamma, t, path)
    above = np.nonzero(vals >= np.longdouble(B2) ** d)[0]
    if len(above) == 0 or above[-1] < 1:
        raise PathTooShort(f"no q >= 1 with gamma^n_q t >= B2^d = {B2 ** d!r}")
    q = int(above[-1])

    subs = subsets(d)
    forward: dict[tuple[int, ...], tuple[int, float]] = {}

    def digit(v: tuple[int, ...]) -> tuple[int, float]:
        if v not in forward:
            K, eps = _split_array(vertex_values(gamma, t, np.array([v]))[[0]])
            forward[v] = (int(K[0]), float(eps[0]))
        return forward[v]

    known: dict[tuple[int, ...], int] = {}
    for G in subs:
        v = tuple(int(x) for x in path[q] + G)
        known[v] = digit(v)[0]

    consistent = True
    log = []
    for i in range(q, 0, -1):
        n = path[i - 1]
        j = int(w[i - 1]) - 1
        ej = np.zeros(d, dtype=np.int64)
        ej[j] = 1
        branching, widest = False, 1
        for G in subs:
            v = tuple(int(x) for x in n + G)
            if G[j]:
                consistent &= v in known
                continue
            v1 = tuple(int(x) for x in n + G + ej)
            v2 = tuple(int(x) for x in n + G + 2 * ej)
            K, eps = digit(v)
            K1, K2 = known[v1], known[v2]
            small = max(abs(eps), abs(digit(v1)[1]), abs(digit(v2)[1])) < rho
            if small:
                consistent &= ek_reconstruct_unique(K1, K2) == K
            else:
                branching = True
                cands = ek_candidates(K1, K2, B2)
                widest = max(widest, len(cands))
                consistent &= K in cands
            known[v] = K
        log.append(StepRecord(i, j + 1, branching, widest))

    zero = (0,) * d
    K0 = known[zero]
    centers, halves = [], []
    for j in range(d):
        Kj = known[tuple(int(k == j) for k in range(d))]
        centers.append(K0 / Kj)
        halves.append((1 + B2) / Kj)
    return Reconstruction(
        q=q,
        gamma_inv_center=tuple(centers),
        gamma_inv_halfwidth=tuple(halves),
        branching_steps=sum(r.branching for r in log),
        good_track_count=good_track_count(spec, t, w, rho),
        log=tuple(log),
        consistent=bool(consistent),
    )


@dataclass(frozen=True)
class ScanReport:
    t: float
    word: Word
    good_track_count: int
    threshold: float
    is_exceptional_witness: bool

    def to_json(self) -> str:
        sep = "" if max(self.word, default=0) < 10 else ","
        return json.dumps({
            "t": self.t,
            "word": sep.join(str(x) for x in self.word),
            "good_track_count": self.good_track_count,
            "threshold": self.threshold,
            "witness": self.is_exceptional_witness,
        })


def _scan_chunk(args) -> np.ndarray:
    gamma, ts, verts, inv, n_paths, rho = args
    d = len(gamma)
    gpow = vertex_values(gamma, 1.0, verts)
    out = np.empty((len(ts), n_paths), dtype=np.int64)
    for k, t in enumerate(ts):
        good = good_mask(np.longdouble(t) * gpow, rho)
        gt = good[inv].reshape(-1, 2**d).any(axis=1).reshape(n_paths, -1)
        out[k] = gt.sum(axis=1)
    return out


def scan_counts(spec: IfsSpec, ts: Sequence[float], words: np.ndarray, rho: float,
                threads: int = 1) -> np.ndarray:
    """Good-track counts for every ``(t, word)`` pair, shape ``(len(ts), n_words)``.

    Only path indices ``d+1 <= i <= N-d-1`` are counted.
    """
    d = spec.d
    words = np.asarray(words, dtype=np.int64)
    n_words, N = words.shape
    steps = np.zeros((n_words, N + 1, d), dtype=np.int64)
    rows = np.repeat(np.arange(n_words), N)
    cols = np.tile(np.arange(1, N + 1), n_words)
    steps[rows, cols, words.ravel() - 1] = 1
    paths = np.cumsum(steps, axis=1)[:, d + 1:N - d, :]
    ts = np.asarray(ts, dtype=float)
    if paths.shape[1] == 0:
        return np.zeros((len(ts), n_words), dtype=np.int64)
    cand = paths[:, :, None, :] + subsets(d)[None, None, :, :]
    verts, inv = np.unique(cand.reshape(-1, d), axis=0, return_inverse=True)
    inv = inv.ravel()
    chunks = np.array_split(ts, max(1, min(threads, len(ts))))
    tasks = [(spec.gamma, c, verts, inv, n_words, rho) for c in chunks if len(c)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=len(tasks)) as pool:
            parts = list(pool.map(_scan_chunk, tasks))
    else:
        parts = [_scan_chunk(task) for task in tasks]
    return np.concatenate(parts, axis=0)


def exceptional_scan(spec: IfsSpec, N: int, k1: int, rho: float | None, t_grid_size: int,
                     word_sampler: Callable[[int], Sequence[int]], n_words: int,
                     threads: int = 1) -> list[ScanReport]:
    """Heuristic search for exceptional-set witnesses at scale ``N``.

    ``t`` runs over a log grid of ``(B1**(N-1), B1**N]`` and words come from
    ``word_sampler(index)``.  A finite grid with sampled words can exhibit a
    witness but never certify that none exists.
    """
    d = spec.d
    if N < 2 * (d + 2):
        raise ValidationError(f"need N >= 2(d+2) = {2 * (d + 2)}, got N={N}")
    rho = _default_rho(spec, rho)
    ts = block_grid(float(spec.B1), N, t_grid_size)
    words = np.array([tuple(word_sampler(k)) for k in range(n_words)], dtype=np.int64).reshape(n_words, N)
    counts = scan_counts(spec, ts, words, rho, threads)
    threshold = N / k1
    word_tuples = [tuple(int(x) for x in row) for row in words]
    return [
        ScanReport(float(t), word_tuples[k], int(counts[i, k]), threshold, bool(counts[i, k] <= threshold))
        for i, t in enumerate(ts)
        for k in range(n_words)
    ]


def write_scan_jsonl(reports: Sequence[ScanReport], fh: TextIO, config: dict | None = None) -> None:
    if config is not None:
        fh.write(json.dumps({"config": config}, sort_keys=True) + "\n")
    for r in reports:
        fh.write(r.to_json() + "\n")
