"""Reduction of a general IFS to one with distinct ratios and a pi gap.

Passing to the ``ell``-th iterate and grouping compositions by how often
each original map occurs gives ``binom(ell + m - 1, m - 1)`` ratio groups.
After an affine change of variable putting the fixed point of ``f_1`` at 0,
the translation of ``f_2`` can be scaled so that the group of ``f_1^(ell-1) f_2``
contains two translations exactly ``pi`` apart.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import BadCoordinate, BoundsViolated, DuplicateRatio, NotNormalized, TooLarge, TrivialIfs, ValidationError
from .measure import RATIO_TOL, IfsSpec, OriginalIfsSpec, validate_ifs, validate_original

MAX_COMPOSITIONS = 10**7
_ZERO_TOL = 1e-12


@dataclass(frozen=True)
class ReductionParams:
    m: int
    C1: float
    C2: float
    s: float | None
    epsilon: float
    ell: int
    d: int

    @property
    def B1(self) -> float:
        return self.C1**self.ell

    @property
    def B2(self) -> float:
        return self.C2**self.ell


@dataclass(frozen=True)
class NormalizationTransform:
    """``y = scale * (x - shift)``, maps listed in ``order`` of the input.

    A measure pushed forward this way satisfies
    ``mu_orig^(t) = exp(i t shift) * mu_red^(t / scale)``.
    """

    shift: float
    scale: float
    order: tuple[int, ...]

    def to_original(self, y):
        return np.asarray(y) / self.scale + self.shift

    def to_reduced(self, x):
        return self.scale * (np.asarray(x) - self.shift)

    def reduced_frequency(self, t):
        return np.asarray(t) / self.scale

    def phase(self, t):
        return np.exp(1j * np.asarray(t) * self.shift)

    def to_dict(self) -> dict:
        return {"shift": self.shift, "scale": self.scale, "order": list(self.order)}


@dataclass(frozen=True)
class ReducedIfs:
    spec: IfsSpec
    exponents: tuple[tuple[int, ...], ...]  # per group: occurrences of each original map
    ell: int
    d: int
    b: float
    transform: NormalizationTransform | None = None

    def provenance(self) -> dict:
        return {
            "ell": self.ell,
            "d": self.d,
            "b": self.b,
            "exponents": [list(e) for e in self.exponents],
            "transform": None if self.transform is None else self.transform.to_dict(),
        }


def pi_gap_translation(lam1: float, ell: int) -> float:
    """``b`` with ``b (1 - lam1**(ell-1)) = pi``."""
    return math.pi / (1.0 - lam1 ** (ell - 1))


def choose_iterate_level(m: int, C1: float, s: float) -> int:
    """Smallest ``ell >= 2`` with ``ell > m log(ell + m) / (s log C1)``."""
    if not C1 > 1.0:
        raise BoundsViolated(f"need C1 > 1, got {C1!r}")
    if not s > 0:
        raise ValidationError(f"s must be positive, got {s!r}")
    if m < 1:
        raise ValidationError(f"m must be >= 1, got {m!r}")
    k = s * math.log(C1)
    ell = 2
    while not ell > m * math.log(ell + m) / k:
        ell += 1
    return ell


def reduction_params(orig: OriginalIfsSpec, s: float | None = None, ell: int | None = None) -> ReductionParams:
    orig = validate_original(orig)
    if ell is None:
        if s is None:
            raise ValidationError("need s or ell to fix the iterate level")
        ell = choose_iterate_level(orig.m, orig.C1, s)
    if ell < 2:
        raise ValidationError(f"ell must be >= 2, got {ell}")
    return ReductionParams(orig.m, orig.C1, orig.C2, s, min(orig.q), int(ell), math.comb(ell + orig.m - 1, orig.m - 1))


def normalize_original(orig: OriginalIfsSpec, b: float) -> tuple[OriginalIfsSpec, NormalizationTransform]:
    """Move ``Fix(f_1)`` to 0 and scale so the second map has translation ``b``.

    If ``f_2`` shares the fixed point of ``f_1``, the first map with a
    different fixed point is moved into second place.
    """
    orig = validate_original(orig)
    fixed = orig.fixed_points()
    x1 = fixed[0]
    width = max(abs(f) for f in fixed) or 1.0
    others = [j for j in range(1, orig.m) if abs(fixed[j] - x1) > _ZERO_TOL * width]
    if not others:
        raise TrivialIfs("all fixed points coincide")
    j2 = others[0]
    order = (0, j2) + tuple(j for j in range(1, orig.m) if j != j2)
    lam = tuple(orig.lam[j] for j in order)
    q = tuple(orig.q[j] for j in order)
    shifted = [orig.b[j] - (1.0 - orig.lam[j]) * x1 for j in order]
    scale = b / shifted[1]
    new_b = (0.0, float(b)) + tuple(scale * x for x in shifted[2:])
    norm = replace(orig, lam=lam, b=new_b, q=q)
    return norm, NormalizationTransform(float(x1), float(scale), order)


def iterate_ifs(orig: OriginalIfsSpec, ell: int, merge_equal_ratios: bool = False,
                transform: NormalizationTransform | None = None) -> ReducedIfs:
    """``ell``-th iterate grouped by exponent multiset.

    Requires ``b_1 = 0``.  Group 1 is the one with exponents
    ``(ell-1, 1, 0, ...)``; its first two translations are
    ``lam_1**(ell-1) b_2`` (from ``f_1^(ell-1) f_2``) and ``b_2`` (from
    ``f_2 f_1^(ell-1)``).  With ``merge_equal_ratios`` groups whose ratios
    agree within ``RATIO_TOL`` are merged; otherwise such a collision raises
    :class:`DuplicateRatio`.
    """
    orig = validate_original(orig)
    if abs(orig.b[0]) > _ZERO_TOL * max(1.0, max(abs(x) for x in orig.b)):
        raise NotNormalized(f"b_1 = {orig.b[0]!r}; apply normalize_original first")
    if ell < 2:
        raise ValidationError(f"ell must be >= 2, got {ell}")
    m = orig.m
    if m**ell > MAX_COMPOSITIONS:
        raise TooLarge(f"m**ell = {m}**{ell} exceeds {MAX_COMPOSITIONS} compositions")
    lam = np.asarray(orig.lam)
    bb = np.asarray(orig.b)
    bb[0] = 0.0
    q = np.asarray(orig.q)

    # words w_1 ... w_k, composed as f_{w_1} o ... o f_{w_k}
    counts = np.zeros((1, m), dtype=np.int64)
    prod = np.ones(1)
    trans = np.zeros(1)
    prob = np.ones(1)
    for _ in range(ell):
        counts = (counts[:, None, :] + np.eye(m, dtype=np.int64)[None]).reshape(-1, m)
        trans = (trans[:, None] + prod[:, None] * bb[None]).ravel()
        prod = (prod[:, None] * lam[None]).ravel()
        prob = (prob[:, None] * q[None]).ravel()

    keys, inv = np.unique(counts, axis=0, return_inverse=True)
    inv = inv.ravel()
    first = np.zeros(m, dtype=np.int64)
    first[0], first[1] = ell - 1, 1
    key_list = [tuple(int(x) for x in k) for k in keys]
    head = key_list.index(tuple(first))
    ordered = [head] + sorted((g for g in range(len(key_list)) if g != head),
                              key=lambda g: tuple(-x for x in key_list[g]))

    # within group 1, put f_1^(ell-1) f_2 then f_2 f_1^(ell-1) first
    w_a, w_b = 1, m ** (ell - 1)
    groups = []
    exps = []
    for g in ordered:
        idx = np.flatnonzero(inv == g)
        if g == head:
            idx = np.concatenate([[w_a, w_b], idx[(idx != w_a) & (idx != w_b)]])
        ratio = float(np.prod(lam ** keys[g]))
        groups.append([ratio, list(trans[idx]), list(prob[idx])])
        exps.append(key_list[g])

    merged_groups: list = []
    merged_exps: list = []
    for grp, e in zip(groups, exps):
        for k, other in enumerate(merged_groups):
            if abs(other[0] - grp[0]) <= RATIO_TOL:
                if not merge_equal_ratios:
                    raise DuplicateRatio(
                        f"exponents {merged_exps[k][0]} and {e} give the same ratio {grp[0]!r};"
                        " pass merge_equal_ratios=True")
                other[1].extend(grp[1])
                other[2].extend(grp[2])
                merged_exps[k].append(e)
                break
        else:
            merged_groups.append(grp)
            merged_exps.append([e])

    spec = validate_ifs(IfsSpec.from_groups(merged_groups, B1=orig.C1**ell, B2=orig.C2**ell))
    return ReducedIfs(
        spec=spec,
        exponents=tuple(es[0] for es in merged_exps),
        ell=int(ell),
        d=spec.d,
        b=float(orig.b[1]),
        transform=transform,
    )


def reduce_ifs(orig: OriginalIfsSpec, s: float | None = None, ell: int | None = None,
               merge_equal_ratios: bool = False) -> tuple[ReducedIfs, ReductionParams]:
    """Normalize, pick ``ell`` and iterate."""
    params = reduction_params(orig, s, ell)
    b = pi_gap_translation(orig.lam[0], params.ell)
    norm, transform = normalize_original(orig, b)
    reduced = iterate_ifs(norm, params.ell, merge_equal_ratios, transform)
    return reduced, params


def pure_power_coords(exponents: Sequence[Sequence[int]], ell: int) -> tuple[int, ...]:
    """Group index of ``lam_j**ell`` for each original map ``j``."""
    exponents = [tuple(e) for e in exponents]
    m = len(exponents[0])
    out = []
    for j in range(m):
        target = tuple(ell if i == j else 0 for i in range(m))
        if target not in exponents:
            raise BadCoordinate(f"no group with exponents {target}")
        out.append(exponents.index(target))
    return tuple(out)


def recover_lambda(gamma: Sequence[float], ell: int, coords: Sequence[int]) -> tuple[float, ...]:
    """``lam_j = gamma[coords[j]] ** (1/ell)``."""
    if ell < 1:
        raise ValidationError(f"ell must be >= 1, got {ell}")
    out = []
    for c in coords:
        if not 0 <= c < len(gamma):
            raise BadCoordinate(f"coordinate {c} outside 0..{len(gamma) - 1}")
        g = float(gamma[c])
        if not g > 0:
            raise BadCoordinate(f"gamma[{c}] = {g!r} is not positive")
        out.append(g ** (1.0 / ell))
    return tuple(out)
