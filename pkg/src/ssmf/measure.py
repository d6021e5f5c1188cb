"""Self-similar IFS data on the line.

An :class:`IfsSpec` groups the maps ``x -> gamma_j * x + a_k^(j)`` by their
(distinct) contraction ratio.  :class:`OriginalIfsSpec` is the flat form
``x -> lambda_j * x + b_j`` in which ratios may repeat.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .errors import (
    BadProbability,
    BoundsViolated,
    DuplicateRatio,
    TooLarge,
    TrivialIfs,
    ValidationError,
)

RATIO_TOL = 1e-14
PROB_SLACK = 1e-10
EK_GAP_TOL = 1e-12
DISCRETIZE_MAX_ATOMS = 10**7


def _default_bounds(gmin: float, gmax: float, B1=None, B2=None) -> tuple[float, float]:
    # A homogeneous system has gamma_min == gamma_max; widen B2 just enough
    # to keep 1 < B1 < B2 strict.
    if B1 is None:
        B1 = 1.0 / gmax
    if B2 is None:
        B2 = 1.0 / gmin
        if B2 <= B1:
            B2 = B1 * (1.0 + 1e-9)
    return float(B1), float(B2)


@dataclass(frozen=True)
class IfsSpec:
    """IFS grouped by contraction ratio.

    ``translations[j]`` and ``probs[j]`` hold the maps sharing ratio
    ``gamma[j]``.  Group 0 is the distinguished group whose first two
    translations carry the pi-gap in EK-normalized systems.
    """

    gamma: tuple[float, ...]
    translations: tuple[tuple[float, ...], ...]
    probs: tuple[tuple[float, ...], ...]
    B1: float | None = None
    B2: float | None = None
    ek_normalized: bool = False

    @property
    def d(self) -> int:
        return len(self.gamma)

    @property
    def n_maps(self) -> int:
        return sum(len(a) for a in self.translations)

    @property
    def gamma_max(self) -> float:
        return max(self.gamma)

    @property
    def gamma_min(self) -> float:
        return min(self.gamma)

    def maps(self) -> list[tuple[float, float, float]]:
        """Flat list of ``(ratio, translation, probability)``."""
        return [
            (g, a, p)
            for g, aj, pj in zip(self.gamma, self.translations, self.probs)
            for a, p in zip(aj, pj)
        ]

    def fixed_points(self) -> list[float]:
        return [a / (1.0 - g) for g, a, _ in self.maps()]

    @classmethod
    def from_groups(cls, groups: Sequence[tuple[float, Sequence[float], Sequence[float]]],
                    B1: float | None = None, B2: float | None = None) -> IfsSpec:
        return cls(
            gamma=tuple(float(g) for g, _, _ in groups),
            translations=tuple(tuple(float(x) for x in a) for _, a, _ in groups),
            probs=tuple(tuple(float(x) for x in p) for _, _, p in groups),
            B1=B1,
            B2=B2,
        )

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> IfsSpec:
        try:
            groups = [
                (g["ratio"], [m["a"] for m in g["maps"]], [m["p"] for m in g["maps"]])
                for g in doc["groups"]
            ]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed IFS document: missing field {exc}") from None
        return cls.from_groups(groups, B1=doc.get("B1"), B2=doc.get("B2"))

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "groups": [
                {"ratio": g, "maps": [{"a": a, "p": p} for a, p in zip(aj, pj)]}
                for g, aj, pj in zip(self.gamma, self.translations, self.probs)
            ]
        }
        if self.B1 is not None:
            doc["B1"] = self.B1
        if self.B2 is not None:
            doc["B2"] = self.B2
        return doc


@dataclass(frozen=True)
class OriginalIfsSpec:
    """Flat IFS ``f_j(x) = lam[j] * x + b[j]`` with weights ``q``."""

    lam: tuple[float, ...]
    b: tuple[float, ...]
    q: tuple[float, ...]
    C1: float | None = None
    C2: float | None = None

    @property
    def m(self) -> int:
        return len(self.lam)

    def fixed_points(self) -> list[float]:
        return [b / (1.0 - l) for l, b in zip(self.lam, self.b)]

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> OriginalIfsSpec:
        try:
            return cls(
                lam=tuple(float(x) for x in doc["lambda"]),
                b=tuple(float(x) for x in doc["b"]),
                q=tuple(float(x) for x in doc["q"]),
                C1=doc.get("C1"),
                C2=doc.get("C2"),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed original IFS document: missing field {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        doc: dict[str, Any] = {"lambda": list(self.lam), "b": list(self.b), "q": list(self.q)}
        if self.C1 is not None:
            doc["C1"] = self.C1
        if self.C2 is not None:
            doc["C2"] = self.C2
        return doc

    def as_ifs_spec(self) -> IfsSpec:
        """Group maps with equal ratios (within ``RATIO_TOL``), keeping map 0 first."""
        groups: list[list] = []
        for l, b, q in zip(self.lam, self.b, self.q):
            for g in groups:
                if abs(g[0] - l) <= RATIO_TOL:
                    g[1].append(b)
                    g[2].append(q)
                    break
            else:
                groups.append([l, [b], [q]])
        return IfsSpec.from_groups(groups, B1=self.C1, B2=self.C2)


@dataclass(frozen=True)
class AggregatedWeights:
    p: tuple[float, ...]
    p_min: float
    eps_floor: float

    @property
    def p1(self) -> float:
        return self.p[0]


@dataclass(frozen=True)
class SupportInterval:
    lo: float
    hi: float
    iterations: int = field(default=0, compare=False)

    @property
    def radius(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)


def _check_probabilities(probs: Sequence[float], what: str) -> np.ndarray:
    q = np.asarray(probs, dtype=float)
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise BadProbability(f"{what}: probabilities must be finite and nonnegative")
    total = q.sum()
    if abs(total - 1.0) > PROB_SLACK:
        raise BadProbability(f"{what}: probabilities sum to {total!r}, not 1 (slack {PROB_SLACK})")
    return q / total


def _check_nontrivial(fixed: Sequence[float]) -> None:
    scale = max(1.0, max(abs(x) for x in fixed))
    if max(fixed) - min(fixed) <= 1e-12 * scale:
        raise TrivialIfs("all fixed points coincide; the invariant measure is a point mass")


def validate_ifs(spec: IfsSpec) -> IfsSpec:
    """Check every invariant and return a normalized copy.

    Probabilities within ``PROB_SLACK`` of summing to one are renormalized;
    missing ``B1``/``B2`` are filled from the extreme ratios.
    """
    d = spec.d
    if d < 1:
        raise ValidationError("IFS needs at least one ratio group")
    if len(spec.translations) != d or len(spec.probs) != d:
        raise ValidationError("gamma, translations and probs must have one entry per group")
    for j, (aj, pj) in enumerate(zip(spec.translations, spec.probs)):
        if len(aj) == 0 or len(aj) != len(pj):
            raise ValidationError(f"group {j}: need matching, non-empty translations and probabilities")
    for j, g in enumerate(spec.gamma):
        if not 0.0 < g < 1.0:
            raise BoundsViolated(f"group {j}: ratio {g!r} not in (0, 1)")
    order = sorted(spec.gamma)
    for x, y in zip(order, order[1:]):
        if y - x <= RATIO_TOL:
            raise DuplicateRatio(f"ratios {x!r} and {y!r} coincide within {RATIO_TOL}")

    flat = [p for pj in spec.probs for p in pj]
    q = _check_probabilities(flat, "IfsSpec")
    probs, pos = [], 0
    for pj in spec.probs:
        probs.append(tuple(float(x) for x in q[pos:pos + len(pj)]))
        pos += len(pj)
    for j, pj in enumerate(probs):
        if sum(pj) <= 0.0:
            raise BadProbability(f"group {j} has zero total probability")

    _check_nontrivial(spec.fixed_points())

    B1, B2 = _default_bounds(spec.gamma_min, spec.gamma_max, spec.B1, spec.B2)
    if not 1.0 < B1 < B2 < math.inf:
        raise BoundsViolated(f"need 1 < B1 < B2 < inf, got B1={B1!r}, B2={B2!r}")
    if spec.gamma_min < 1.0 / B2 * (1 - 1e-12) or spec.gamma_max > 1.0 / B1 * (1 + 1e-12):
        raise BoundsViolated(
            f"cond1 fails: need 1/B2 <= gamma_min <= gamma_max <= 1/B1 "
            f"(gamma in [{spec.gamma_min!r}, {spec.gamma_max!r}], B1={B1!r}, B2={B2!r})"
        )

    a1 = spec.translations[0]
    ek = len(a1) >= 2 and abs(a1[1] - a1[0] - math.pi) <= EK_GAP_TOL
    return replace(spec, probs=tuple(probs), B1=B1, B2=B2, ek_normalized=ek)


def validate_original(orig: OriginalIfsSpec) -> OriginalIfsSpec:
    if orig.m < 2:
        raise ValidationError("original IFS needs m >= 2 maps")
    if len(orig.b) != orig.m or len(orig.q) != orig.m:
        raise ValidationError("lambda, b and q must have equal length")
    for j, l in enumerate(orig.lam):
        if not 0.0 < l < 1.0:
            raise BoundsViolated(f"map {j}: ratio {l!r} not in (0, 1)")
    q = _check_probabilities(orig.q, "OriginalIfsSpec")
    _check_nontrivial(orig.fixed_points())
    C1, C2 = _default_bounds(min(orig.lam), max(orig.lam), orig.C1, orig.C2)
    if not 1.0 < C1 < C2:
        raise BoundsViolated(f"need 1 < C1 < C2, got C1={C1!r}, C2={C2!r}")
    if min(orig.lam) < 1.0 / C2 * (1 - 1e-12) or max(orig.lam) > 1.0 / C1 * (1 + 1e-12):
        raise BoundsViolated("need 1/C2 <= lambda_min <= lambda_max <= 1/C1")
    return replace(orig, q=tuple(float(x) for x in q), C1=C1, C2=C2)


def support_interval(spec: IfsSpec, tol: float = 1e-13, max_iter: int = 100_000) -> SupportInterval:
    """Convex hull of the attractor.

    Iterates ``I -> hull(union f(I))`` from the hull of the fixed points.
    """
    fixed = spec.fixed_points()
    lo, hi = min(fixed), max(fixed)
    g = np.array([m[0] for m in spec.maps()])
    a = np.array([m[1] for m in spec.maps()])
    for it in range(1, max_iter + 1):
        new_lo = min(lo, float(np.min(g * lo + a)))
        new_hi = max(hi, float(np.max(g * hi + a)))
        moved = max(abs(new_lo - lo), abs(new_hi - hi))
        lo, hi = new_lo, new_hi
        if moved < tol:
            return SupportInterval(lo, hi, it)
    return SupportInterval(lo, hi, max_iter)


def discretize(spec: IfsSpec, N: int, x0: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Atoms ``f_w(x0)`` and weights ``p_w`` over all words of length ``N``.

    Returned as two arrays ``(atoms, weights)``.  ``x0`` defaults to the
    midpoint of the support interval.
    """
    maps = spec.maps()
    if len(maps) ** N > DISCRETIZE_MAX_ATOMS:
        raise TooLarge(f"{len(maps)}^{N} atoms exceeds the limit {DISCRETIZE_MAX_ATOMS}")
    if x0 is None:
        x0 = support_interval(spec).midpoint
    g = np.array([m[0] for m in maps])[:, None]
    a = np.array([m[1] for m in maps])[:, None]
    p = np.array([m[2] for m in maps])[:, None]
    atoms = np.array([x0], dtype=float)
    weights = np.array([1.0])
    for _ in range(N):
        atoms = (g * atoms + a).ravel()
        weights = (p * weights).ravel()
    return atoms, weights


def aggregate_weights(spec: IfsSpec) -> AggregatedWeights:
    p = tuple(float(sum(pj)) for pj in spec.probs)
    return AggregatedWeights(
        p=p,
        p_min=min(p),
        eps_floor=min(x for pj in spec.probs for x in pj),
    )


def load_spec(path: str | Path) -> IfsSpec:
    with open(path) as fh:
        return validate_ifs(IfsSpec.from_dict(json.load(fh)))
