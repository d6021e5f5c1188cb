"""Explicit constants of the Erdos-Kahane cover argument.

All large quantities (``L1``, ``L2``, ``A1``) are carried as natural logs;
``rho`` and ``A`` are also kept as exact fractions so that the identity
``A == 1/(2 rho) + 1`` holds without rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction

from .errors import BoundsViolated, Cond2Violated, NoFeasibleK, ValidationError


def rho_of(B2: float) -> Fraction:
    b = Fraction(B2)
    return 1 / (4 * (1 + b) * (1 + 3 * b))


def A_of(B2: float) -> Fraction:
    b = Fraction(B2)
    return 2 * (1 + b) * (1 + 3 * b) + 1


def _exp_or_inf(x: float) -> float:
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


@dataclass(frozen=True)
class EkConstants:
    B1: float
    B2: float
    d: int
    s: float
    rho_exact: Fraction
    A_exact: Fraction
    L1_log: float
    L2_log: float
    A1_log: float
    k1: int | None = None

    @property
    def rho(self) -> float:
        return float(self.rho_exact)

    @property
    def A(self) -> float:
        return float(self.A_exact)

    @property
    def L1(self) -> float:
        return _exp_or_inf(self.L1_log)

    @property
    def L2(self) -> float:
        return _exp_or_inf(self.L2_log)

    @property
    def A1(self) -> float:
        return _exp_or_inf(self.A1_log)

    @property
    def gap(self) -> float:
        """``s log B1 - log d``; positive exactly when ``B1**s > d``."""
        return self.s * math.log(self.B1) - math.log(self.d)


@dataclass(frozen=True)
class CoverEstimate:
    N: int
    log_count: float
    log_ball_diameter: float
    hausdorff_term: float


@dataclass(frozen=True)
class HausdorffReport:
    k1: int
    terms: tuple[tuple[int, float], ...]
    N0: int | None
    eventually_decreasing: bool
    bounded_above: bool
    max_term: float


def constants_of(B1: float, B2: float, d: int, s: float) -> EkConstants:
    if not 1.0 < B1 < B2 < math.inf:
        raise BoundsViolated(f"need 1 < B1 < B2 < inf, got B1={B1!r}, B2={B2!r}")
    if int(d) != d or d < 1:
        raise ValidationError(f"d must be a positive integer, got {d!r}")
    d = int(d)
    if s <= 0:
        raise ValidationError(f"s must be positive, got {s!r}")
    if s * math.log(B1) <= math.log(d):
        raise Cond2Violated(f"cond2 fails: B1**s = {B1 ** s!r} <= d = {d}")
    A = A_of(B2)
    logA = math.log(A)
    L1_log = (d + 1) * 2**d * math.log(B2)
    return EkConstants(
        B1=float(B1),
        B2=float(B2),
        d=d,
        s=float(s),
        rho_exact=rho_of(B2),
        A_exact=A,
        L1_log=L1_log,
        L2_log=L1_log + 2 * (d + 1) * logA,
        A1_log=2 ** (d + 1) * logA,
    )


def q_bounds(N: int, B1: float, B2: float, d: int) -> tuple[float, int]:
    """Range of the cutoff index ``q`` along a path at scale ``N``."""
    if N <= d + 1:
        raise ValueError(f"need N > d + 1, got N={N}, d={d}")
    return (N - d - 1) * math.log(B1) / math.log(B2), N - d


def log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def cover_count_log(N: int, k1: int, consts: EkConstants) -> float:
    """``log(L2 * N**2 * C(N, floor(N/k1)) * A1**(N/k1))``."""
    if k1 < 1:
        raise ValueError(f"k1 must be >= 1, got {k1}")
    return (consts.L2_log + 2 * math.log(N) + log_binom(N, N // k1)
            + (N / k1) * consts.A1_log)


def cover_estimate(N: int, k1: int, consts: EkConstants) -> CoverEstimate:
    log_count = cover_count_log(N, k1, consts)
    return CoverEstimate(
        N=N,
        log_count=log_count,
        log_ball_diameter=-N * math.log(consts.B1),
        hausdorff_term=log_count + N * (math.log(consts.d) - consts.s * math.log(consts.B1)),
    )


def binary_entropy(x: float) -> float:
    """Binary entropy in nats."""
    if x <= 0.0 or x >= 1.0:
        return 0.0
    return -x * math.log(x) - (1 - x) * math.log1p(-x)


def rate(k1: int, consts: EkConstants, A1_log: float | None = None) -> float:
    """Per-``N`` exponential growth rate of ``count * d**N * B1**(-N s)``.

    ``log C(N, N/k1) ~ N H(1/k1)`` by Stirling; the ``L2 N**2`` prefactor is
    subexponential and dropped.
    """
    if A1_log is None:
        A1_log = consts.A1_log
    return binary_entropy(1.0 / k1) + A1_log / k1 - consts.gap


def choose_k1(consts: EkConstants, k_max: int = 10**15) -> int:
    """Smallest ``k1`` with ``rate(k1) < 0``.

    For ``k1 >= 2`` the rate is strictly decreasing (both ``H(1/k)`` and
    ``log(A1)/k`` shrink), so a doubling search followed by bisection finds
    the threshold.
    """
    if consts.gap <= 0:
        raise NoFeasibleK("s log B1 <= log d: no k1 makes the rate negative")
    if rate(1, consts) < 0:
        return 1
    hi = 2
    while rate(hi, consts) >= 0:
        hi *= 2
        if hi > k_max:
            raise NoFeasibleK(f"rate still nonnegative at k1={hi}; gap {consts.gap!r} too small")
    lo = max(1, hi // 2)  # rate(lo) >= 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if rate(mid, consts) < 0:
            hi = mid
        else:
            lo = mid
    return hi


def with_k1(consts: EkConstants, k1: int | None = None) -> EkConstants:
    return replace(consts, k1=choose_k1(consts) if k1 is None else int(k1))


def hausdorff_sum_check(consts: EkConstants, k1: int, N_max: int) -> HausdorffReport:
    """Evaluate the log cover sum ``h(N)`` for ``1 <= N <= N_max``.

    ``N0`` is the smallest ``N < N_max`` from which ``h`` decreases strictly
    up to ``N_max``; ``None`` when the last step is not a decrease.
    """
    terms = tuple((N, cover_estimate(N, k1, consts).hausdorff_term) for N in range(1, N_max + 1))
    h = [x for _, x in terms]
    N0 = None
    i = len(h) - 1
    while i > 0 and h[i] < h[i - 1]:
        i -= 1
    if i < len(h) - 1:
        N0 = terms[i][0]
    return HausdorffReport(
        k1=k1,
        terms=terms,
        N0=N0,
        eventually_decreasing=N0 is not None,
        bounded_above=all(math.isfinite(x) for x in h),
        max_term=max(h) if h else -math.inf,
    )


def certificate(consts: EkConstants, k1: int | None = None, N_max: int = 60) -> dict:
    """JSON-ready summary used by the ``bounds`` subcommand."""
    if k1 is None:
        k1 = choose_k1(consts)
    report = hausdorff_sum_check(consts, k1, N_max)
    return {
        "rho": consts.rho,
        "A": consts.A,
        "L1_log": consts.L1_log,
        "L2_log": consts.L2_log,
        "A1_log": consts.A1_log,
        "k1": k1,
        "rate": rate(k1, consts),
        "N0": report.N0,
    }
