"""Closed-form error model and empirical metric measurement.

All analytic forms use the exact product (1 - 1/m)^(kn), not the e^(-kn/m)
approximation; the two agree to ~1e-4 absolute once m reaches 10^4, but
desk-scale tests should not inherit the approximation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Optional

import numpy as np

from .filters import BloomFilter


def analytic_p0(m: int, n: int, k: int) -> float:
    """Probability a given bit is still 0 after inserting n keys."""
    _check_mnk(m, n, k)
    if n == 0:
        return 1.0
    if m == 1:
        return 0.0
    return math.exp(k * n * math.log1p(-1.0 / m))


def analytic_p1(m: int, n: int, k: int) -> float:
    """Probability a given bit is 1 after inserting n keys."""
    return 1.0 - analytic_p0(m, n, k)


def analytic_fpr(m: int, n: int, k: int) -> float:
    """False positive rate (1 - (1 - 1/m)^(kn))^k."""
    return analytic_p1(m, n, k) ** k


class OptimalK(NamedTuple):
    exact: float
    rounded: int


def optimal_k(m: int, n: int) -> OptimalK:
    """Hash count minimizing the false positive rate: m*ln2/n, plus rounding."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    exact = m * math.log(2.0) / n
    return OptimalK(exact=exact, rounded=max(1, int(math.floor(exact + 0.5))))


def min_fpr(m: int, n: int) -> float:
    """Best achievable false positive rate at the real-valued optimal k."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return 0.5 ** (m * math.log(2.0) / n)


def retention(s: float, p1: float, m: int, k: int) -> float:
    """Probability a positive answer survives clearing s random set bits.

    Clearing s of the (on average) p1*m set bits leaves a key positive only
    when none of its k cells were cleared: (1 - s/(p1*m))^k.
    """
    if k < 1 or m < 1:
        raise ValueError("m and k must be >= 1")
    if not 0.0 < p1 <= 1.0:
        raise ValueError(f"p1 must be in (0, 1], got {p1}")
    set_bits = p1 * m
    if s < 0 or s > set_bits:
        raise ValueError(f"s must be in [0, p1*m]={set_bits:.3f}, got {s}")
    return (1.0 - s / set_bits) ** k


@dataclass(frozen=True)
class MetricsReport:
    """Error proportions before/after clearing, and the removal ratio chi.

    chi is None when no false negatives were generated (flagged, never
    fabricated).  beta is filled in by the harness when the report belongs
    to a troublesome-fraction sweep.
    """

    n_members: int
    n_non_members: int
    n_fp_before: int
    n_fp_after: int
    n_fn_after: int
    fp_proportion: float
    fn_proportion: float
    delta_fp: float
    delta_fn: float
    chi: Optional[float]
    beta: Optional[float] = None

    def with_beta(self, beta: float) -> "MetricsReport":
        return replace(self, beta=beta)


def metrics_after_clearing(
    after: BloomFilter,
    members: np.ndarray,
    fp_keys: np.ndarray,
    n_non_members: int,
) -> MetricsReport:
    """Build a report from a known pre-clearing false positive set.

    Clearing can only turn positives negative, so the surviving false
    positives are exactly the members of fp_keys still testing positive.
    """
    members = np.asarray(members, dtype=np.uint64)
    fp_keys = np.asarray(fp_keys, dtype=np.uint64)
    n_members = int(members.size)
    if n_members == 0:
        raise ValueError("members must be nonempty")
    n_fp_before = int(fp_keys.size)
    n_fp_after = int(after.contains_many(fp_keys).sum()) if n_fp_before else 0
    n_fn_after = n_members - int(after.contains_many(members).sum())
    fp_prop = n_fp_after / n_non_members if n_non_members else 0.0
    fn_prop = n_fn_after / n_members
    delta_fp = (n_fp_before - n_fp_after) / n_fp_before if n_fp_before else 0.0
    delta_fn = fn_prop
    chi = delta_fp / delta_fn if delta_fn > 0 else None
    return MetricsReport(
        n_members=n_members,
        n_non_members=n_non_members,
        n_fp_before=n_fp_before,
        n_fp_after=n_fp_after,
        n_fn_after=n_fn_after,
        fp_proportion=fp_prop,
        fn_proportion=fn_prop,
        delta_fp=delta_fp,
        delta_fn=delta_fn,
        chi=chi,
    )


def measure_metrics(
    before: BloomFilter,
    after: BloomFilter,
    members,
    non_members,
) -> MetricsReport:
    """Measure error proportions by direct membership tests.

    `non_members` must cover the scanned part of the universe outside the
    member set (exhaustively at desk/paper scale).
    """
    members = np.asarray(members, dtype=np.uint64)
    non_members = np.asarray(non_members, dtype=np.uint64)
    fp_keys = non_members[before.contains_many(non_members)]
    return metrics_after_clearing(after, members, fp_keys, int(non_members.size))


def _check_mnk(m: int, n: int, k: int) -> None:
    if m < 1 or k < 1:
        raise ValueError(f"m and k must be >= 1, got m={m} k={k}")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
