"""Ground truth and instrumentation math for the experiments.

Contains the exact small-instance oracle (subset-sum over reachable sums),
the concave potential used to instrument runs, the size-gap statistic,
log-log power-law fitting, drift estimators, total-variation distance and
bootstrap summaries.  Everything here is pure and safe to call concurrently
on distinct inputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Iterable, Sequence

import numpy as np

from .problem import Instance


class BudgetExceededError(RuntimeError):
    """The exact oracle refuses instances beyond its memory/time budget."""


@dataclass(frozen=True)
class TraceSample:
    """One decimated observation of a running trial."""

    t: int
    discrepancy: int
    makespan: int
    jobs_on_fuller: int
    potential: float


@dataclass(frozen=True)
class PowerLawFit:
    """Least-squares line through (ln n, ln T): T ~ coefficient * n**exponent."""

    exponent: float
    coefficient: float
    residual: float


def optimal_discrepancy(instance, max_total: int = 1_000_000) -> int:
    """Smallest achievable discrepancy over all 2^n assignments.

    Pseudo-polynomial subset-sum: a bitset over [0, P] of reachable machine-1
    loads (bit s of a Python integer marks sum s reachable), then the
    reachable sum closest to P/2 decides the answer.  Instances with total
    load above ``max_total`` are refused outright rather than approximated.
    """
    sizes = instance.sizes if isinstance(instance, Instance) else tuple(instance)
    if not sizes:
        raise ValueError("need at least one job")
    if any(s < 1 for s in sizes):
        raise ValueError("sizes must be positive")
    total = sum(sizes)
    if total > max_total:
        raise BudgetExceededError(
            f"total load {total} exceeds the oracle budget {max_total}")
    reachable = 1
    for p in sizes:
        reachable |= reachable << p
    half = total // 2
    # the closest reachable sum s <= total/2 minimizes |total - 2s|
    low_bits = reachable & ((2 << half) - 1)
    s = low_bits.bit_length() - 1
    return total - 2 * s


def drift_potential(x, n: int) -> float:
    """Concave rescaling of the fuller-machine job count, used in traces.

    Piecewise: x * (ln sqrt(n) + 2 - ln x) for 0 < x <= sqrt(n), and
    3 sqrt(n) - n/x above; continuously extended by 0 at x = 0.  Monotone
    increasing and continuous on [0, n], capped by 3 sqrt(n).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    x = float(x)
    if x < 0 or x > n:
        raise ValueError(f"x={x} outside [0, {n}]")
    if x == 0.0:
        return 0.0
    root = math.sqrt(n)
    if x <= root:
        return x * (math.log(root) + 2.0 - math.log(x))
    return 3.0 * root - n / x


def max_zero_run(sizes: Sequence[int], n: int) -> int:
    """Longest run of consecutive values in [1, n] taken by no job.

    Works on the frequency vector of the sizes; returns the run length.  The
    conventional gap statistic is run_length - 1, with a return of 0 meaning
    every value in [1, n] occurs.
    """
    counts = np.bincount(np.asarray(sizes, dtype=np.int64), minlength=n + 1)[1:]
    if counts.size != n:
        raise ValueError(f"sizes must lie in [1, {n}]")
    best = run = 0
    for c in counts:
        if c == 0:
            run += 1
            if run > best:
                best = run
        else:
            run = 0
    return best


def fit_power_law(points: Iterable) -> PowerLawFit:
    """Fit T = c * n**a by least squares in log-log space."""
    pts = [(float(n), float(t)) for n, t in points]
    if len(pts) < 2:
        raise ValueError("need at least two points")
    if any(n <= 0 or t <= 0 for n, t in pts):
        raise ValueError("points must be strictly positive")
    ln_n = np.log([n for n, _ in pts])
    ln_t = np.log([t for _, t in pts])
    slope, intercept = np.polyfit(ln_n, ln_t, 1)
    residual = float(np.sum((ln_t - (slope * ln_n + intercept)) ** 2))
    return PowerLawFit(float(slope), float(math.exp(intercept)), residual)


def empirical_drift(pairs: Sequence) -> float:
    """Mean one-step decrease over observed (x_t, x_{t+1}) pairs."""
    if not pairs:
        raise ValueError("need at least one pair")
    return float(np.mean([a - b for a, b in pairs]))


@dataclass(frozen=True)
class DriftEstimate:
    mean: float
    stderr: float
    count: int
    reliable: bool


def drift_by_level(pairs: Sequence, min_count: int = 100) -> Dict[int, DriftEstimate]:
    """Per-level drift estimates, keyed by the conditioning value x_t.

    Levels with fewer than ``min_count`` samples are flagged unreliable.
    """
    buckets: Dict[int, list] = {}
    for a, b in pairs:
        buckets.setdefault(int(a), []).append(a - b)
    out = {}
    for level, deltas in sorted(buckets.items()):
        arr = np.asarray(deltas, dtype=float)
        count = arr.size
        stderr = float(arr.std(ddof=1) / math.sqrt(count)) if count > 1 else float("inf")
        out[level] = DriftEstimate(float(arr.mean()), stderr, count, count >= min_count)
    return out


def tv_distance(pmf_a, pmf_b) -> float:
    """Total-variation distance (1/2) sum |a_j - b_j| between two pmfs."""
    a = np.asarray(pmf_a, dtype=float)
    b = np.asarray(pmf_b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("pmfs must share a support")
    for name, v in (("first", a), ("second", b)):
        if abs(v.sum() - 1.0) > 1e-9:
            raise ValueError(f"{name} pmf sums to {v.sum()!r}, not 1")
    return 0.5 * float(np.abs(a - b).sum())


@dataclass(frozen=True)
class Summary:
    mean: float
    median: float
    ci_low: float
    ci_high: float


def summarize(samples: Sequence[float], bootstrap_reps: int,
              rng: np.random.Generator) -> Summary:
    """Mean and median with a percentile-bootstrap 95% CI of the mean.

    Deterministic given the generator's seed.
    """
    arr = np.asarray(samples, dtype=float)
    if arr.size == 0:
        raise ValueError("need at least one sample")
    if bootstrap_reps < 1:
        raise ValueError("bootstrap_reps must be at least 1")
    idx = rng.integers(0, arr.size, size=(bootstrap_reps, arr.size))
    means = arr[idx].mean(axis=1)
    lo, hi = np.percentile(means, [2.5, 97.5])
    return Summary(float(arr.mean()), float(np.median(arr)), float(lo), float(hi))
