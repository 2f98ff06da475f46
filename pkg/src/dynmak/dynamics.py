"""Dynamic change models: adversarial size resets and random-walk drift.

Two families of changes, each touching at most one job per firing:

* adversary model: one job's processing time is reset to an arbitrary value
  within [lower, upper].  The built-in strategies instantiate this worst-case
  power in a few useful ways (random resets, deflating the fuller machine,
  inflating the emptier one, inflating/resizing a fuller-machine job, or a
  fixed script of changes).
* random model: sizes live on {1, ..., n} and the chosen job's size moves
  +-1 with equal probability, with reflecting barriers (a size of 1 always
  becomes 2, a size of n always becomes n-1).  The change model only picks
  WHICH job moves; the direction is drawn afterwards inside
  :func:`random_walk_change`, from a stream the picker never sees.

A :class:`ChangeSchedule` decides when a model fires: every tau iterations,
once, or never.  Changes keep the state's cached loads consistent.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .problem import Instance, SearchState, MACHINE2, fuller_machine

ADVERSARY = "adversary"
RANDOM_WALK = "random_walk"

STRATEGY_KINDS = ("uniform_random", "deflate_fuller", "inflate_emptier",
                  "resize_fuller", "scripted")
PICKER_KINDS = ("uniform_random", "round_robin")

EVERY_TAU = "every_tau"
ONE_TIME = "one_time"
NONE = "none"


@dataclass(frozen=True)
class ChangeEvent:
    """One applied modification of a job's processing time."""

    time: int
    job: int
    old_size: int
    new_size: int
    origin: str


@dataclass(frozen=True)
class ChangeSchedule:
    """When the change model fires, in iteration counts starting at 1."""

    mode: str = NONE
    tau: int = 1
    one_time_at: int = 0

    def __post_init__(self):
        if self.mode not in (EVERY_TAU, ONE_TIME, NONE):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.mode == EVERY_TAU and self.tau < 1:
            raise ValueError("tau must be at least 1")

    def fires(self, t: int) -> bool:
        if self.mode == EVERY_TAU:
            return t % self.tau == 0
        if self.mode == ONE_TIME:
            return t == self.one_time_at
        return False

    @classmethod
    def every(cls, tau: int) -> "ChangeSchedule":
        return cls(EVERY_TAU, tau=tau)

    @classmethod
    def once(cls, at: int) -> "ChangeSchedule":
        return cls(ONE_TIME, one_time_at=at)

    @classmethod
    def never(cls) -> "ChangeSchedule":
        return cls(NONE)


@dataclass
class AdversaryStrategy:
    """Which job the adversary touches and what it does to it.

    ``script`` is only used by the ``scripted`` kind: a list of
    ``(time, job, new_size)`` triples, strictly increasing in time.
    """

    kind: str = "uniform_random"
    script: Optional[list] = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise ValueError(f"unknown adversary strategy {self.kind!r}")
        if self.kind == "scripted":
            if not self.script:
                raise ValueError("scripted strategy needs a nonempty script")
            self.script = [(int(t), int(j), int(s)) for t, j, s in self.script]
            times = [t for t, _, _ in self.script]
            if any(b <= a for a, b in zip(times, times[1:])):
                raise ValueError("script times must be strictly increasing")

    def validate_against(self, instance: Instance) -> None:
        """Reject scripts that leave the instance's size box; call at load time."""
        if self.kind != "scripted":
            return
        for t, j, s in self.script:
            if not 0 <= j < instance.n:
                raise ValueError(f"script entry at t={t} names job {j}, n={instance.n}")
            if not instance.lower <= s <= instance.upper:
                raise ValueError(
                    f"script entry at t={t} sets size {s} outside "
                    f"[{instance.lower}, {instance.upper}]")


def set_job_size(state: SearchState, job: int, new_size: int, t: int,
                 origin: str) -> ChangeEvent:
    """Reset one job's size, delta-updating the load of its machine."""
    old = state.sizes[job]
    state.sizes[job] = new_size
    if state.bits[job]:
        state.load2 += new_size - old
    else:
        state.load1 += new_size - old
    return ChangeEvent(t, job, old, new_size, origin)


def _jobs_on_machine(state: SearchState, machine2: bool) -> list:
    want = 1 if machine2 else 0
    return [i for i, b in enumerate(state.bits) if b == want]


def adversary_change(state: SearchState, strategy: AdversaryStrategy, t: int,
                     rng: np.random.Generator):
    """Apply the strategy's change for iteration ``t``; returns the event or None.

    Scripted strategies fire only at their scripted times.  Machine-targeted
    strategies resolve ties toward machine 1 (matching the tie rule of
    ``jobs_on_fuller``); ``inflate_emptier`` is a no-op when the emptier
    machine is empty.
    """
    n = state.n
    lo = state.lower
    hi = state.upper
    kind = strategy.kind
    if kind == "uniform_random":
        job = int(rng.integers(n))
        new = int(rng.integers(lo, hi + 1))
        return set_job_size(state, job, new, t, ADVERSARY)
    if kind == "deflate_fuller":
        pool = _jobs_on_machine(state, fuller_machine(state) == MACHINE2)
        job = pool[int(rng.integers(len(pool)))]
        return set_job_size(state, job, lo, t, ADVERSARY)
    if kind == "inflate_emptier":
        pool = _jobs_on_machine(state, fuller_machine(state) != MACHINE2)
        if not pool:
            return None
        job = pool[int(rng.integers(len(pool)))]
        return set_job_size(state, job, hi, t, ADVERSARY)
    if kind == "resize_fuller":
        pool = _jobs_on_machine(state, fuller_machine(state) == MACHINE2)
        job = pool[int(rng.integers(len(pool)))]
        new = int(rng.integers(lo, hi + 1))
        return set_job_size(state, job, new, t, ADVERSARY)
    # scripted
    for st, job, size in strategy.script:
        if st == t:
            if not state.lower <= size <= state.upper:
                raise ValueError(f"scripted size {size} outside [{state.lower}, {state.upper}]")
            return set_job_size(state, job, size, t, ADVERSARY)
    return None


def random_walk_change(size: int, n: int, rng: np.random.Generator) -> int:
    """One fair +-1 walk step on {1, ..., n} with reflecting barriers.

    A direction is always drawn; at the barriers both directions lead to the
    same neighbour (1 -> 2 and n -> n-1 with probability one).
    """
    if not 1 <= size <= n:
        raise ValueError(f"size {size} outside [1, {n}]")
    step = 1 if rng.integers(2) else -1
    nxt = size + step
    if nxt == 0:
        return 2
    if nxt == n + 1:
        return n - 1
    return nxt


def apply_random_walk_change(state: SearchState, job: int, t: int,
                             rng: np.random.Generator) -> ChangeEvent:
    new = random_walk_change(state.sizes[job], state.n, rng)
    return set_job_size(state, job, new, t, RANDOM_WALK)


class UniformJobPicker:
    """Adversary of the random model: picks a uniformly random job."""

    kind = "uniform_random"

    def pick(self, n: int, t: int, rng: np.random.Generator) -> int:
        return int(rng.integers(n))


class RoundRobinJobPicker:
    """Deterministic picker cycling through jobs 0, 1, ..., n-1."""

    kind = "round_robin"

    def __init__(self):
        self._next = 0

    def pick(self, n: int, t: int, rng: np.random.Generator) -> int:
        job = self._next
        self._next = (job + 1) % n
        return job


def make_picker(kind: str):
    if kind == "uniform_random":
        return UniformJobPicker()
    if kind == "round_robin":
        return RoundRobinJobPicker()
    raise ValueError(f"unknown job picker {kind!r}")


class AdversaryModel:
    """Change model wrapper for the adversary world."""

    origin = ADVERSARY

    def __init__(self, strategy: AdversaryStrategy):
        self.strategy = strategy

    def apply(self, state, t, rng):
        return adversary_change(state, self.strategy, t, rng)


class RandomWalkModel:
    """Change model of the random world: picker chooses the job, the walk
    direction is drawn afterwards from ``rng`` (the picker never sees it)."""

    origin = RANDOM_WALK

    def __init__(self, picker=None):
        self.picker = picker if picker is not None else UniformJobPicker()

    def apply(self, state, t, rng):
        job = self.picker.pick(state.n, t, rng)
        return apply_random_walk_change(state, job, t, rng)


def maybe_change(state: SearchState, schedule: ChangeSchedule, model, t: int,
                 rng: np.random.Generator):
    """Fire the model iff the schedule matches iteration ``t``."""
    if schedule.fires(t):
        return model.apply(state, t, rng)
    return None


def stationary_pmf(n: int, j: int) -> float:
    """Long-run probability that a job's size equals ``j``.

    The reflecting walk's stationary law puts half weight on the two barrier
    values: 1/(2n-2) at j in {1, n} and 1/(n-1) elsewhere.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 1 <= j <= n:
        raise ValueError(f"j={j} outside [1, {n}]")
    if j == 1 or j == n:
        return 1.0 / (2 * n - 2)
    return 1.0 / (n - 1)


def stationary_distribution(n: int) -> np.ndarray:
    """Vector of stationary_pmf(n, j) for j = 1..n (index 0 <-> size 1)."""
    pmf = np.full(n, 1.0 / (n - 1))
    pmf[0] = pmf[-1] = 1.0 / (2 * n - 2)
    return pmf


def transition_matrix(n: int) -> np.ndarray:
    """Exact n-state kernel of the reflecting walk; row i is the law from size i+1."""
    if n < 2:
        raise ValueError("n must be at least 2")
    P = np.zeros((n, n))
    P[0, 1] = 1.0
    P[n - 1, n - 2] = 1.0
    for i in range(1, n - 1):
        P[i, i - 1] = 0.5
        P[i, i + 1] = 0.5
    return P


def stationary_fixed_point(n: int) -> np.ndarray:
    """Numerical fixed point pi = pi P of the walk kernel, normalized.

    Solved as a null-space problem, not by power iteration (the chain has
    period two, so powers of P do not converge from a point mass).
    """
    P = transition_matrix(n)
    A = P.T - np.eye(n)
    A[-1, :] = 1.0  # replace one redundant equation with the normalization
    b = np.zeros(n)
    b[-1] = 1.0
    return np.linalg.solve(A, b)


def walk_many(values: np.ndarray, n: int, steps: int,
              rng: np.random.Generator) -> np.ndarray:
    """Advance many independent reflecting walks ``steps`` times, vectorized.

    Each entry of ``values`` follows exactly the kernel of
    :func:`random_walk_change`; entries step simultaneously, which is
    equivalent in law to stepping them one by one.
    """
    v = np.asarray(values, dtype=np.int64).copy()
    if np.any((v < 1) | (v > n)):
        raise ValueError(f"sizes must lie in [1, {n}]")
    m = v.size
    for _ in range(steps):
        v += rng.integers(0, 2, size=m, dtype=np.int64) * 2 - 1
        v[v == 0] = 2
        v[v == n + 1] = n - 1
    return v


def burn_in(instance: Instance, changes_per_job: int,
            rng: np.random.Generator) -> Instance:
    """Apply ``changes_per_job`` walk steps to every job's size.

    Only valid for random-model instances (lower=1, upper=n).  The walk mixes
    in O(n^2) steps; 4 n^2 changes per job is the default burn-in used by the
    experiment harness.
    """
    if instance.lower != 1 or instance.upper != instance.n:
        raise ValueError("burn-in requires the random model's bounds lower=1, upper=n")
    if changes_per_job < 0:
        raise ValueError("changes_per_job must be nonnegative")
    if changes_per_job == 0:
        return instance
    sizes = walk_many(np.array(instance.sizes), instance.n, changes_per_job, rng)
    return instance.with_sizes(int(s) for s in sizes)
