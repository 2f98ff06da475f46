"""Two-machine makespan problem: instances, assignments, loads and derived quantities.

An instance is a set of ``n`` jobs with integer processing times in
``[lower, upper]``.  An assignment is a bit vector: job ``i`` runs on machine 1
if bit ``i`` is 0 and on machine 2 if it is 1.  The fitness of an assignment is
the makespan (the larger machine load); the discrepancy is the absolute load
difference.  All arithmetic is done on Python integers, so load computations
are exact and cannot overflow regardless of magnitude; instance validation
additionally requires ``n * upper`` to fit in a signed 64-bit word so that
sizes and loads survive round-trips through numpy arrays and CSV files.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

# Machine identifiers returned by fuller_machine().  TIE is falsy on purpose.
MACHINE1 = 1
MACHINE2 = 2
TIE = 0

_MAX_TOTAL = 2**63 - 1


@dataclass(frozen=True)
class Instance:
    """Immutable description of a scheduling instance.

    Attributes:
        n: number of jobs, at least 1.
        sizes: processing times, one per job, each within [lower, upper].
        lower: smallest admissible processing time (>= 1).
        upper: largest admissible processing time.
    """

    n: int
    sizes: tuple
    lower: int
    upper: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"need at least one job, got n={self.n}")
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        if len(self.sizes) != self.n:
            raise ValueError(f"expected {self.n} sizes, got {len(self.sizes)}")
        if not (1 <= self.lower <= self.upper):
            raise ValueError(f"need 1 <= lower <= upper, got [{self.lower}, {self.upper}]")
        if self.n * self.upper > _MAX_TOTAL:
            raise ValueError("n * upper exceeds the 64-bit budget")
        for i, s in enumerate(self.sizes):
            if not (self.lower <= s <= self.upper):
                raise ValueError(f"size of job {i} is {s}, outside [{self.lower}, {self.upper}]")

    @property
    def total(self) -> int:
        """Total load P, the sum of all processing times."""
        return sum(self.sizes)

    @property
    def ratio(self) -> Fraction:
        """Exact bound ratio upper/lower."""
        return Fraction(self.upper, self.lower)

    def with_sizes(self, sizes: Iterable[int]) -> "Instance":
        return Instance(self.n, tuple(sizes), self.lower, self.upper)


def instance_to_dict(instance: Instance) -> dict:
    return {"n": instance.n, "L": instance.lower, "U": instance.upper,
            "sizes": list(instance.sizes)}


def instance_from_dict(data: dict) -> Instance:
    try:
        return Instance(int(data["n"]), data["sizes"], int(data["L"]), int(data["U"]))
    except KeyError as exc:
        raise ValueError(f"instance JSON is missing key {exc}") from None


def load_instance(path) -> Instance:
    with open(path) as fh:
        return instance_from_dict(json.load(fh))


def save_instance(instance: Instance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(instance), fh)


def bits_to_string(bits: Sequence[int]) -> str:
    return "".join("1" if b else "0" for b in bits)


def bits_from_string(text: str) -> list:
    if any(c not in "01" for c in text):
        raise ValueError("assignment string may contain only '0' and '1'")
    return [1 if c == "1" else 0 for c in text]


def assignment_to_dict(bits: Sequence[int]) -> dict:
    return {"bits": bits_to_string(bits)}


def assignment_from_dict(data: dict, n: int) -> list:
    bits = bits_from_string(data["bits"])
    if len(bits) != n:
        raise ValueError(f"assignment has {len(bits)} bits, instance has {n} jobs")
    return bits


class SearchState:
    """Mutable pairing of (possibly drifting) job sizes and an assignment.

    Loads of both machines are cached and kept consistent under bit flips and
    size changes, so fitness evaluations are O(1).  Sizes are copied from the
    instance at construction: dynamic change models mutate the state's copy,
    never the instance.  A state is owned by exactly one trial and must not be
    shared across threads.
    """

    __slots__ = ("n", "lower", "upper", "sizes", "bits", "load1", "load2")

    def __init__(self, instance: Instance, bits: Sequence[int]):
        if len(bits) != instance.n:
            raise ValueError(f"assignment has {len(bits)} bits, instance has {instance.n} jobs")
        self.n = instance.n
        self.lower = instance.lower
        self.upper = instance.upper
        self.sizes = [int(s) for s in instance.sizes]
        self.bits = [1 if b else 0 for b in bits]
        self.load1, self.load2 = self.recompute_loads()

    def recompute_loads(self):
        """Loads from scratch; the ground truth the cached values must match."""
        load2 = sum(p for p, b in zip(self.sizes, self.bits) if b)
        return sum(self.sizes) - load2, load2

    @property
    def total(self) -> int:
        return self.load1 + self.load2

    def copy(self) -> "SearchState":
        dup = SearchState.__new__(SearchState)
        dup.n = self.n
        dup.lower = self.lower
        dup.upper = self.upper
        dup.sizes = list(self.sizes)
        dup.bits = list(self.bits)
        dup.load1 = self.load1
        dup.load2 = self.load2
        return dup

    def __repr__(self):
        return (f"SearchState(n={self.n}, loads=({self.load1}, {self.load2}), "
                f"bits={bits_to_string(self.bits)})")


def make_state(instance: Instance, bits: Sequence[int]) -> SearchState:
    return SearchState(instance, bits)


def makespan(state: SearchState) -> int:
    """Load of the heavier machine; the quantity the search minimizes."""
    return state.load1 if state.load1 >= state.load2 else state.load2


def discrepancy(state: SearchState) -> int:
    """Absolute load difference; equals 2 * makespan - total load."""
    d = state.load1 - state.load2
    return d if d >= 0 else -d


def fuller_machine(state: SearchState) -> int:
    """MACHINE1 or MACHINE2, whichever is heavier, or TIE on equal loads."""
    if state.load1 > state.load2:
        return MACHINE1
    if state.load2 > state.load1:
        return MACHINE2
    return TIE


def jobs_on_fuller(state: SearchState) -> int:
    """Number of jobs on the heavier machine.

    On a tie the count of machine 1 is returned; the fixed rule keeps traces
    deterministic.
    """
    on_m2 = sum(state.bits)
    if state.load2 > state.load1:
        return on_m2
    return state.n - on_m2


def min_fuller_bound(n: int, ratio) -> int:
    """Lower bound ceil((n/2) / ratio) on the job count of the fuller machine.

    ``ratio`` is upper/lower; pass a Fraction for exact arithmetic (floats are
    converted exactly via their binary expansion).
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    r = Fraction(ratio)
    if r < 1:
        raise ValueError("ratio must be at least 1")
    return math.ceil(Fraction(n, 2) / r)


def apply_flips(state: SearchState, flip_set: Iterable[int]) -> SearchState:
    """Toggle the given bits, delta-updating the cached loads.

    O(len(flip_set)); indices must be distinct and in range.  Returns the
    mutated state (applying the same set twice restores the original).
    """
    delta = 0  # signed change of load1
    sizes = state.sizes
    bits = state.bits
    n = state.n
    for i in flip_set:
        if not 0 <= i < n:
            raise IndexError(f"job index {i} out of range for n={n}")
        p = sizes[i]
        if bits[i]:
            bits[i] = 0
            delta += p
        else:
            bits[i] = 1
            delta -= p
    state.load1 += delta
    state.load2 -= delta
    return state
