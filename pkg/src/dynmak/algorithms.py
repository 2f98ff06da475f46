"""Single steps and multi-step runs of the two search heuristics.

Both heuristics propose a mutated assignment and accept it iff the makespan
does not get worse (ties accepted).  ``rls_step`` flips exactly one uniformly
chosen bit; ``oea_step`` flips each bit independently with probability 1/n.

The per-bit mutation is sampled sparsely: the flip count k is drawn from
Bin(n, 1/n) and then a uniform k-subset of positions is chosen, which has
exactly the per-bit product distribution but costs O(1) expected work per
step.  All randomness comes from a caller-supplied numpy Generator; with the
same seed, the same numpy version reproduces trajectories bit for bit on any
platform (the PCG64 bit generator is fixed and documented upstream).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .problem import SearchState

RLS = "rls"
OEA = "oea"
ALGORITHMS = (RLS, OEA)


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator; the project-wide random stream."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True)
class StepOutcome:
    """Record of one mutation attempt, kept whether or not it was accepted."""

    flipped: tuple
    accepted: bool
    fitness_before: int
    fitness_after_candidate: int


def attempt_flips(state: SearchState, flips) -> StepOutcome:
    """Evaluate the candidate with ``flips`` toggled; commit iff not worse.

    ``flips`` must hold distinct indices.  An empty flip set is an accepted
    no-op.  The state is mutated only on acceptance.
    """
    l1 = state.load1
    l2 = state.load2
    sizes = state.sizes
    bits = state.bits
    delta = 0
    for i in flips:
        p = sizes[i]
        delta += p if bits[i] else -p
    n1 = l1 + delta
    n2 = l2 - delta
    before = l1 if l1 >= l2 else l2
    after = n1 if n1 >= n2 else n2
    accepted = after <= before
    if accepted and delta:
        for i in flips:
            bits[i] ^= 1
        state.load1 = n1
        state.load2 = n2
    elif accepted and flips:
        # zero net delta still toggles bits (e.g. swapping equal-size jobs)
        for i in flips:
            bits[i] ^= 1
    return StepOutcome(tuple(flips), accepted, before, after)


def rls_step(state: SearchState, rng: np.random.Generator) -> StepOutcome:
    """One local-search step: flip a single uniformly chosen bit."""
    return attempt_flips(state, (int(rng.integers(state.n)),))


def sample_flip_mask(n: int, rng: np.random.Generator) -> tuple:
    """Positions flipped by one per-bit Bernoulli(1/n) mutation.

    Draws k ~ Bin(n, 1/n), then k distinct uniform positions by retrying
    duplicates; conditioned on k the subset is uniform, so the joint law is
    the per-bit product law.
    """
    k = int(rng.binomial(n, 1.0 / n))
    if k == 0:
        return ()
    if k == 1:
        return (int(rng.integers(n)),)
    picked = []
    while len(picked) < k:
        c = int(rng.integers(n))
        if c not in picked:
            picked.append(c)
    return tuple(picked)


def oea_step(state: SearchState, rng: np.random.Generator) -> StepOutcome:
    """One evolutionary-algorithm step: independent per-bit flips."""
    return attempt_flips(state, sample_flip_mask(state.n, rng))


class MaskSampler:
    """Streaming variant of :func:`sample_flip_mask` for long runs.

    Pre-generates flip counts and candidate positions in blocks so that the
    amortized cost per mask is a couple of list lookups.  Identical in
    distribution to the one-shot sampler.
    """

    def __init__(self, n: int, rng: np.random.Generator, block: int = 8192):
        self.n = n
        self.rng = rng
        self.block = block
        self._counts = []
        self._ci = 0
        self._pool = []
        self._pi = 0

    def _refill_counts(self):
        self._counts = self.rng.binomial(self.n, 1.0 / self.n, size=self.block).tolist()
        self._ci = 0

    def _refill_pool(self):
        self._pool = self.rng.integers(0, self.n, size=self.block).tolist()
        self._pi = 0

    def __call__(self) -> tuple:
        if self._ci >= len(self._counts):
            self._refill_counts()
        k = self._counts[self._ci]
        self._ci += 1
        if k == 0:
            return ()
        pool = self._pool
        pi = self._pi
        if k == 1:
            if pi >= len(pool):
                self._refill_pool()
                pool = self._pool
                pi = 0
            self._pi = pi + 1
            return (pool[pi],)
        picked = []
        while len(picked) < k:
            if pi >= len(pool):
                self._refill_pool()
                pool = self._pool
                pi = 0
            c = pool[pi]
            pi += 1
            if c not in picked:
                picked.append(c)
        self._pi = pi
        return tuple(picked)


class IndexSampler:
    """Blocked stream of uniform indices in [0, n); used for single-bit flips."""

    def __init__(self, n: int, rng: np.random.Generator, block: int = 8192):
        self.n = n
        self.rng = rng
        self.block = block
        self._buf = []
        self._i = 0

    def __call__(self) -> int:
        if self._i >= len(self._buf):
            self._buf = self.rng.integers(0, self.n, size=self.block).tolist()
            self._i = 0
        v = self._buf[self._i]
        self._i += 1
        return v


def run_steps(state: SearchState, algo: str, iterations: int,
              rng: np.random.Generator,
              observer: Optional[Callable] = None) -> SearchState:
    """Apply exactly ``iterations`` steps of ``algo`` to ``state`` in place.

    ``observer(t, state, outcome)`` is invoked after each step, t = 1..N.
    Deterministic given the generator's seed.  Dynamic size changes are not
    applied here; drivers that need them interleave their own change calls.
    """
    if iterations < 0:
        raise ValueError("iterations must be nonnegative")
    if algo == RLS:
        step = rls_step
    elif algo == OEA:
        step = oea_step
    else:
        raise ValueError(f"unknown algorithm {algo!r}")
    if observer is None:
        for _ in range(iterations):
            step(state, rng)
    else:
        for t in range(1, iterations + 1):
            outcome = step(state, rng)
            observer(t, state, outcome)
    return state
