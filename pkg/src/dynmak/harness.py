"""Experiment orchestration: configs, trials, sweeps and CSV emission.

A trial is fully determined by (base_seed, trial_id): the pair seeds a numpy
SeedSequence whose children drive instance generation, assignment
initialization, dynamic changes and mutation separately, so trials can run in
any order or process layout and still reproduce bit for bit.  The change
stream and the mutation stream are distinct, which also guarantees the change
model cannot react to the algorithm's randomness.

Iteration accounting: t counts loop executions, starting at 1.  Target
predicates are evaluated on the initial state (t = 0) and after every
iteration; an iteration applies the scheduled change first and one algorithm
step second.  Hit detection re-arms once the predicate fails again, so
besides first hits the records carry the gaps between consecutive re-hits.
"""

from __future__ import annotations

import json
import math
import os
import sys
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .algorithms import (OEA, RLS, ALGORITHMS, IndexSampler, MaskSampler,
                         make_rng, oea_step)
from .analysis import TraceSample, drift_potential, fit_power_law, summarize
from .dynamics import (AdversaryModel, AdversaryStrategy, ChangeSchedule,
                       EVERY_TAU, NONE, ONE_TIME, RandomWalkModel, burn_in,
                       make_picker)
from .problem import (Instance, SearchState, assignment_from_dict,
                      discrepancy, load_instance)

ADVERSARY_MODEL = "adversary"
RANDOM_MODEL = "random"
MODELS = (ADVERSARY_MODEL, RANDOM_MODEL)

STOP_MAX_ITERS = "max_iters"
STOP_FIRST_HITS = "first_hits"

TARGET_KINDS = ("discrepancy_leq_U", "discrepancy_leq_abs",
                "discrepancy_leq_c_log_n", "ratio_leq_c_over_n")

INIT_MODES = ("worst_case", "uniform_random", "from_file")

RECORD_CSV_HEADER = ("trial,n,algorithm,model,seed,target,hit_time,censored,"
                     "discrepancy_at_hit,makespan_at_hit,initial_discrepancy")
TRACE_CSV_HEADER = "trial,t,discrepancy,makespan,jobs_on_fuller,potential"
AGGREGATE_CSV_HEADER = ("n,algorithm,model,target,trials,censored,"
                        "hit_mean,hit_median,hit_ci_low,hit_ci_high")

PARALLEL_ENV_VAR = "DYNMAK_PARALLEL"

_SEED_LIMIT = 2**64


class ConfigError(ValueError):
    """Invalid experiment configuration; reported at load time."""


@dataclass(frozen=True)
class TargetSpec:
    """A hit predicate on the running state.

    kinds: discrepancy_leq_U (d <= instance upper bound),
    discrepancy_leq_abs (d <= abs), discrepancy_leq_c_log_n (d <= c ln n),
    ratio_leq_c_over_n (d / makespan <= c / n).
    """

    kind: str
    c: Optional[float] = None
    abs: Optional[int] = None

    def __post_init__(self):
        if self.kind not in TARGET_KINDS:
            raise ConfigError(f"unknown target kind {self.kind!r}")
        if self.kind == "discrepancy_leq_abs":
            if self.abs is None or self.abs < 0:
                raise ConfigError("discrepancy_leq_abs needs a nonnegative 'abs'")
        if self.kind in ("discrepancy_leq_c_log_n", "ratio_leq_c_over_n"):
            if self.c is None or self.c <= 0:
                raise ConfigError(f"{self.kind} needs a positive 'c'")

    @property
    def label(self) -> str:
        if self.kind == "discrepancy_leq_U":
            return "d<=U"
        if self.kind == "discrepancy_leq_abs":
            return f"d<={self.abs}"
        if self.kind == "discrepancy_leq_c_log_n":
            return f"d<={self.c:g}ln(n)"
        return f"d/f<={self.c:g}/n"

    def threshold(self, upper: int, n: int):
        """Static discrepancy threshold, or None for the ratio predicate."""
        if self.kind == "discrepancy_leq_U":
            return upper
        if self.kind == "discrepancy_leq_abs":
            return self.abs
        if self.kind == "discrepancy_leq_c_log_n":
            return self.c * math.log(n)
        return None


def default_max_iters(model: str, algorithm: str, n: int) -> int:
    """Per-model iteration caps; generous multiples of the expected scales."""
    if model == RANDOM_MODEL:
        return n**4
    if algorithm == RLS:
        return math.ceil(50 * n * max(math.log(n), 1.0))
    return math.ceil(50 * n**1.5)


@dataclass
class ExperimentConfig:
    model: str
    algorithm: str
    n: int
    lower: int
    upper: int
    schedule: ChangeSchedule
    trials: int
    base_seed: int
    targets: tuple
    strategy: Optional[AdversaryStrategy] = None
    picker: str = "uniform_random"
    init: str = "uniform_random"
    init_bits: Optional[list] = None
    sizes: Optional[tuple] = None
    burn_in_changes_per_job: int = 0
    max_iters: Optional[int] = None
    trace_every: Optional[int] = None
    stop: str = STOP_MAX_ITERS

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.n < 1:
            raise ConfigError("n must be at least 1")
        if self.model == RANDOM_MODEL:
            if self.n < 2:
                raise ConfigError("the random model needs n >= 2")
            if (self.lower, self.upper) != (1, self.n):
                raise ConfigError("the random model forces L=1 and U=n")
        if not 1 <= self.lower <= self.upper:
            raise ConfigError(f"need 1 <= L <= U, got [{self.lower}, {self.upper}]")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if not 0 <= self.base_seed < _SEED_LIMIT:
            raise ConfigError("base_seed must fit an unsigned 64-bit integer")
        self.targets = tuple(self.targets)
        if self.max_iters is None:
            self.max_iters = default_max_iters(self.model, self.algorithm, self.n)
        if self.max_iters < 0:
            raise ConfigError("max_iters must be nonnegative")
        if self.trace_every is not None and self.trace_every < 1:
            raise ConfigError("trace_every must be at least 1")
        if self.stop not in (STOP_MAX_ITERS, STOP_FIRST_HITS):
            raise ConfigError(f"unknown stop rule {self.stop!r}")
        if self.init not in INIT_MODES:
            raise ConfigError(f"unknown init mode {self.init!r}")
        if self.init == "from_file":
            if self.init_bits is None:
                raise ConfigError("init mode from_file needs an init_file")
            if len(self.init_bits) != self.n:
                raise ConfigError(
                    f"initial assignment has {len(self.init_bits)} bits, n={self.n}")
        if self.model == ADVERSARY_MODEL:
            if self.strategy is None:
                self.strategy = AdversaryStrategy("uniform_random")
            self.strategy.validate_against(
                Instance(self.n, self.sizes or (self.lower,) * self.n,
                         self.lower, self.upper))
        else:
            if self.strategy is not None:
                raise ConfigError("adversary strategies apply to the adversary model only")
            make_picker(self.picker)  # raises on unknown kinds
        if self.sizes is not None:
            self.sizes = tuple(int(s) for s in self.sizes)
            if len(self.sizes) != self.n:
                raise ConfigError(f"expected {self.n} sizes, got {len(self.sizes)}")
        if self.burn_in_changes_per_job < 0:
            raise ConfigError("burn_in_changes_per_job must be nonnegative")


_CONFIG_KEYS = {"model", "algorithm", "n", "L", "U", "tau", "one_time_at",
                "strategy", "picker", "init", "init_file", "sizes_file",
                "burn_in_changes_per_job", "trials", "base_seed", "max_iters",
                "targets", "trace_every", "stop"}


def _parse_schedule(data: dict) -> ChangeSchedule:
    tau = data.get("tau")
    once = data.get("one_time_at")
    if tau is not None and once is not None:
        raise ConfigError("give at most one of 'tau' and 'one_time_at'")
    if tau is not None:
        return ChangeSchedule.every(int(tau))
    if once is not None:
        return ChangeSchedule.once(int(once))
    return ChangeSchedule.never()


def _parse_strategy(data) -> AdversaryStrategy:
    if isinstance(data, str):
        return AdversaryStrategy(data)
    kind = data.get("kind")
    if kind is None:
        raise ConfigError("strategy needs a 'kind'")
    script = data.get("script")
    if "script_file" in data:
        if script is not None:
            raise ConfigError("give either 'script' or 'script_file', not both")
        with open(data["script_file"]) as fh:
            raw = json.load(fh)
        script = [(e["t"], e["job"], e["size"]) for e in raw]
    elif script is not None:
        script = [(e["t"], e["job"], e["size"]) for e in script]
    try:
        return AdversaryStrategy(kind, script)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def config_from_dict(data: dict) -> ExperimentConfig:
    """Build and validate a config from its JSON dict form."""
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("model", "algorithm", "n", "trials", "base_seed", "targets"):
        if key not in data:
            raise ConfigError(f"config is missing required key {key!r}")
    model = data["model"]
    n = int(data["n"])
    if model == RANDOM_MODEL:
        lower = int(data.get("L", 1))
        upper = int(data.get("U", n))
        burn = data.get("burn_in_changes_per_job")
        burn = 4 * n * n if burn is None else int(burn)
    else:
        if "L" not in data or "U" not in data:
            raise ConfigError("the adversary model needs explicit L and U")
        lower = int(data["L"])
        upper = int(data["U"])
        burn = int(data.get("burn_in_changes_per_job", 0))

    sizes = None
    if data.get("sizes_file"):
        inst = load_instance(data["sizes_file"])
        if (inst.n, inst.lower, inst.upper) != (n, lower, upper):
            raise ConfigError("sizes_file instance does not match the config's n/L/U")
        sizes = inst.sizes

    init_bits = None
    if data.get("init_file"):
        with open(data["init_file"]) as fh:
            try:
                init_bits = assignment_from_dict(json.load(fh), n)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None

    strategy = None
    if "strategy" in data and data["strategy"] is not None:
        if model != ADVERSARY_MODEL:
            raise ConfigError("adversary strategies apply to the adversary model only")
        strategy = _parse_strategy(data["strategy"])

    targets = tuple(
        TargetSpec(t["kind"], c=t.get("c"), abs=t.get("abs"))
        for t in data["targets"])

    try:
        schedule = _parse_schedule(data)
        return ExperimentConfig(
            model=model,
            algorithm=data["algorithm"],
            n=n,
            lower=lower,
            upper=upper,
            schedule=schedule,
            trials=int(data["trials"]),
            base_seed=int(data["base_seed"]),
            targets=targets,
            strategy=strategy,
            picker=data.get("picker", "uniform_random"),
            init=data.get("init", "uniform_random"),
            init_bits=init_bits,
            sizes=sizes,
            burn_in_changes_per_job=burn,
            max_iters=None if data.get("max_iters") is None else int(data["max_iters"]),
            trace_every=data.get("trace_every"),
            stop=data.get("stop", STOP_MAX_ITERS),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


@dataclass(frozen=True)
class TargetResult:
    target: str
    first_hit_time: Optional[int]
    censored: bool
    discrepancy_at_hit: Optional[int]
    makespan_at_hit: Optional[int]
    inter_hit_times: tuple
    satisfied_checks: int


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    n: int
    algorithm: str
    model: str
    seed: int
    initial_discrepancy: int
    targets: tuple
    change_count: int
    trace: tuple


def trial_seed_sequence(base_seed: int, trial_id: int) -> np.random.SeedSequence:
    """Documented derivation of a trial's random stream root."""
    return np.random.SeedSequence([int(base_seed), int(trial_id)])


def derived_seed(base_seed: int, trial_id: int) -> int:
    """64-bit digest of (base_seed, trial_id); the CSV 'seed' column."""
    root = trial_seed_sequence(base_seed, trial_id)
    return int(root.generate_state(1, np.uint64)[0])


def init_assignment(instance: Instance, mode: str, rng,
                    file_bits: Optional[Sequence[int]] = None) -> list:
    """Initial bit vector: all machine 1, fair coin per job, or given bits."""
    if mode == "worst_case":
        return [0] * instance.n
    if mode == "uniform_random":
        return rng.integers(0, 2, size=instance.n).tolist()
    if mode == "from_file":
        if file_bits is None or len(file_bits) != instance.n:
            raise ValueError("from_file initialization needs n parsed bits")
        return [1 if b else 0 for b in file_bits]
    raise ValueError(f"unknown init mode {mode!r}")


def _build_instance(config: ExperimentConfig, rng) -> Instance:
    n = config.n
    if config.model == ADVERSARY_MODEL:
        sizes = config.sizes
        if sizes is None:
            sizes = rng.integers(config.lower, config.upper + 1, size=n).tolist()
        return Instance(n, sizes, config.lower, config.upper)
    sizes = rng.integers(1, n + 1, size=n).tolist()
    instance = Instance(n, sizes, 1, n)
    if config.burn_in_changes_per_job:
        instance = burn_in(instance, config.burn_in_changes_per_job, rng)
    return instance


# change-application paths resolved before the main loop
_CHG_NONE = 0
_CHG_ADV_UNIFORM = 1
_CHG_RW_UNIFORM = 2
_CHG_GENERIC = 3


def run_trial(config: ExperimentConfig, trial_id: int) -> TrialRecord:
    """Execute one trial; bit-identical for a given (config, trial_id)."""
    root = trial_seed_sequence(config.base_seed, trial_id)
    seed64 = int(root.generate_state(1, np.uint64)[0])
    sq_inst, sq_init, sq_chg, sq_alg = root.spawn(4)
    rng_inst = make_rng(sq_inst)
    rng_init = make_rng(sq_init)
    rng_chg = make_rng(sq_chg)
    rng_alg = make_rng(sq_alg)

    instance = _build_instance(config, rng_inst)
    bits_init = init_assignment(instance, config.init, rng_init, config.init_bits)
    state = SearchState(instance, bits_init)
    initial_d = discrepancy(state)

    n = state.n
    sizes = state.sizes
    bits = state.bits
    l1 = state.load1
    l2 = state.load2
    f = l1 if l1 >= l2 else l2

    # target bookkeeping
    targets = config.targets
    K = len(targets)
    modes = []     # 0: d <= thr, 1: d * n <= c * f
    thr = []
    ratio_c = []
    for tg in targets:
        t_thr = tg.threshold(config.upper, n)
        if t_thr is None:
            modes.append(1)
            thr.append(0.0)
            ratio_c.append(tg.c)
        else:
            modes.append(0)
            thr.append(t_thr)
            ratio_c.append(0.0)
    first = [None] * K
    last_hit = [0] * K
    inter = [[] for _ in range(K)]
    armed = [True] * K
    sat = [False] * K
    sat_start = [0] * K
    sat_checks = [0] * K
    d_hit = [None] * K
    f_hit = [None] * K
    hits_open = K

    def evaluate(t, dcur, fcur):
        nonlocal hits_open
        for k in range(K):
            if modes[k] == 0:
                s = dcur <= thr[k]
            else:
                s = dcur * n <= ratio_c[k] * fcur
            if s:
                if not sat[k]:
                    sat[k] = True
                    sat_start[k] = t
                if armed[k]:
                    armed[k] = False
                    if first[k] is None:
                        first[k] = t
                        d_hit[k] = dcur
                        f_hit[k] = fcur
                        hits_open -= 1
                    else:
                        inter[k].append(t - last_hit[k])
                    last_hit[k] = t
            else:
                if sat[k]:
                    sat[k] = False
                    sat_checks[k] += t - sat_start[k]
                armed[k] = True

    trace = []
    trace_every = config.trace_every
    tracing = trace_every is not None

    def snapshot(t, dcur, fcur):
        on_m2 = sum(bits)
        jf = on_m2 if l2 > l1 else n - on_m2
        trace.append(TraceSample(t, dcur, fcur, jf, drift_potential(jf, n)))

    d0 = l1 - l2
    if d0 < 0:
        d0 = -d0
    evaluate(0, d0, f)
    if tracing:
        snapshot(0, d0, f)

    # change model setup
    sched = config.schedule
    sched_none = sched.mode == NONE
    sched_every = sched.mode == EVERY_TAU
    tau = sched.tau
    tau_is_1 = sched_every and tau == 1
    once_at = sched.one_time_at if sched.mode == ONE_TIME else -1

    chg_path = _CHG_NONE
    model = None
    chg_idx = chg_size = chg_dir = None
    if not sched_none:
        if config.model == ADVERSARY_MODEL:
            if config.strategy.kind == "uniform_random":
                chg_path = _CHG_ADV_UNIFORM
                chg_idx = IndexSampler(n, rng_chg)
                lo, hi = config.lower, config.upper
                chg_size = IndexSampler(hi - lo + 1, rng_chg)
            else:
                chg_path = _CHG_GENERIC
                model = AdversaryModel(config.strategy)
        else:
            if config.picker == "uniform_random":
                chg_path = _CHG_RW_UNIFORM
                chg_idx = IndexSampler(n, rng_chg)
                chg_dir = IndexSampler(2, rng_chg)
            else:
                chg_path = _CHG_GENERIC
                model = RandomWalkModel(make_picker(config.picker))

    is_rls = config.algorithm == RLS
    if is_rls:
        alg_idx = IndexSampler(n, rng_alg)
    else:
        next_mask = MaskSampler(n, rng_alg)

    max_iters = config.max_iters
    stop_early = config.stop == STOP_FIRST_HITS
    change_count = 0
    last_t = 0

    if not (stop_early and hits_open == 0):
        t = 0
        while t < max_iters:
            t += 1
            dirty = False

            # --- scheduled change ---
            if not sched_none and (tau_is_1 or
                                   (sched_every and t % tau == 0) or
                                   t == once_at):
                if chg_path == _CHG_ADV_UNIFORM:
                    j = chg_idx()
                    newp = config.lower + chg_size()
                    old = sizes[j]
                    change_count += 1
                    if newp != old:
                        sizes[j] = newp
                        if bits[j]:
                            l2 += newp - old
                        else:
                            l1 += newp - old
                        f = l1 if l1 >= l2 else l2
                        dirty = True
                elif chg_path == _CHG_RW_UNIFORM:
                    j = chg_idx()
                    s0 = sizes[j]
                    s1 = s0 + 1 if chg_dir() else s0 - 1
                    if s1 == 0:
                        s1 = 2
                    elif s1 == n + 1:
                        s1 = n - 1
                    sizes[j] = s1
                    if bits[j]:
                        l2 += s1 - s0
                    else:
                        l1 += s1 - s0
                    f = l1 if l1 >= l2 else l2
                    change_count += 1
                    dirty = True
                else:
                    state.load1 = l1
                    state.load2 = l2
                    event = model.apply(state, t, rng_chg)
                    l1 = state.load1
                    l2 = state.load2
                    f = l1 if l1 >= l2 else l2
                    if event is not None:
                        change_count += 1
                        dirty = True

            # --- one algorithm step ---
            if is_rls:
                i = alg_idx()
                p = sizes[i]
                dd = p if bits[i] else -p
                n1 = l1 + dd
                n2 = l2 - dd
                nf = n1 if n1 >= n2 else n2
                if nf <= f:
                    bits[i] ^= 1
                    l1 = n1
                    l2 = n2
                    f = nf
                    dirty = True
            else:
                mask = next_mask()
                if mask:
                    dd = 0
                    for i in mask:
                        p = sizes[i]
                        dd += p if bits[i] else -p
                    n1 = l1 + dd
                    n2 = l2 - dd
                    nf = n1 if n1 >= n2 else n2
                    if nf <= f:
                        for i in mask:
                            bits[i] ^= 1
                        l1 = n1
                        l2 = n2
                        f = nf
                        dirty = True

            if dirty:
                dcur = l1 - l2
                if dcur < 0:
                    dcur = -dcur
                evaluate(t, dcur, f)
                if stop_early and hits_open == 0:
                    last_t = t
                    if tracing and t % trace_every == 0:
                        snapshot(t, dcur, f)
                    break
            if tracing and t % trace_every == 0:
                dcur = l1 - l2
                if dcur < 0:
                    dcur = -dcur
                snapshot(t, dcur, f)
        else:
            last_t = max_iters

    state.load1 = l1
    state.load2 = l2

    for k in range(K):
        if sat[k]:
            sat_checks[k] += last_t - sat_start[k] + 1

    results = tuple(
        TargetResult(
            target=targets[k].label,
            first_hit_time=first[k],
            censored=first[k] is None,
            discrepancy_at_hit=d_hit[k],
            makespan_at_hit=f_hit[k],
            inter_hit_times=tuple(inter[k]),
            satisfied_checks=sat_checks[k],
        )
        for k in range(K))
    return TrialRecord(trial_id, n, config.algorithm, config.model, seed64,
                       initial_d, results, change_count, tuple(trace))


def _trial_task(args):
    config, trial_id = args
    return run_trial(config, trial_id)


def resolve_parallelism(explicit: Optional[int] = None) -> int:
    if explicit is not None:
        return max(1, int(explicit))
    env = os.environ.get(PARALLEL_ENV_VAR)
    if env:
        return max(1, int(env))
    return 1


def run_config(config: ExperimentConfig,
               parallelism: Optional[int] = None) -> list:
    """All trials of one config, in trial_id order; parallelism-independent."""
    tasks = [(config, tid) for tid in range(config.trials)]
    return _map_trials(tasks, resolve_parallelism(parallelism))


def _map_trials(tasks, workers: int) -> list:
    if workers <= 1 or len(tasks) <= 1:
        return [_trial_task(t) for t in tasks]
    chunk = max(1, len(tasks) // (8 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial_task, tasks, chunksize=chunk))


@dataclass(frozen=True)
class SweepResult:
    records: list
    aggregate: list
    fits: dict


def aggregate_records(records, bootstrap_reps: int = 1000) -> list:
    """Per (n, algorithm, model, target) summary rows over first-hit times."""
    groups = {}
    for rec in records:
        for tr in rec.targets:
            key = (rec.n, rec.algorithm, rec.model, tr.target)
            groups.setdefault(key, []).append(tr)
    rows = []
    for key in sorted(groups, key=lambda k: (k[0], k[1], k[2], k[3])):
        n, algorithm, model, target = key
        results = groups[key]
        hits = [tr.first_hit_time for tr in results if not tr.censored]
        censored = len(results) - len(hits)
        row = {"n": n, "algorithm": algorithm, "model": model, "target": target,
               "trials": len(results), "censored": censored,
               "hit_mean": None, "hit_median": None,
               "hit_ci_low": None, "hit_ci_high": None}
        if hits:
            rng = make_rng(np.random.SeedSequence(
                [0xA66E6A7E, n, zlib.crc32(target.encode())]))
            summary = summarize(hits, bootstrap_reps, rng)
            row.update(hit_mean=summary.mean, hit_median=summary.median,
                       hit_ci_low=summary.ci_low, hit_ci_high=summary.ci_high)
        rows.append(row)
    return rows


def run_sweep(configs: Sequence[ExperimentConfig],
              parallelism: Optional[int] = None,
              bootstrap_reps: int = 1000) -> SweepResult:
    """Run several configs (typically an n-grid) and fit hit-time scaling.

    The records come back grouped by config in the given order, trials in
    trial_id order within each config; the output does not depend on the
    parallelism degree.
    """
    tasks = []
    for config in configs:
        tasks.extend((config, tid) for tid in range(config.trials))
    records = _map_trials(tasks, resolve_parallelism(parallelism))
    aggregate = aggregate_records(records, bootstrap_reps)
    by_target = {}
    for row in aggregate:
        if row["hit_mean"] is not None and row["hit_mean"] > 0:
            by_target.setdefault(row["target"], []).append((row["n"], row["hit_mean"]))
    fits = {label: fit_power_law(pts)
            for label, pts in by_target.items() if len(pts) >= 2}
    return SweepResult(records, aggregate, fits)


def _resolve_scaled(value, n: int) -> int:
    """Sweep grids may write L/U/max_iters as ints or 'n' / 'k*n' templates."""
    if isinstance(value, bool):
        raise ConfigError(f"cannot scale {value!r}")
    if isinstance(value, int):
        return value
    if isinstance(value, str):
        text = value.replace(" ", "")
        if text == "n":
            return n
        for sep in ("*",):
            if sep in text:
                a, b = text.split(sep, 1)
                if a == "n" and b.isdigit():
                    return n * int(b)
                if b == "n" and a.isdigit():
                    return n * int(a)
        raise ConfigError(f"cannot parse scaled value {value!r}")
    raise ConfigError(f"cannot parse scaled value {value!r}")


def sweep_configs_from_dict(data: dict) -> list:
    """Expand a sweep spec {'base': config, 'n_grid': [...]} into configs."""
    if "base" not in data or "n_grid" not in data:
        raise ConfigError("sweep spec needs 'base' and 'n_grid'")
    base = data["base"]
    grid = data["n_grid"]
    if not grid:
        raise ConfigError("n_grid must be nonempty")
    configs = []
    for n in grid:
        entry = dict(base)
        entry["n"] = int(n)
        for key in ("L", "U", "max_iters"):
            if key in entry and entry[key] is not None:
                entry[key] = _resolve_scaled(entry[key], int(n))
        configs.append(config_from_dict(entry))
    return configs


def _fmt_real(x) -> str:
    return "" if x is None else f"{x:.9g}"


def _fmt_int(x) -> str:
    return "" if x is None else str(int(x))


def records_to_csv(records, fh) -> int:
    """Long-format rows, one per (trial, target); returns the data row count."""
    fh.write(RECORD_CSV_HEADER + "\n")
    count = 0
    for rec in records:
        for tr in rec.targets:
            fh.write(f"{rec.trial_id},{rec.n},{rec.algorithm},{rec.model},"
                     f"{rec.seed},{tr.target},{_fmt_int(tr.first_hit_time)},"
                     f"{int(tr.censored)},{_fmt_int(tr.discrepancy_at_hit)},"
                     f"{_fmt_int(tr.makespan_at_hit)},{rec.initial_discrepancy}\n")
            count += 1
    return count


def traces_to_csv(records, fh) -> int:
    fh.write(TRACE_CSV_HEADER + "\n")
    count = 0
    for rec in records:
        for s in rec.trace:
            fh.write(f"{rec.trial_id},{s.t},{s.discrepancy},{s.makespan},"
                     f"{s.jobs_on_fuller},{_fmt_real(s.potential)}\n")
            count += 1
    return count


def aggregate_to_csv(rows, fh) -> int:
    fh.write(AGGREGATE_CSV_HEADER + "\n")
    for row in rows:
        fh.write(f"{row['n']},{row['algorithm']},{row['model']},{row['target']},"
                 f"{row['trials']},{row['censored']},{_fmt_real(row['hit_mean'])},"
                 f"{_fmt_real(row['hit_median'])},{_fmt_real(row['hit_ci_low'])},"
                 f"{_fmt_real(row['hit_ci_high'])}\n")
    return len(rows)


def fits_to_csv(fits, fh) -> int:
    fh.write("target,exponent,coefficient,residual\n")
    for label in sorted(fits):
        fit = fits[label]
        fh.write(f"{label},{_fmt_real(fit.exponent)},{_fmt_real(fit.coefficient)},"
                 f"{_fmt_real(fit.residual)}\n")
    return len(fits)


def _descend(state: SearchState, is_rls: bool, sampler, threshold: int,
             cap: int):
    """Run steps until discrepancy <= threshold; step count, or None if capped."""
    sizes = state.sizes
    bits = state.bits
    l1 = state.load1
    l2 = state.load2
    f = l1 if l1 >= l2 else l2
    d = l1 - l2 if l1 >= l2 else l2 - l1
    steps = 0
    while d > threshold:
        if steps >= cap:
            state.load1 = l1
            state.load2 = l2
            return None
        steps += 1
        if is_rls:
            i = sampler()
            p = sizes[i]
            dd = p if bits[i] else -p
        else:
            mask = sampler()
            if not mask:
                continue
            dd = 0
            for i in mask:
                p = sizes[i]
                dd += p if bits[i] else -p
        n1 = l1 + dd
        n2 = l2 - dd
        nf = n1 if n1 >= n2 else n2
        if nf <= f:
            if is_rls:
                bits[i] ^= 1
            else:
                for i in mask:
                    bits[i] ^= 1
            l1 = n1
            l2 = n2
            f = nf
            d = n1 - n2 if n1 >= n2 else n2 - n1
    state.load1 = l1
    state.load2 = l2
    return steps


def run_recovery_experiment(algorithm: str, n: int, lower: int, upper: int,
                            recoveries: int, base_seed: int,
                            recovery_cap: Optional[int] = None) -> np.ndarray:
    """Chained recovery times after single changes to fuller-machine jobs.

    Starting from uniform sizes and a uniform assignment, the state is first
    brought to discrepancy <= U; then, repeatedly, one uniformly chosen job on
    the fuller machine gets a fresh uniform size in [L, U] and the number of
    iterations until discrepancy <= U again is recorded (0 when the change
    does not push the discrepancy above U).
    """
    if algorithm not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    root = np.random.SeedSequence([int(base_seed), n, lower, upper])
    sq_inst, sq_init, sq_chg, sq_alg = root.spawn(4)
    rng_inst = make_rng(sq_inst)
    rng_chg = make_rng(sq_chg)
    rng_alg = make_rng(sq_alg)

    sizes = rng_inst.integers(lower, upper + 1, size=n).tolist()
    instance = Instance(n, sizes, lower, upper)
    bits = init_assignment(instance, "uniform_random", make_rng(sq_init))
    state = SearchState(instance, bits)

    is_rls = algorithm == RLS
    sampler = IndexSampler(n, rng_alg) if is_rls else MaskSampler(n, rng_alg)
    if recovery_cap is None:
        recovery_cap = 10_000 + 200 * min(n, math.ceil(upper / lower))
    prerun_cap = 10_000 + 100 * n * max(1, math.ceil(math.log(max(n, 2))))

    if _descend(state, is_rls, sampler, upper, prerun_cap) is None:
        raise RuntimeError("pre-run failed to reach discrepancy <= U")

    resize = AdversaryStrategy("resize_fuller")
    times = np.empty(recoveries, dtype=np.int64)
    for r in range(recoveries):
        adversary_change_t = r + 1
        from .dynamics import adversary_change
        adversary_change(state, resize, adversary_change_t, rng_chg)
        steps = _descend(state, is_rls, sampler, upper, recovery_cap)
        if steps is None:
            raise RuntimeError(
                f"recovery {r} exceeded the cap of {recovery_cap} iterations")
        times[r] = steps
    return times


def collect_drift_pairs(n: int, runs: int, base_seed: int,
                        lower: int = 1, upper: Optional[int] = None) -> list:
    """(before, after) machine-1 job counts for steps taken pre-switch.

    Each run starts with every job on machine 1 under static uniform sizes
    and follows the per-bit mutation algorithm until machine 1 stops being
    the strictly fuller machine; every step taken from a pre-switch state
    contributes one pair.
    """
    if upper is None:
        upper = n
    pairs = []
    cap = 1000 + 30 * int(n**1.5)
    for r in range(runs):
        root = np.random.SeedSequence([int(base_seed), r])
        sq_inst, sq_alg = root.spawn(2)
        sizes = make_rng(sq_inst).integers(lower, upper + 1, size=n).tolist()
        state = SearchState(Instance(n, sizes, lower, upper), [0] * n)
        rng = make_rng(sq_alg)
        on_m2 = 0
        steps = 0
        while state.load1 > state.load2 and steps < cap:
            steps += 1
            before = n - on_m2
            outcome = oea_step(state, rng)
            if outcome.accepted:
                for i in outcome.flipped:
                    on_m2 += 1 if state.bits[i] else -1
            pairs.append((before, n - on_m2))
    return pairs
