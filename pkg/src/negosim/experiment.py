#! /usr/bin/env python3
#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import logging
import math
import typing
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from .memory import (
    MemoryStore,
    OutcomeSummary,
    Query,
    StrategyContext,
    StrategyRecord,
)
from .negotiation import (
    Agent,
    InfeasibleAnchorException,
    ScriptedPolicy,
    fixed_anchor,
    headroom_anchor,
    latency_summary,
    plan_headroom,
    randomized_anchor,
    realised_headroom,
    run_negotiation,
)
from .report import REPORT_FORMATS
from .scenario import Composition, Resource
from .twin import (
    DigitalTwin,
    StreamPurpose,
    TrafficPerturbation,
    draw_state,
    flows,
    stream,
)

logger = logging.getLogger(__name__)

ANCHOR_STRATEGIES = ("fixed", "randomized")


class ExperimentException(Exception):
    pass


@dataclass(frozen=True)
class Retrieval:
    record_id: str
    was_failure: bool
    age: int
    agent: str = ""
    score: float = 0.0


@dataclass(frozen=True)
class TrialRecord:
    trial_index: int
    scenario: str
    anchor_strategy: str
    memory_policy: str
    seed: int
    result: str
    rounds_used: int
    anchors: typing.Dict[str, float]
    final_allocations: typing.Dict[str, float]
    executed_allocations: typing.Dict[str, float]
    latency_ms: float
    energy_saving_pct: float
    slice_latency_ms: typing.Dict[str, float]
    slice_energy_saving_pct: typing.Dict[str, float]
    distance_from_anchor_mhz: typing.Dict[str, float]
    headroom: typing.Dict[str, float] = field(default_factory=dict)
    retrievals: typing.Tuple[Retrieval, ...] = ()
    transcript: typing.Tuple[dict, ...] = ()
    fallback: bool = False

    def to_dict(self):
        return {
            "trial_index": self.trial_index,
            "scenario": self.scenario,
            "anchor_strategy": self.anchor_strategy,
            "memory_policy": self.memory_policy,
            "seed": self.seed,
            "result": self.result,
            "rounds_used": self.rounds_used,
            "anchors": dict(self.anchors),
            "final_allocations": dict(self.final_allocations),
            "executed_allocations": dict(self.executed_allocations),
            "latency_ms": _json_float(self.latency_ms),
            "energy_saving_pct": self.energy_saving_pct,
            "slice_latency_ms": {k: _json_float(v) for k, v in self.slice_latency_ms.items()},
            "slice_energy_saving_pct": dict(self.slice_energy_saving_pct),
            "distance_from_anchor_mhz": dict(self.distance_from_anchor_mhz),
            "headroom": dict(self.headroom),
            "retrievals": [
                {
                    "record_id": r.record_id,
                    "was_failure": r.was_failure,
                    "age": r.age,
                    "agent": r.agent,
                    "score": r.score,
                }
                for r in self.retrievals
            ],
            "transcript": [dict(m) for m in self.transcript],
            "fallback": self.fallback,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            trial_index=int(d["trial_index"]),
            scenario=d["scenario"],
            anchor_strategy=d["anchor_strategy"],
            memory_policy=d["memory_policy"],
            seed=int(d["seed"]),
            result=d["result"],
            rounds_used=int(d["rounds_used"]),
            anchors=dict(d["anchors"]),
            final_allocations=dict(d["final_allocations"]),
            executed_allocations=dict(d["executed_allocations"]),
            latency_ms=_parse_float(d["latency_ms"]),
            energy_saving_pct=float(d["energy_saving_pct"]),
            slice_latency_ms={k: _parse_float(v) for k, v in d["slice_latency_ms"].items()},
            slice_energy_saving_pct=dict(d["slice_energy_saving_pct"]),
            distance_from_anchor_mhz=dict(d["distance_from_anchor_mhz"]),
            headroom=dict(d.get("headroom", {})),
            retrievals=tuple(Retrieval(**r) for r in d.get("retrievals", [])),
            transcript=tuple(d.get("transcript", [])),
            fallback=bool(d.get("fallback", False)),
        )


def _json_float(v):
    return v if math.isfinite(v) else "INFEASIBLE"


def _parse_float(v):
    return math.inf if v == "INFEASIBLE" else float(v)


# Trial runner


def agent_order(config):
    """
    Agents in turn order: the configured first mover, otherwise the slice
    with the tighter SLA
    """
    slices = list(config.slices)
    first = config.protocol.first_mover
    if first is None:
        first = min(slices, key=lambda s: s.sla_latency).id
    slices.sort(key=lambda s: s.id != first)
    return slices


def trial_keywords(config, state):
    nominal = np.array([s.traffic_rate for s in config.slices if s.traffic_rate > 0])
    actual = np.array(
        [state.load(s.id).traffic_rate for s in config.slices if s.traffic_rate > 0]
    )
    ratio = float(np.mean(actual / nominal)) if nominal.size else 1.0
    if ratio > 1.05:
        traffic = "traffic-high"
    elif ratio < 0.95:
        traffic = "traffic-low"
    else:
        traffic = "traffic-nominal"

    caps = config.capacities
    spread = caps.eta_max - caps.eta_min
    mid = (caps.eta_max + caps.eta_min) / 2
    if spread > 0 and state.eta_current > mid + spread / 6:
        eta = "eta-high"
    elif spread > 0 and state.eta_current < mid - spread / 6:
        eta = "eta-low"
    else:
        eta = "eta-nominal"
    return tuple(config.keywords) + (traffic, eta)


def _default_anchor(twin, slice):
    if twin.scenario.composition == Composition.SERIAL:
        return headroom_anchor(twin, slice, twin.scenario.planning.default_headroom)
    try:
        return fixed_anchor(twin, slice)
    except InfeasibleAnchorException as e:
        logger.warning("%s; anchoring at the resource limit", e)
        return twin.upper_bound(slice)


def _slice_energy_saving(twin, allocations, reference):
    result = {}
    for s in twin.scenario.slices:
        key = s.id.value
        ref = reference.get(key, 0.0)
        value = allocations.get(key)
        if value is None or ref <= 0:
            continue
        ratio = min(value / ref, 1.0)
        saving = 1.0 - (ratio**3 if s.resource == Resource.CPU else ratio)
        result[key] = min(max(saving * 100.0, 0.0), 100.0)
    return result


def _realised_traffic(config, seed, trial_index, n_flows):
    sigma = config.traffic.noise_sigma
    if sigma <= 0:
        return np.ones(n_flows)
    rng = stream(seed, trial_index, StreamPurpose.EXECUTION)
    return rng.lognormal(0.0, sigma, size=n_flows)


def scripted_factory(slice):
    return ScriptedPolicy()


def run_trial(config, trial_index, seed, memory, policy_factory=scripted_factory):
    state = draw_state(config, stream(seed, trial_index, StreamPurpose.STATE), trial_index)
    mc_seed = int(stream(seed, trial_index, StreamPurpose.MONTE_CARLO).integers(2**63))
    twin = DigitalTwin(
        config, state, TrafficPerturbation(config.traffic.noise_sigma, mc_seed)
    )
    keywords = trial_keywords(config, state)

    slices = agent_order(config)
    defaults = {s.id.value: _default_anchor(twin, s) for s in slices}
    anchors = {}
    agents = []
    retrieval_log = []
    for idx, s in enumerate(slices):
        key = s.id.value
        found = memory.query(
            Query(trial_index, keywords, initial_anchor=defaults[key], resource=key)
        )
        for m in found:
            retrieval_log.append(
                Retrieval(
                    record_id=m.record.id,
                    was_failure=m.record.is_failure,
                    age=m.age,
                    agent=key,
                    score=m.final_score,
                )
            )

        if config.anchor_strategy == "randomized":
            rng = stream(seed, trial_index, StreamPurpose.ANCHOR, idx)
            anchors[key] = randomized_anchor(twin, s, rng)
        elif config.composition == Composition.SERIAL:
            plan = plan_headroom(found, s.id, config.planning)
            anchors[key] = headroom_anchor(twin, s, plan.headroom)
            logger.debug("Trial %d: %s headroom %.3f (%s)", trial_index, key, plan.headroom, plan.mode)
        else:
            anchors[key] = defaults[key]
        agents.append(Agent(s, policy_factory(s), found))

    reference = twin.reference_allocation(defaults)
    realised = _realised_traffic(config, seed, trial_index, len(flows(config, anchors)))
    outcome = run_negotiation(
        agents,
        twin,
        config.protocol,
        anchors,
        realised_traffic=realised,
        reference=reference,
    )
    execution = outcome.execution
    latency = latency_summary(execution.latency_ms)
    headroom = realised_headroom(twin, outcome.final_allocations)

    memory.record(
        StrategyRecord(
            id=f"{config.name}-s{seed}-t{trial_index:04d}",
            description=" ".join(keywords),
            context=StrategyContext(trial_index, keywords),
            outcome_summary=OutcomeSummary(
                negotiation_result=outcome.result,
                final_allocations=dict(outcome.final_allocations),
                latency_ms=latency if math.isfinite(latency) else -1.0,
                energy_saving_pct=execution.energy_saving_pct,
                headroom=headroom,
            ),
        )
    )

    logger.info(
        "Trial %d: %s after %d rounds, latency %.3f ms, saving %.2f%%",
        trial_index,
        outcome.result.value,
        outcome.rounds_used,
        latency,
        execution.energy_saving_pct,
    )
    return TrialRecord(
        trial_index=trial_index,
        scenario=config.name,
        anchor_strategy=config.anchor_strategy,
        memory_policy=memory.policy.value,
        seed=seed,
        result=outcome.result.value,
        rounds_used=outcome.rounds_used,
        anchors=dict(anchors),
        final_allocations=dict(outcome.final_allocations),
        executed_allocations=dict(execution.allocations),
        latency_ms=latency,
        energy_saving_pct=execution.energy_saving_pct,
        slice_latency_ms=dict(execution.latency_ms),
        slice_energy_saving_pct=_slice_energy_saving(twin, execution.allocations, reference),
        distance_from_anchor_mhz=outcome.distance_from_anchor(),
        headroom=headroom,
        retrievals=tuple(retrieval_log),
        transcript=tuple(m.to_dict() for m in outcome.transcript),
        fallback=execution.fallback,
    )


def run_trials(config, trials=None, seed=42, *, memory=None, policy_factory=scripted_factory):
    """
    Runs trials sequentially. The memory store carries over from trial to
    trial; every trial draws from its own RNG streams
    """
    trials = config.trials if trials is None else trials
    if trials < 1:
        raise ExperimentException(f"Number of trials must be >= 1, got {trials}")
    if config.anchor_strategy not in ANCHOR_STRATEGIES:
        raise ExperimentException(f"Unknown anchor strategy '{config.anchor_strategy}'")
    if memory is None:
        memory = MemoryStore(config.memory.policy, config.memory.weights)

    logger.info(
        "Running %d trials of %s (seed %d, %s anchors, %s memory)",
        trials,
        config.name,
        seed,
        config.anchor_strategy,
        memory.policy.value,
    )
    return [run_trial(config, t, seed, memory, policy_factory) for t in range(trials)]


def _sweep_worker(config, trials, seed):
    return seed, run_trials(config, trials, seed)


def run_sweep(config, seeds, trials=None, jobs=1):
    """
    Independent runs, one per seed, optionally in a process pool. Returns
    the records keyed by seed in the order given
    """
    seeds = list(seeds)
    if jobs <= 1 or len(seeds) <= 1:
        return {seed: run_trials(config, trials, seed) for seed in seeds}

    results = {}
    with ProcessPoolExecutor(max_workers=jobs) as executor:
        futures = [executor.submit(_sweep_worker, config, trials, seed) for seed in seeds]
        for future in as_completed(futures):
            seed, records = future.result()
            results[seed] = records
    return {seed: results[seed] for seed in seeds}


# Statistics


def _finite(values):
    values = [float(v) for v in values]
    kept = [v for v in values if math.isfinite(v)]
    if len(kept) != len(values):
        logger.info("Excluded %d INFEASIBLE values", len(values) - len(kept))
    if not kept:
        raise ExperimentException("No values to summarise")
    return kept


def cdf(values):
    """
    Right-continuous empirical CDF as (value, fraction <= value) pairs, one
    per distinct value
    """
    values = np.sort(np.asarray(_finite(values)))
    uniq, counts = np.unique(values, return_counts=True)
    fractions = np.cumsum(counts) / values.size
    return [(float(v), float(f)) for v, f in zip(uniq, fractions)]


def median(values):
    """
    Lower median: for an even count the smaller of the two middle values
    """
    values = sorted(_finite(values))
    return values[(len(values) - 1) // 2]


def retrieval_log(records):
    log = []
    for r in records:
        if isinstance(r, Retrieval):
            log.append(r)
        else:
            log.extend(r.retrievals)
    return log


def retrieval_ratio(records):
    """
    Retrieved successes per retrieved failure; inf when no failure was
    retrieved
    """
    log = retrieval_log(records)
    if not log:
        raise ExperimentException("No retrievals logged")
    failures = sum(1 for r in log if r.was_failure)
    successes = len(log) - failures
    if failures == 0:
        return math.inf
    return successes / failures


@dataclass(frozen=True)
class AgeStats:
    mean: float
    sd: float


def memory_age_stats(records):
    ages = np.array([r.age for r in retrieval_log(records)], dtype=float)
    if ages.size == 0:
        raise ExperimentException("No retrievals logged")
    return AgeStats(float(ages.mean()), float(ages.std()))


def summarize(records):
    latencies = [r.latency_ms for r in records]
    savings = [r.energy_saving_pct for r in records]
    distances = [d for r in records for d in r.distance_from_anchor_mhz.values()]
    results = {}
    for r in records:
        results[r.result] = results.get(r.result, 0) + 1

    summary = {
        "trials": len(records),
        "results": dict(sorted(results.items())),
        "median_latency_ms": median(latencies) if any(map(math.isfinite, latencies)) else None,
        "median_energy_saving_pct": median(savings),
        "median_distance_from_anchor_mhz": median(distances) if distances else None,
        "moved_more_than_2mhz": (
            sum(1 for d in distances if d > 2.0) / len(distances) if distances else None
        ),
    }
    if retrieval_log(records):
        ratio = retrieval_ratio(records)
        ages = memory_age_stats(records)
        summary["retrieval_ratio"] = ratio if math.isfinite(ratio) else "inf"
        summary["retrieved_age_mean"] = ages.mean
        summary["retrieved_age_sd"] = ages.sd
    return summary


def emit_report(records, fmt, output, **kwargs):
    """
    Writes the records in one of the registered report formats
    """
    if not records:
        raise ExperimentException("No records to report")
    try:
        cls = REPORT_FORMATS[fmt]
    except KeyError:
        raise ExperimentException(
            f"Unknown report format '{fmt}'. Available: {' '.join(sorted(REPORT_FORMATS))}"
        )
    return cls(**kwargs).output_records(records, output)