#! /usr/bin/env python3
#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import enum
import logging
import math
import typing
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from .scenario import Composition, Resource, SliceId

logger = logging.getLogger(__name__)

INFEASIBLE = math.inf

# Relative nudge keeping closed-form requirements on the feasible side of the
# SLA despite rounding
_REQUIREMENT_NUDGE = 1e-12


class TwinException(Exception):
    pass


def is_feasible(latency):
    return latency is not None and math.isfinite(latency)


@dataclass(frozen=True)
class SliceLoad:
    traffic_rate: float
    queue_backlog: float

    def __post_init__(self):
        if self.traffic_rate < 0 or self.queue_backlog < 0:
            raise TwinException("Traffic rate and queue backlog must be >= 0")


@dataclass(frozen=True)
class TwinState:
    per_slice: typing.Mapping[str, SliceLoad]
    eta_current: float
    trial_index: int = 0

    def __post_init__(self):
        if self.eta_current <= 0:
            raise TwinException("Spectral efficiency must be > 0")

    def load(self, slice_id):
        key = SliceId(slice_id).value
        try:
            return self.per_slice[key]
        except KeyError:
            raise TwinException(f"Twin has no state for slice {key}")

    def context(self):
        return {
            "eta_bits_per_hz": round(self.eta_current, 4),
            "slices": {
                k: {
                    "traffic_rate_mbps": round(v.traffic_rate, 4),
                    "queue_backlog_mb": round(v.queue_backlog, 4),
                }
                for k, v in sorted(self.per_slice.items())
            },
        }


@dataclass(frozen=True)
class CostVector:
    latency: float
    energy_saving: float
    fairness: float
    risk: float
    samples: typing.Tuple[float, ...] = field(default=(), compare=False, repr=False)

    @property
    def feasible(self):
        return is_feasible(self.latency)


@dataclass(frozen=True)
class TrafficPerturbation:
    """
    Multiplicative lognormal traffic noise. A fixed seed makes every
    evaluation against the same perturbation reproducible
    """

    sigma: float = 0.1
    seed: int = 0

    def draws(self, n):
        if self.sigma < 0:
            raise TwinException("Perturbation sigma must be >= 0")
        if self.sigma == 0:
            return np.ones(n)
        rng = np.random.default_rng(self.seed)
        return rng.lognormal(0.0, self.sigma, size=n)


def queue_latency_ms(backlog, rate, bandwidth, eta):
    """
    Fluid-flow drain latency Q / (mu - lambda) in ms. Works element-wise on
    arrays; entries with mu <= lambda are INFEASIBLE
    """
    rate = np.asarray(rate, dtype=float)
    mu = np.asarray(bandwidth, dtype=float) * eta
    drain = mu - rate
    with np.errstate(divide="ignore", invalid="ignore"):
        latency = np.where(drain > 0, backlog / np.where(drain > 0, drain, 1.0) * 1000.0, np.inf)
    return latency


def compute_latency_ms(rate, cpu_freq, cycles_per_bit):
    """
    Processing time of one millisecond of arrivals at the given CPU frequency
    """
    rate = np.asarray(rate, dtype=float)
    return cycles_per_bit * rate * 1e6 / (cpu_freq * 1e9)


def predict_latency(
    state, slice, bandwidth, cpu_freq=None, *, cycles_per_bit=100.0, traffic_scale=1.0
):
    if bandwidth < 0:
        raise TwinException(f"Bandwidth must be >= 0, got {bandwidth}")
    if cpu_freq is not None and cpu_freq <= 0:
        raise TwinException(f"CPU frequency must be > 0, got {cpu_freq}")

    load = state.load(slice)
    rate = load.traffic_rate * traffic_scale
    latency = float(queue_latency_ms(load.queue_backlog, rate, bandwidth, state.eta_current))
    if not is_feasible(latency):
        return INFEASIBLE
    if cpu_freq is not None:
        latency += float(compute_latency_ms(rate, cpu_freq, cycles_per_bit))
    return latency


def predict_energy_saving(bandwidth=None, cpu_freq=None, caps=None):
    """
    Energy saving in percent: linear in RAN bandwidth, cubic power law in edge
    CPU frequency. The result is the mean of the components present
    """
    if caps is None:
        raise TwinException("Capacity configuration is required")

    components = []
    if bandwidth is not None:
        if bandwidth < 0 or bandwidth > caps.b_max * (1 + 1e-9):
            raise TwinException(
                f"Bandwidth {bandwidth} MHz outside [0, {caps.b_max}] MHz"
            )
        components.append((1.0 - min(bandwidth, caps.b_max) / caps.b_max) * 100.0)
    if cpu_freq is not None:
        if cpu_freq <= 0 or cpu_freq > caps.f_max * (1 + 1e-9):
            raise TwinException(f"CPU frequency {cpu_freq} GHz outside (0, {caps.f_max}] GHz")
        components.append((1.0 - (min(cpu_freq, caps.f_max) / caps.f_max) ** 3) * 100.0)

    if not components:
        raise TwinException("At least one allocation component is required")
    return sum(components) / len(components)


def min_bw_for_sla(state, slice, *, sla=None, traffic_scale=1.0):
    """
    Smallest bandwidth meeting the slice latency target. The closed form is
    cross-checked against a bisection on the latency curve
    """
    sla = slice.sla_latency if sla is None else sla
    if sla <= 0:
        raise TwinException(f"SLA latency must be > 0, got {sla}")

    load = state.load(slice.id)
    rate = load.traffic_rate * traffic_scale
    q = load.queue_backlog
    eta = state.eta_current
    if q == 0 and rate == 0:
        return 0.0

    closed = (q * 1000.0 / sla + rate) / eta
    closed = closed * (1 + _REQUIREMENT_NUDGE) + _REQUIREMENT_NUDGE

    if q > 0:

        def excess(b):
            return q / (b * eta - rate) * 1000.0 - sla

        lo = rate / eta * (1 + 1e-12) + 1e-12
        hi = closed * 2 + 1.0
        root = optimize.bisect(excess, lo, hi, xtol=0.005)
        if abs(root - closed) > 0.01:
            raise TwinException(
                f"Bandwidth requirement mismatch for {slice.id.value}: closed form {closed:.4f}, bisection {root:.4f}"
            )

    return closed


def min_cpu_for_latency(state, slice_id, latency_ms, *, cycles_per_bit=100.0, traffic_scale=1.0):
    """
    Smallest CPU frequency (GHz) whose compute latency fits in latency_ms
    """
    if latency_ms <= 0:
        raise TwinException(f"Latency budget must be > 0, got {latency_ms}")
    rate = state.load(slice_id).traffic_rate * traffic_scale
    if rate == 0:
        return 0.0
    return cycles_per_bit * rate * 1e6 / (latency_ms * 1e9) * (1 + _REQUIREMENT_NUDGE)


def jain_index(values):
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return 0.0
    total = values.sum()
    squares = (values**2).sum()
    if squares == 0:
        return 0.0
    return float(min(1.0, total**2 / (values.size * squares)))


@dataclass(frozen=True)
class Flow:
    """
    One latency path: a radio queue, optionally followed by edge processing
    of the same traffic
    """

    names: typing.Tuple[str, ...]
    sla: float
    source: SliceId
    bandwidth: float
    cpu_freq: typing.Optional[float] = None

    def latencies(self, state, scale, cycles_per_bit):
        load = state.load(self.source)
        rate = load.traffic_rate * np.atleast_1d(np.asarray(scale, dtype=float))
        latency = queue_latency_ms(load.queue_backlog, rate, self.bandwidth, state.eta_current)
        if self.cpu_freq is not None:
            if self.cpu_freq <= 0:
                return np.full_like(latency, np.inf)
            latency = latency + compute_latency_ms(rate, self.cpu_freq, cycles_per_bit)
        return latency


def flows(scenario, proposal):
    if scenario.composition == Composition.SERIAL:
        bw_slice = next(s for s in scenario.slices if s.resource == Resource.BANDWIDTH)
        cpu_slice = next(s for s in scenario.slices if s.resource == Resource.CPU)
        if bw_slice.id.value not in proposal or cpu_slice.id.value not in proposal:
            raise TwinException("Serial proposals must allocate both domains")
        return [
            Flow(
                (bw_slice.id.value, cpu_slice.id.value),
                min(bw_slice.sla_latency, cpu_slice.sla_latency),
                bw_slice.id,
                proposal[bw_slice.id.value],
                proposal[cpu_slice.id.value],
            )
        ]

    return [
        Flow((s.id.value,), s.sla_latency, s.id, proposal[s.id.value])
        for s in scenario.slices
        if s.id.value in proposal
    ]


def _check_caps(scenario, proposal):
    caps = scenario.capacities
    bandwidth_total = 0.0
    for key, value in proposal.items():
        try:
            s = scenario.get_slice(key)
        except (KeyError, ValueError):
            raise TwinException(f"Proposal allocates unknown slice {key}")
        if not value >= 0:
            raise TwinException(f"Allocation for {key} must be >= 0")
        if value > caps.cap(s.resource) * (1 + 1e-9):
            raise TwinException(f"Allocation {value} for {key} exceeds its cap")
        if s.resource == Resource.BANDWIDTH:
            bandwidth_total += value
    if bandwidth_total > caps.b_total * (1 + 1e-9):
        raise TwinException(
            f"Bandwidth allocations sum to {bandwidth_total:.3f} MHz, above {caps.b_total} MHz"
        )
    return bandwidth_total


def scenario_energy_saving(scenario, proposal):
    caps = scenario.capacities
    if scenario.composition == Composition.SERIAL:
        bandwidth = cpu = None
        for key, value in proposal.items():
            if scenario.get_slice(key).resource == Resource.CPU:
                cpu = value
            else:
                bandwidth = value
        if cpu is not None and cpu <= 0:
            cpu = None
        return predict_energy_saving(bandwidth, cpu, caps)

    # Slices share one carrier, so the saving is pooled over b_total
    pooled = min(sum(proposal.values()), caps.b_total)
    return predict_energy_saving(pooled, None, replace(caps, b_max=caps.b_total))


def _mean_latency(samples):
    feasible = samples[np.isfinite(samples)]
    if feasible.size == 0:
        return INFEASIBLE
    if np.all(feasible == feasible[0]):
        return float(feasible[0])
    return float(feasible.mean())


def simulate(state, proposal, scenario, horizon=1, perturbation=None, *, focus=None):
    """
    Monte Carlo evaluation of a proposal over `horizon` perturbed traffic
    draws. With `focus`, latency and risk describe the flow serving that
    slice; otherwise they cover every flow
    """
    if not proposal:
        raise TwinException("Proposal must allocate at least one slice")
    if horizon < 1:
        raise TwinException(f"Horizon must be >= 1, got {horizon}")
    _check_caps(scenario, proposal)

    perturbation = perturbation or TrafficPerturbation(sigma=0.0)
    paths = flows(scenario, proposal)
    scale = perturbation.draws(horizon * len(paths)).reshape(horizon, len(paths))
    cpb = scenario.capacities.cycles_per_bit
    samples = [p.latencies(state, scale[:, i], cpb) for i, p in enumerate(paths)]

    means = [_mean_latency(s) for s in samples]
    margins = [
        min(max((p.sla - m) / p.sla, 0.0), 1.0) if is_feasible(m) else 0.0
        for p, m in zip(paths, means)
    ]
    violated = [~(s <= p.sla) for p, s in zip(paths, samples)]

    if focus is not None:
        key = SliceId(focus).value
        idx = next((i for i, p in enumerate(paths) if key in p.names), None)
        if idx is None:
            raise TwinException(f"Proposal does not serve slice {key}")
        latency = means[idx]
        risk = float(violated[idx].mean())
        worst = samples[idx]
    else:
        if not all(is_feasible(m) for m in means):
            latency = INFEASIBLE
        elif len(means) == 1:
            latency = means[0]
        else:
            latency = float(np.mean(means))
        risk = float(np.logical_or.reduce(violated).mean())
        worst = np.max(samples, axis=0)

    return CostVector(
        latency=latency,
        energy_saving=scenario_energy_saving(scenario, proposal),
        fairness=jain_index(margins),
        risk=risk,
        samples=tuple(float(x) for x in worst),
    )


def check_chance_constraint(cost_samples, sla, epsilon):
    """
    True when the empirical fraction of samples within the SLA is at least
    1 - epsilon (boundary inclusive)
    """
    samples = np.asarray(cost_samples, dtype=float)
    if samples.size == 0:
        raise TwinException("At least one latency sample is required")
    within = int(np.count_nonzero(samples <= sla))
    return within + 1e-9 * samples.size >= (1.0 - epsilon) * samples.size


def sync(state, observed, smoothing=0.5):
    """
    Shadows a telemetry snapshot: traffic follows an exponential moving
    average, backlog is replaced
    """
    per_slice = dict(state.per_slice)
    for key, obs in observed.items():
        key = SliceId(key).value
        if isinstance(obs, SliceLoad):
            rate, backlog = obs.traffic_rate, obs.queue_backlog
        else:
            rate, backlog = obs["traffic_rate"], obs["queue_backlog"]
        if rate < 0 or backlog < 0:
            raise TwinException(f"Telemetry for {key} must be nonnegative")
        old = per_slice.get(key)
        if old is None:
            per_slice[key] = SliceLoad(rate, backlog)
        else:
            per_slice[key] = SliceLoad(
                smoothing * old.traffic_rate + (1 - smoothing) * rate, backlog
            )
    return replace(state, per_slice=per_slice)


def initial_state(scenario, *, eta=None, trial_index=0):
    caps = scenario.capacities
    if eta is None:
        eta = (caps.eta_min + caps.eta_max) / 2
    return TwinState(
        per_slice={
            s.id.value: SliceLoad(s.traffic_rate, s.queue_backlog) for s in scenario.slices
        },
        eta_current=eta,
        trial_index=trial_index,
    )


def draw_state(scenario, rng, trial_index=0):
    """
    Samples a trial's twin state: nominal traffic resampled with the
    per-trial lognormal spread, eta uniform in [eta_min, eta_max]
    """
    caps = scenario.capacities
    eta = float(rng.uniform(caps.eta_min, caps.eta_max))
    per_slice = {}
    for s in scenario.slices:
        factor = 1.0
        if scenario.traffic.trial_sigma > 0:
            factor = float(rng.lognormal(0.0, scenario.traffic.trial_sigma))
        per_slice[s.id.value] = SliceLoad(s.traffic_rate * factor, s.queue_backlog)
    return TwinState(per_slice=per_slice, eta_current=eta, trial_index=trial_index)


class StreamPurpose(enum.IntEnum):
    STATE = 0
    ANCHOR = 1
    MONTE_CARLO = 2
    EXECUTION = 3


def stream(seed, trial_index, purpose, *extra):
    """
    Independent RNG stream for one purpose within one trial. Policies that
    share a seed see the same traffic and noise draws
    """
    entropy = [int(seed), int(trial_index), int(purpose)] + [int(e) for e in extra]
    return np.random.default_rng(np.random.SeedSequence(entropy))


class DigitalTwin(object):
    """
    A scenario's twin for one trial: the shadowed state plus the Monte Carlo
    perturbation every evaluation uses
    """

    def __init__(self, scenario, state, perturbation=None, horizon=None):
        self.scenario = scenario
        self.state = state
        self.perturbation = perturbation or TrafficPerturbation(sigma=0.0)
        self.horizon = horizon or scenario.traffic.horizon

    def evaluate(self, proposal, focus=None):
        return simulate(
            self.state,
            proposal,
            self.scenario,
            self.horizon,
            self.perturbation,
            focus=focus,
        )

    def latency_budget(self, slice):
        if self.scenario.composition == Composition.SERIAL:
            return slice.sla_latency * slice.latency_share
        return slice.sla_latency

    def serving_load(self, slice):
        """
        Slice whose traffic the resource serves. In a serial chain the compute
        domain processes the radio domain's flow
        """
        if slice.resource == Resource.CPU:
            return next(s for s in self.scenario.slices if s.resource == Resource.BANDWIDTH)
        return slice

    def min_requirement(self, slice):
        """
        Smallest allocation of the slice's resource meeting its latency budget
        """
        budget = self.latency_budget(slice)
        if slice.resource == Resource.CPU:
            return min_cpu_for_latency(
                self.state,
                self.serving_load(slice).id,
                budget,
                cycles_per_bit=self.scenario.capacities.cycles_per_bit,
            )
        return min_bw_for_sla(self.state, slice, sla=budget)

    def upper_bound(self, slice, proposal=None):
        caps = self.scenario.capacities
        cap = caps.cap(slice.resource)
        if slice.resource == Resource.BANDWIDTH and proposal is not None:
            others = sum(
                v
                for k, v in proposal.items()
                if k != slice.id.value
                and self.scenario.get_slice(k).resource == Resource.BANDWIDTH
            )
            cap = min(cap, caps.b_total - others)
        return max(cap, 0.0)

    def reference_allocation(self, anchors=None):
        """
        The no-saving allocation enforcement falls back to: every domain at
        its cap, or b_total shared in proportion to the anchors
        """
        caps = self.scenario.capacities
        if self.scenario.composition == Composition.SERIAL:
            return {s.id.value: caps.cap(s.resource) for s in self.scenario.slices}
        ids = [s.id.value for s in self.scenario.slices]
        weights = [max((anchors or {}).get(k, 0.0), 0.0) for k in ids]
        if sum(weights) <= 0:
            weights = [1.0] * len(ids)
        return {k: caps.b_total * w / sum(weights) for k, w in zip(ids, weights)}

    def realised(self, proposal, scale):
        """
        Latency and SLA of every slice when the proposal runs under realised
        traffic, one scale factor per flow
        """
        scale = np.atleast_1d(np.asarray(scale, dtype=float))
        cpb = self.scenario.capacities.cycles_per_bit
        result = {}
        for idx, path in enumerate(flows(self.scenario, proposal)):
            factor = scale[min(idx, scale.size - 1)]
            latency = float(path.latencies(self.state, factor, cpb)[0])
            for name in path.names:
                result[name] = (latency, path.sla)
        return result

    def context(self):
        return self.state.context()
