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

from .biases import (
    AnchorModel,
    Candidate,
    TemporalWeighting,
    Verification,
    anchored_choice,
    automated_action,
    suggestion_shift,
    temporal_weights,
)
from .memory import NegotiationResult, QueryResult, record_allocation
from .scenario import Resource, canonicalize
from .twin import (
    check_chance_constraint,
    is_feasible,
    scenario_energy_saving,
)

logger = logging.getLogger(__name__)

ANCHOR_BUFFER = 0.05


class NegotiationException(Exception):
    pass


class ProtocolException(NegotiationException):
    pass


class InfeasibleAnchorException(NegotiationException):
    pass


class Intent(str, enum.Enum):
    PROPOSE = "propose"
    COUNTER_PROPOSE = "counter_propose"
    CONFIRM = "confirm"
    REJECT = "reject"
    COMMIT = "commit"
    EXPLAIN = "explain"


PROPOSAL_INTENTS = frozenset((Intent.PROPOSE, Intent.COUNTER_PROPOSE))


@dataclass(frozen=True)
class NegotiationMessage:
    intent: Intent
    sender: str
    round: int
    proposal: typing.Dict[str, float] = field(default_factory=dict)
    reason: str = ""
    verified: typing.Optional[bool] = None
    confidence: typing.Optional[float] = None

    def to_dict(self):
        d = {
            "intent": Intent(self.intent).value,
            "sender": self.sender,
            "round": self.round,
            "proposal": {k: self.proposal[k] for k in sorted(self.proposal)},
            "reason": self.reason,
        }
        if self.verified is not None:
            d["verified"] = self.verified
        if self.confidence is not None:
            d["confidence"] = self.confidence
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            intent=Intent(d["intent"]),
            sender=d["sender"],
            round=int(d["round"]),
            proposal={k: float(v) for k, v in d.get("proposal", {}).items()},
            reason=d.get("reason", ""),
            verified=d.get("verified"),
            confidence=d.get("confidence"),
        )


@dataclass(frozen=True)
class ExecutionReport:
    allocations: typing.Dict[str, float]
    latency_ms: typing.Dict[str, float]
    energy_saving_pct: float
    violated: bool
    fallback: bool


@dataclass(frozen=True)
class NegotiationOutcome:
    """
    Result of one session. rounds_used counts agent turns; the COMMIT the
    engine appends after a confirmation carries the next round number but is
    not counted
    """

    result: NegotiationResult
    final_allocations: typing.Dict[str, float]
    rounds_used: int
    anchors: typing.Dict[str, float]
    transcript: typing.Tuple[NegotiationMessage, ...]
    agreed: bool = False
    execution: typing.Optional[ExecutionReport] = None
    error: typing.Optional[str] = None

    def distance_from_anchor(self):
        return {
            k: abs(self.final_allocations[k] - v)
            for k, v in self.anchors.items()
            if k in self.final_allocations
        }


# Anchors


def _resource_limit(twin, slice):
    caps = twin.scenario.capacities
    if slice.resource == Resource.BANDWIDTH:
        return min(caps.b_max, caps.b_total)
    return caps.f_max


def fixed_anchor(twin, slice, buffer=ANCHOR_BUFFER):
    """
    The twin's minimum requirement for the slice plus a negotiation buffer
    """
    required = twin.min_requirement(slice)
    anchor = required * (1 + buffer)
    limit = _resource_limit(twin, slice)
    if required >= limit or anchor > limit:
        raise InfeasibleAnchorException(
            f"Slice {slice.id.value} needs {required:.3f} of at most {limit:.3f}"
        )
    return anchor


def randomized_anchor(twin, slice, rng):
    """
    Uniform draw in [1, min(0.8 * limit, 1.5 * requirement)]. A bound at or
    below 1 yields 1
    """
    bound = min(0.8 * _resource_limit(twin, slice), 1.5 * twin.min_requirement(slice))
    if bound <= 1.0:
        return 1.0
    return float(rng.uniform(1.0, bound))


def headroom_anchor(twin, slice, headroom):
    required = twin.min_requirement(slice)
    return min(required * (1 + max(headroom, 0.0)), _resource_limit(twin, slice))


# Utility


def utility(cost, slice, weights):
    if not cost.feasible:
        return 0.0
    sla = slice.sla_latency
    margin = min(max((sla - cost.latency) / sla, 0.0), 1.0)
    u = (
        weights.latency * margin
        + weights.energy * cost.energy_saving / 100.0
        + weights.fairness * cost.fairness
        + weights.risk * (1.0 - cost.risk)
    )
    return min(max(u, 0.0), 1.0)


@dataclass(frozen=True)
class Assessment:
    utility: float
    acceptable: bool
    jointly_feasible: bool
    chance_ok: bool = False
    cost: typing.Any = None


def jointly_feasible(scenario, proposal):
    caps = scenario.capacities
    total = 0.0
    for key, value in proposal.items():
        s = scenario.get_slice(key)
        if not (math.isfinite(value) and value >= 0):
            return False
        if value > caps.cap(s.resource) * (1 + 1e-9):
            return False
        if s.resource == Resource.BANDWIDTH:
            total += value
    return total <= caps.b_total * (1 + 1e-9)


def assess(twin, slice, proposal, threshold, hooks=None):
    """
    An agent's view of a joint proposal: its own utility, joint
    feasibility and its chance constraint on the twin's Monte Carlo samples
    """
    scenario = twin.scenario
    if not jointly_feasible(scenario, proposal):
        return Assessment(0.0, False, False)

    cost = twin.evaluate(proposal, focus=slice.id)
    u = utility(cost, slice, scenario.weights)
    if hooks is not None:
        u = suggestion_shift(u, hooks.suggestion_beta, hooks.suggestion_signal)
    chance_ok = cost.feasible and check_chance_constraint(
        cost.samples, slice.sla_latency, scenario.weights.epsilon
    )
    acceptable = u >= threshold and chance_ok and cost.risk <= scenario.weights.r_max
    return Assessment(u, acceptable, True, chance_ok, cost)


# Policies


@dataclass(frozen=True)
class BiasHooks:
    """
    Bias operators wired into the scripted policy. The defaults give an
    unbiased agent
    """

    anchor_gamma: typing.Optional[float] = None
    temporal: typing.Optional[TemporalWeighting] = None
    verify: bool = True
    suggestion_beta: float = 0.0
    suggestion_signal: float = 0.0


@dataclass(frozen=True)
class AgentView:
    slice: typing.Any
    round: int
    twin: typing.Any
    own_anchor: float
    anchors: typing.Dict[str, float]
    threshold: float
    standing: typing.Optional[NegotiationMessage] = None
    retrievals: QueryResult = QueryResult((), 0.0)
    concession_rate: float = 0.25
    ladder_points: int = 81
    transcript: typing.Tuple[NegotiationMessage, ...] = ()

    @property
    def agent_id(self):
        return self.slice.id.value

    @property
    def opening(self):
        return self.standing is None

    @property
    def table(self):
        if self.standing is None:
            return dict(self.anchors)
        return dict(self.standing.proposal)


def failure_precedents(view, hooks):
    """
    Allocations of retrieved failures for the agent's resource. A temporal
    hook keeps only precedents weighted at least as much as the average
    """
    failures = sorted(
        (m.record for m in view.retrievals if m.record.is_failure),
        key=lambda r: (r.trial_number, r.id),
    )
    if hooks.temporal is not None and failures:
        w = temporal_weights(len(failures), hooks.temporal)
        failures = [r for r, wt in zip(failures, w) if wt >= 1.0 / len(failures) - 1e-12]

    allocations = []
    for r in failures:
        b = record_allocation(r, view.agent_id)
        if b is not None:
            allocations.append(b)
    return allocations


def candidate_ladder(view, hooks):
    """
    Acceptable values of the agent's own resource on an evenly spaced ladder,
    with the other demands held at their standing values
    """
    table = view.table
    hi = view.twin.upper_bound(view.slice, table)
    excluded = failure_precedents(view, hooks)
    sigma = view.twin.scenario.memory.weights.sigma

    acceptable = []
    for x in np.linspace(0.0, hi, view.ladder_points):
        x = float(x)
        if any(abs(x - b) <= sigma for b in excluded):
            continue
        a = assess(view.twin, view.slice, {**table, view.agent_id: x}, view.threshold, hooks)
        if a.acceptable:
            acceptable.append((x, a))
    return acceptable


def _message(view, intent, proposal, reason, decision=None):
    return NegotiationMessage(
        intent=intent,
        sender=view.agent_id,
        round=view.round,
        proposal=dict(proposal),
        reason=reason,
        verified=None if decision is None else decision.verified and decision.executed,
        confidence=None if decision is None else decision.confidence,
    )


def scripted_policy_step(view, hooks=None):
    """
    One turn of the twin-grounded scripted agent: confirm an acceptable
    standing proposal, otherwise concede a fraction of the way towards the
    largest acceptable own demand
    """
    hooks = hooks or BiasHooks()
    own = view.agent_id
    table = view.table
    here = assess(view.twin, view.slice, table, view.threshold, hooks)

    if here.acceptable:
        reason = f"utility {here.utility:.4f} meets threshold {view.threshold:.2f}"
        intent = Intent.PROPOSE if view.opening else Intent.CONFIRM
        return _message(view, intent, table, reason)

    ladder = candidate_ladder(view, hooks)
    if not ladder:
        return _message(view, Intent.REJECT, {}, "no feasible candidate")

    excluded = failure_precedents(view, hooks)
    sigma = view.twin.scenario.memory.weights.sigma

    def clear(x):
        return all(abs(x - b) > sigma for b in excluded)

    def nearest_rung(x):
        return min(ladder, key=lambda item: (abs(item[0] - x), item[0]))[0]

    current = table.get(own, view.own_anchor)
    frontier = max(x for x, _ in ladder)
    candidate = current + view.concession_rate * (frontier - current)
    if not clear(candidate):
        candidate = nearest_rung(candidate)

    def verify(x):
        a = assess(view.twin, view.slice, {**table, own: x}, view.threshold, hooks)
        risk = a.cost.risk if a.cost is not None else 1.0
        return Verification(passed=a.acceptable, risk=risk, confidence=1.0 - risk)

    anchored = hooks.anchor_gamma is not None
    if anchored:
        options = []
        for x in (view.own_anchor, candidate, frontier):
            x = min(max(x, 0.0), view.twin.upper_bound(view.slice, table))
            if x != view.own_anchor and not clear(x):
                x = nearest_rung(x)
            a = assess(view.twin, view.slice, {**table, own: x}, view.threshold, hooks)
            options.append(Candidate(x, a.utility))
        candidate = anchored_choice(options, AnchorModel(view.own_anchor, hooks.anchor_gamma))

    decision = automated_action(candidate, verify=verify if hooks.verify else None)
    reason = f"concede towards frontier {frontier:.3f}"
    if not decision.executed and not anchored:
        candidate = nearest_rung(candidate)
        decision = automated_action(candidate, verify=verify)
        reason = f"nearest verified demand to concession, frontier {frontier:.3f}"
    elif anchored:
        reason = f"anchored at {view.own_anchor:.3f}"

    intent = Intent.PROPOSE if view.opening else Intent.COUNTER_PROPOSE
    return _message(view, intent, {**table, own: candidate}, reason, decision)


class ScriptedPolicy(object):
    def __init__(self, hooks=None):
        self.hooks = hooks or BiasHooks()

    def step(self, view):
        return scripted_policy_step(view, self.hooks)


@dataclass
class Agent:
    slice: typing.Any
    policy: typing.Any
    retrievals: QueryResult = QueryResult((), 0.0)

    @property
    def id(self):
        return self.slice.id.value


def agent_threshold(slice, protocol):
    return max(protocol.accept_threshold, slice.min_utility_threshold)


# Protocol


def validate_message(msg, agent, round, standing, scenario):
    if not isinstance(msg, NegotiationMessage):
        raise ProtocolException(f"Agent {agent.id} returned {type(msg).__name__}")
    try:
        intent = Intent(msg.intent)
    except ValueError:
        raise ProtocolException(f"Agent {agent.id} sent unknown intent {msg.intent!r}")
    if intent == Intent.COMMIT:
        raise ProtocolException(f"Agent {agent.id} committed out of turn")
    if msg.sender != agent.id:
        raise ProtocolException(f"Message from {agent.id} claims sender {msg.sender}")
    if msg.round != round:
        raise ProtocolException(f"Agent {agent.id} sent round {msg.round} in round {round}")

    for key, value in msg.proposal.items():
        try:
            scenario.get_slice(key)
        except (KeyError, ValueError):
            raise ProtocolException(f"Proposal names unknown slice {key}")
        if not (isinstance(value, (int, float)) and math.isfinite(value) and value >= 0):
            raise ProtocolException(f"Proposal value {value!r} for {key} is invalid")

    if intent in PROPOSAL_INTENTS:
        expected = sorted(s.id.value for s in scenario.slices)
        if sorted(msg.proposal) != expected:
            raise ProtocolException(f"Proposal must allocate exactly {', '.join(expected)}")
    if intent == Intent.CONFIRM:
        if standing is None or standing.sender == agent.id:
            raise ProtocolException(f"Agent {agent.id} confirmed without a counterpart proposal")
        if msg.proposal and msg.proposal != standing.proposal:
            raise ProtocolException(f"Agent {agent.id} confirmed a different proposal")
    return intent


def verify_agreement(proposal, agents, twin, protocol):
    """
    Re-checks an agreement from the transcript: joint feasibility and every
    agent's utility against its threshold
    """
    if not jointly_feasible(twin.scenario, proposal):
        raise ProtocolException("Agreement exceeds the available capacity")
    for agent in agents:
        cost = twin.evaluate(proposal, focus=agent.slice.id)
        u = utility(cost, agent.slice, twin.scenario.weights)
        if u < agent_threshold(agent.slice, protocol):
            raise ProtocolException(
                f"Agreement gives {agent.id} utility {u:.4f}, below its threshold"
            )


def run_negotiation(agents, twin, protocol, anchors, *, realised_traffic=None, reference=None):
    """
    Alternating-offers session between two agents, the first of which opens.
    With realised_traffic the outcome is also executed and classified
    """
    if protocol.max_rounds < 1:
        raise NegotiationException("max_rounds must be >= 1")
    if len(agents) != 2:
        raise NegotiationException("A session needs exactly two agents")

    transcript = []
    standing = None
    agreed = None
    rounds_used = 0
    error = None
    round = 0
    turn = 0
    try:
        while round < protocol.max_rounds:
            round += 1
            agent = agents[turn % 2]
            turn += 1
            view = AgentView(
                slice=agent.slice,
                round=round,
                twin=twin,
                own_anchor=anchors[agent.id],
                anchors=dict(anchors),
                threshold=agent_threshold(agent.slice, protocol),
                standing=standing,
                retrievals=agent.retrievals,
                concession_rate=protocol.concession_rate,
                ladder_points=protocol.ladder_points,
                transcript=tuple(transcript),
            )
            msg = agent.policy.step(view)
            intent = validate_message(msg, agent, round, standing, twin.scenario)
            transcript.append(msg)
            rounds_used = round

            if intent in PROPOSAL_INTENTS:
                standing = msg
            elif intent == Intent.REJECT:
                logger.debug("%s rejected in round %d: %s", agent.id, round, msg.reason)
                break
            elif intent == Intent.CONFIRM:
                if round >= protocol.max_rounds:
                    logger.debug("Confirmation in the last round cannot be committed")
                    break
                verify_agreement(standing.proposal, agents, twin, protocol)
                round += 1
                transcript.append(
                    NegotiationMessage(
                        Intent.COMMIT,
                        standing.sender,
                        round,
                        dict(standing.proposal),
                        reason=f"confirmed by {agent.id}",
                    )
                )
                agreed = dict(standing.proposal)
                break
    except ProtocolException as e:
        logger.warning("Negotiation aborted: %s", e)
        error = str(e)
        agreed = None

    if agreed is not None:
        result = NegotiationResult.AGREEMENT_SUCCESS
        final = agreed
    else:
        result = NegotiationResult.UNRESOLVED
        final = dict(standing.proposal) if standing is not None else dict(anchors)

    outcome = NegotiationOutcome(
        result=result,
        final_allocations=final,
        rounds_used=rounds_used,
        anchors=dict(anchors),
        transcript=tuple(transcript),
        agreed=agreed is not None,
        error=error,
    )
    if realised_traffic is not None:
        outcome = execute_agreement(outcome, twin, realised_traffic, reference)
    return outcome


def execute_agreement(outcome, twin, realised_traffic, reference=None):
    """
    Runs the outcome against realised traffic. An agreement breaching any
    SLA is reclassified and, like an unresolved session, falls back to the
    reference allocation
    """
    reference = reference or twin.reference_allocation(outcome.anchors)
    result = outcome.result

    if outcome.agreed:
        realised = twin.realised(outcome.final_allocations, realised_traffic)
        violated = any(not (lat <= sla) for lat, sla in realised.values())
        if not violated:
            report = ExecutionReport(
                allocations=dict(outcome.final_allocations),
                latency_ms={k: lat for k, (lat, _) in realised.items()},
                energy_saving_pct=scenario_energy_saving(twin.scenario, outcome.final_allocations),
                violated=False,
                fallback=False,
            )
            return replace(outcome, execution=report)
        result = NegotiationResult.SLA_VIOLATION
        logger.debug("Agreement breached the SLA under realised traffic")

    realised = twin.realised(reference, realised_traffic)
    report = ExecutionReport(
        allocations=dict(reference),
        latency_ms={k: lat for k, (lat, _) in realised.items()},
        energy_saving_pct=scenario_energy_saving(twin.scenario, reference),
        violated=result == NegotiationResult.SLA_VIOLATION,
        fallback=True,
    )
    return replace(outcome, result=result, execution=report)


# Memory-driven planning


@dataclass(frozen=True)
class HeadroomPlan:
    headroom: float
    mode: str
    successes: typing.Tuple[float, ...] = ()
    failures: typing.Tuple[float, ...] = ()


def plan_headroom(retrievals, slice_id, planning):
    """
    Headroom above the twin's requirement for the opening demand, chosen from
    retrieved precedents. Successes alone give a cautious step below the best
    proven headroom. Once failures are retrieved the safe region between the
    highest failure and the lowest success is bisected, unless the planning
    config restricts exploration to steps
    """
    key = getattr(slice_id, "value", slice_id)
    successes = []
    failures = []
    for m in retrievals:
        h = m.record.outcome_summary.headroom.get(key)
        if h is None:
            continue
        (failures if m.record.is_failure else successes).append(h)
    successes = tuple(sorted(successes))
    failures = tuple(sorted(failures))

    if failures and planning.exploration == "auto":
        upper = successes[0] if successes else planning.default_headroom
        lower = failures[-1]
        h = max((lower + upper) / 2, lower + planning.clearance)
        return HeadroomPlan(max(h, 0.0), "bisect", successes, failures)

    if successes:
        h = successes[0] * (1 - planning.step)
        return HeadroomPlan(max(h, 0.0), "step", successes, failures)

    return HeadroomPlan(planning.default_headroom, "default", successes, failures)


def realised_headroom(twin, allocations):
    headroom = {}
    for s in twin.scenario.slices:
        key = s.id.value
        if key not in allocations:
            continue
        required = twin.min_requirement(s)
        if required > 0:
            headroom[key] = allocations[key] / required - 1.0
    return headroom


def with_free_capacity(scenario, raw_state):
    """
    Scenario whose bandwidth pool is the free bandwidth of a framed state
    description, whichever framing it uses
    """
    state = canonicalize(raw_state)
    free = state.get(Resource.BANDWIDTH.value).free / 1e6
    caps = replace(scenario.capacities, b_total=free)
    return scenario.replace(capacities=caps)


def latency_summary(latencies):
    values = list(latencies.values())
    if not values or not all(is_feasible(v) for v in values):
        return math.inf
    return float(np.mean(values)) if len(values) > 1 else values[0]
