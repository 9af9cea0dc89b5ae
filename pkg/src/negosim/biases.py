#! /usr/bin/env python3
#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import enum
import logging
import math
import re
import typing
from dataclasses import dataclass, field

import jinja2
import numpy as np

from .scenario import Framing, FramedResource, canonicalize

logger = logging.getLogger(__name__)


class BiasException(Exception):
    pass


class ConsensusException(BiasException):
    def __init__(self, message, iterate):
        super().__init__(message)
        self.iterate = iterate


# Confirmation


@dataclass(frozen=True)
class Evidence:
    likelihood_h: float
    likelihood_not_h: float
    supports_h: bool

    def __post_init__(self):
        if self.likelihood_h <= 0 or self.likelihood_not_h <= 0:
            raise BiasException("Evidence likelihoods must be > 0")


def confirmation_posterior(prior, evidence, selective=False):
    """
    Posterior probability of hypothesis H. In selective mode only evidence
    supporting H enters the update; otherwise every item does (symmetric
    sampling)
    """
    if not 0 < prior < 1:
        raise BiasException(f"Prior must be in (0, 1), got {prior}")

    items = [e for e in evidence if e.supports_h or not selective]
    if not items:
        return prior

    # Log domain keeps long evidence lists from underflowing
    log_h = math.log(prior) + sum(math.log(e.likelihood_h) for e in items)
    log_not_h = math.log(1 - prior) + sum(math.log(e.likelihood_not_h) for e in items)
    top = max(log_h, log_not_h)
    h = math.exp(log_h - top)
    not_h = math.exp(log_not_h - top)
    return h / (h + not_h)


# Recency / primacy


class TemporalReference(str, enum.Enum):
    LATEST = "latest"
    EARLIEST = "earliest"


@dataclass(frozen=True)
class TemporalWeighting:
    lam: float = 0.0
    reference: TemporalReference = TemporalReference.LATEST
    horizon: typing.Optional[int] = None

    def __post_init__(self):
        if self.lam < 0:
            raise BiasException(f"Temporal decay rate must be >= 0, got {self.lam}")


def temporal_weights(n, model):
    if n < 1:
        raise BiasException(f"Need at least one observation, got {n}")
    t = np.arange(n)
    ref = n - 1 if TemporalReference(model.reference) == TemporalReference.LATEST else 0
    w = np.exp(-model.lam * np.abs(ref - t))
    return w / w.sum()


def temporal_estimate(values, model):
    values = np.asarray(values, dtype=float)
    return float(np.dot(temporal_weights(len(values), model), values))


def multi_window_average(values, window):
    """
    Mean of the uniform averages of consecutive windows. The last window may
    be shorter
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise BiasException("Need at least one observation")
    if window < 1:
        raise BiasException(f"Window must be >= 1, got {window}")
    means = [values[i : i + window].mean() for i in range(0, values.size, window)]
    return float(np.mean(means))


# Anchoring


@dataclass(frozen=True)
class AnchorModel:
    anchor: float
    gamma: float = 0.0
    distance: str = "absolute"

    def __post_init__(self):
        if self.gamma < 0:
            raise BiasException(f"Anchor penalty must be >= 0, got {self.gamma}")
        if self.distance != "absolute":
            raise BiasException(f"Unsupported anchor distance '{self.distance}'")

    def d(self, action):
        return abs(action - self.anchor)


@dataclass(frozen=True)
class Candidate:
    action: float
    utility: float


def anchored_choice(candidates, model):
    """
    argmax of U(a) - gamma * |a - a0|. Ties go to the candidate closest to
    the anchor, then to the smallest action
    """
    if not candidates:
        raise BiasException("anchored_choice needs at least one candidate")

    def key(c):
        return (-(c.utility - model.gamma * model.d(c.action)), model.d(c.action), c.action)

    return min(candidates, key=key).action


# Availability


@dataclass(frozen=True)
class SalientEvent:
    evidences: bool
    salience: float = 1.0


def availability_estimate(events, base_rate=False):
    """
    Salience-weighted frequency of events evidencing E. With base_rate every
    event counts once
    """
    weights = np.array([1.0 if base_rate else e.salience for e in events], dtype=float)
    if weights.size == 0 or np.any(weights < 0) or weights.sum() <= 0:
        raise BiasException("Total salience must be > 0")
    hits = np.array([e.evidences for e in events], dtype=bool)
    return float(weights[hits].sum() / weights.sum())


# Authority


def authority_mix(y_source, y_local, tau_s):
    if not 0 <= tau_s <= 1:
        raise BiasException(f"Trust must be in [0, 1], got {tau_s}")
    return tau_s * y_source + (1 - tau_s) * y_local


def dual_source_validate(y_source, y_local, tolerance):
    """
    Returns True when the two sources disagree by more than tolerance, in
    which case the source's trust needs recalibration
    """
    if tolerance < 0:
        raise BiasException("Tolerance must be >= 0")
    return abs(y_source - y_local) > tolerance


# Halo


@dataclass(frozen=True)
class TrustModel:
    tau: typing.Tuple[float, ...]
    eta_lr: float
    rho: typing.Tuple[typing.Tuple[float, ...], ...]

    def __post_init__(self):
        if self.eta_lr <= 0:
            raise BiasException("Trust learning rate must be > 0")
        rho = np.asarray(self.rho, dtype=float)
        n = len(self.tau)
        if rho.shape != (n, n):
            raise BiasException(f"Similarity matrix must be {n}x{n}")
        if not np.allclose(rho, rho.T) or not np.allclose(np.diag(rho), 1.0):
            raise BiasException("Similarity matrix must be symmetric with unit diagonal")
        if np.any(rho < 0) or np.any(rho > 1):
            raise BiasException("Similarities must be in [0, 1]")
        object.__setattr__(self, "tau", tuple(min(max(float(t), 0.0), 1.0) for t in self.tau))


def halo_update(trust, succeeded_task, observed, domain_separated=False):
    n = len(trust.tau)
    if not 0 <= succeeded_task < n:
        raise BiasException(f"Unknown task index {succeeded_task}")
    if not observed:
        return trust

    rho = np.asarray(trust.rho, dtype=float)[succeeded_task].copy()
    if domain_separated:
        mask = np.zeros(n)
        mask[succeeded_task] = 1.0
        rho = rho * mask
    tau = np.clip(np.asarray(trust.tau) + trust.eta_lr * rho, 0.0, 1.0)
    return TrustModel(tuple(float(t) for t in tau), trust.eta_lr, trust.rho)


# Groupthink / herding


@dataclass(frozen=True)
class QuadraticLoss:
    minimizer: float
    curvature: float = 1.0

    def __post_init__(self):
        if self.curvature <= 0:
            raise BiasException("Loss curvature must be > 0")


@dataclass(frozen=True)
class ConsensusParams:
    lambda_consensus: float = 0.0
    max_iters: int = 10000
    tol: float = 1e-10

    def __post_init__(self):
        if self.lambda_consensus < 0:
            raise BiasException("Conformity weight must be >= 0")


def groupthink_consensus(losses, params):
    """
    Minimises sum_i c_i/2 (a_i - m_i)^2 + lambda * sum_i (a_i - mean)^2 by
    block-coordinate descent over the shared mean and the deviations from it
    """
    if not losses:
        raise BiasException("Need at least one agent")
    c = np.array([loss.curvature for loss in losses], dtype=float)
    m = np.array([loss.minimizer for loss in losses], dtype=float)
    lam = params.lambda_consensus

    center = float(np.average(m, weights=c))
    actions = m.copy()
    for _ in range(params.max_iters):
        deviation = c * (m - center) / (c + 2 * lam)
        center = float(np.sum(c * (m - deviation)) / c.sum())
        updated = center + deviation
        if np.max(np.abs(updated - actions)) < params.tol:
            return tuple(float(a) for a in updated)
        actions = updated

    raise ConsensusException(
        f"Consensus did not converge within {params.max_iters} iterations",
        tuple(float(a) for a in actions),
    )


def dispersion(actions):
    a = np.asarray(actions, dtype=float)
    return float(np.sum((a - a.mean()) ** 2))


def social_bayes_update(own_belief, peer_signal):
    for p in (own_belief, peer_signal):
        if not 0 < p < 1:
            raise BiasException(f"Probabilities must be in (0, 1), got {p}")
    agree = own_belief * peer_signal
    return agree / (agree + (1 - own_belief) * (1 - peer_signal))


# Sunk cost


@dataclass(frozen=True)
class SunkCostParams:
    alpha_sunk: float
    investment: float = 0.0
    f: str = "log1p"

    def __post_init__(self):
        if self.alpha_sunk <= 0:
            raise BiasException("Sunk cost weight must be > 0")
        if self.investment < 0:
            raise BiasException("Investment must be >= 0")
        if self.f != "log1p":
            raise BiasException(f"Unsupported investment transform '{self.f}'")


def sunk_cost_utility(expected_benefit, cost, params, mitigated=False):
    rational = expected_benefit - cost
    if mitigated:
        return rational
    return rational + params.alpha_sunk * math.log1p(params.investment)


# Neglect of uncertainty


def uncertainty_choice(utility_fn, actions, scenarios, neglect=False):
    """
    Chooses among actions given weighted (x, weight) scenarios. Neglect
    evaluates every action at the mean scenario; otherwise expected utility
    is maximised. Ties go to the earliest action
    """
    if not actions:
        raise BiasException("Need at least one action")
    if not scenarios:
        raise BiasException("Need at least one scenario")
    xs = np.array([x for x, _ in scenarios], dtype=float)
    ws = np.array([w for _, w in scenarios], dtype=float)
    if np.any(ws < 0) or ws.sum() <= 0:
        raise BiasException("Scenario weights must be nonnegative and not all zero")
    ws = ws / ws.sum()

    if neglect:
        mean = float(np.dot(ws, xs))
        scores = [utility_fn(a, mean) for a in actions]
    else:
        scores = [sum(w * utility_fn(a, x) for x, w in zip(xs, ws)) for a in actions]
    return actions[int(np.argmax(scores))]


# Status quo


def status_quo_gate(u_new, u_current, c_switch, horizon=1):
    """
    True when switching pays off. A horizon above 1 accumulates the per-step
    gain as opportunity cost of staying
    """
    if c_switch < 0:
        raise BiasException("Switching cost must be >= 0")
    if horizon < 1:
        raise BiasException("Horizon must be >= 1")
    return (u_new - u_current) * horizon > c_switch


# Automation


@dataclass(frozen=True)
class Verification:
    passed: bool
    risk: typing.Optional[float] = None
    confidence: typing.Optional[float] = None
    reason: str = ""


@dataclass(frozen=True)
class AutomatedDecision:
    action: typing.Any
    verified: bool
    confidence: float
    executed: bool = True
    reason: str = ""
    risk: typing.Optional[float] = None
    error: typing.Optional[str] = None

    @property
    def status(self):
        if self.error is not None:
            return "deferred"
        if not self.executed:
            return "rejected"
        return "verified" if self.verified else "unverified"


DEFAULT_TOOL_CONFIDENCE = 0.5


def automated_action(tool_output, verify=None, confidence=None):
    """
    Executes a tool's proposal. With a verify callback the proposal only goes
    through when the check passes; a failing callback defers the action
    """
    confidence = DEFAULT_TOOL_CONFIDENCE if confidence is None else confidence
    if verify is None:
        return AutomatedDecision(tool_output, verified=False, confidence=confidence)

    try:
        result = verify(tool_output)
    except Exception as e:
        logger.warning("Verification of %r failed: %s", tool_output, e)
        return AutomatedDecision(
            tool_output,
            verified=False,
            confidence=0.0,
            executed=False,
            reason="verification error",
            error=str(e),
        )

    if isinstance(result, bool):
        result = Verification(result)
    if result.confidence is not None:
        confidence = result.confidence
    if not result.passed:
        reason = result.reason or "twin predicts SLA violation"
        return AutomatedDecision(
            tool_output,
            verified=True,
            confidence=confidence,
            executed=False,
            reason=reason,
            risk=result.risk,
        )
    return AutomatedDecision(
        tool_output,
        verified=True,
        confidence=confidence,
        reason=result.reason,
        risk=result.risk,
    )


# Survivorship


@dataclass(frozen=True)
class Outcome:
    value: float
    survived: bool


def survivorship_estimate(samples, survivors_only=False):
    selected = [s.value for s in samples if s.survived or not survivors_only]
    if not selected:
        raise BiasException("No samples in the selected subset")
    return float(np.mean(selected))


# Suggestion / prompting


def suggestion_shift(utility, beta=0.0, s=0.0):
    """
    Scalar hook perturbing a scripted utility the way prompt wording would
    """
    return utility + beta * s


PRIMING_PHRASES = (
    "at all costs",
    "at any cost",
    "whatever it takes",
    "never concede",
    "is the primary goal",
    "maximize throughput",
    "must win",
)

NEUTRAL_PROMPTS = {
    "propose": (
        "propose bandwidth for {{ slice }}",
        "state the bandwidth to allocate to {{ slice }}",
        "give a bandwidth value for {{ slice }}",
    ),
    "negotiate": (
        "You represent the {{ agent_id }} domain in round {{ round }}. "
        "Current offer: {{ offer_mhz }} {{ unit }}. "
        "Twin-predicted latency {{ latency_ms }} ms against a target of "
        "{{ sla_latency_ms }} ms. Reply with a {{ unit }} value and a short reason.",
        "Round {{ round }} for the {{ agent_id }} domain. The offer on the table "
        "is {{ offer_mhz }} {{ unit }}; the twin predicts {{ latency_ms }} ms for "
        "a target of {{ sla_latency_ms }} ms. Answer with a {{ unit }} value and "
        "a short reason.",
        "Domain {{ agent_id }}, round {{ round }}. Offer: {{ offer_mhz }} {{ unit }}. "
        "Predicted latency: {{ latency_ms }} ms. Target: {{ sla_latency_ms }} ms. "
        "Give a {{ unit }} value and a short reason.",
    ),
}


def lint_template(text):
    lowered = text.lower()
    for phrase in PRIMING_PHRASES:
        if phrase in lowered:
            raise BiasException(f"Template contains priming phrase '{phrase}': {text!r}")


class PromptLibrary(object):
    """
    Fixed set of neutral prompt templates. Each name maps to semantically
    equivalent variants; every variant is linted when the library loads
    """

    def __init__(self, templates=None):
        self.env = jinja2.Environment(undefined=jinja2.StrictUndefined, autoescape=False)
        self.__variants = {}
        for name, variants in (templates or NEUTRAL_PROMPTS).items():
            if isinstance(variants, str):
                variants = (variants,)
            for v in variants:
                lint_template(v)
            self.__variants[name] = tuple(self.env.from_string(v) for v in variants)

    def names(self):
        return sorted(self.__variants)

    def __contains__(self, name):
        return name in self.__variants

    def variants(self, name):
        try:
            return self.__variants[name]
        except KeyError:
            raise BiasException(f"Unknown prompt template '{name}'")

    def render(self, name, context, variant=0):
        templates = self.variants(name)
        if not 0 <= variant < len(templates):
            raise BiasException(f"Template '{name}' has no variant {variant}")
        return _render(templates[variant], context)

    def compile(self, text):
        lint_template(text)
        return self.env.from_string(text)


def _render(template, context):
    try:
        return template.render(**context)
    except jinja2.UndefinedError as e:
        raise BiasException(f"Unbound placeholder: {e.message}") from e


_default_library = None


def default_library():
    global _default_library
    if _default_library is None:
        _default_library = PromptLibrary()
    return _default_library


def neutralize_prompt(template, context, library=None):
    """
    Renders a neutral prompt. `template` is either a library template name
    or template text, which must pass the priming lint
    """
    library = library or default_library()
    if template in library:
        return library.render(template, context)
    return _render(library.compile(template), context)


def controlled_reprompt(template, context, k, library=None):
    """
    Renders k distinct neutral phrasings of the same request
    """
    library = library or default_library()
    variants = library.variants(template)
    if not 1 <= k <= len(variants):
        raise BiasException(
            f"Template '{template}' has {len(variants)} variants, {k} requested"
        )
    rendered = [library.render(template, context, i) for i in range(k)]
    if len(set(rendered)) != k:
        raise BiasException(f"Variants of '{template}' do not render distinctly")
    return rendered


# Demonstrations


@dataclass(frozen=True)
class BiasDemo:
    name: str
    title: str
    biased: typing.Any
    mitigated: typing.Any
    mitigation: str
    notes: typing.Tuple[str, ...] = field(default_factory=tuple)


DEMONSTRATIONS = {}


def demonstration(name, title, mitigation):
    def inner(func):
        def run():
            biased, mitigated, *notes = func()
            return BiasDemo(name, title, biased, mitigated, mitigation, tuple(notes))

        DEMONSTRATIONS[name] = run
        return func

    return inner


def run_demonstrations(names=None):
    names = names or list(DEMONSTRATIONS)
    demos = []
    for name in names:
        if name not in DEMONSTRATIONS:
            raise BiasException(f"Unknown bias '{name}'")
        demos.append(DEMONSTRATIONS[name]())
    return demos


@demonstration("confirmation", "Confirmation bias", "symmetric sampling")
def _confirmation():
    evidence = [Evidence(2.0, 1.0, True), Evidence(1.0, 2.0, False)]
    return (
        confirmation_posterior(0.5, evidence, selective=True),
        confirmation_posterior(0.5, evidence, selective=False),
        "posterior of H after one supporting and one refuting item",
    )


@demonstration("recency", "Recency / primacy bias", "multi-window averaging")
def _recency():
    values = [10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 30.0, 30.0]
    model = TemporalWeighting(lam=math.log(2), reference=TemporalReference.LATEST)
    return (
        temporal_estimate(values, model),
        multi_window_average(values, 4),
        "load estimate from a log whose last two entries spiked",
    )


@demonstration("anchoring", "Anchoring bias", "randomized anchors (gamma = 0)")
def _anchoring():
    candidates = [Candidate(10.0, 1.0), Candidate(11.0, 1.05)]
    return (
        anchored_choice(candidates, AnchorModel(anchor=10.0, gamma=0.1)),
        anchored_choice(candidates, AnchorModel(anchor=10.0, gamma=0.0)),
        "chosen allocation (MHz) next to a 10 MHz opening anchor",
    )


@demonstration("availability", "Availability heuristic", "base-rate estimate")
def _availability():
    events = [SalientEvent(True, 9.0)] + [SalientEvent(False, 1.0)] * 9
    return (
        availability_estimate(events),
        availability_estimate(events, base_rate=True),
        "estimated probability of a congestion event",
    )


@demonstration("suggestion", "Suggestion / prompting bias", "neutral prompt library")
def _suggestion():
    try:
        PromptLibrary({"propose": "maximize throughput at all costs for {{ slice }}"})
        primed = "accepted"
    except BiasException:
        primed = "rejected"
    return (
        primed,
        len(controlled_reprompt("propose", {"slice": "URLLC"}, 3)),
        "priming template at library load; distinct neutral rephrasings",
    )


@demonstration("authority", "Authority bias", "dual-source validation")
def _authority():
    mixed = authority_mix(40.0, 20.0, 0.9)
    return (
        mixed,
        "recalibrate" if dual_source_validate(40.0, 20.0, 5.0) else "accept",
        "vendor KPI report 40 vs local counter 20",
    )


@demonstration("halo", "Halo effect", "domain separation")
def _halo():
    trust = TrustModel((0.5, 0.5), 0.1, ((1.0, 0.5), (0.5, 1.0)))
    return (
        halo_update(trust, 0, True).tau[1],
        halo_update(trust, 0, True, domain_separated=True).tau[1],
        "trust in an unrelated task after a success in task 0",
    )


@demonstration("groupthink", "Groupthink / herding", "lowered conformity weight")
def _groupthink():
    losses = [QuadraticLoss(1.0), QuadraticLoss(3.0), QuadraticLoss(8.0)]
    return (
        dispersion(groupthink_consensus(losses, ConsensusParams(1e3))),
        dispersion(groupthink_consensus(losses, ConsensusParams(0.0))),
        "dispersion of PRB split proposals",
    )


@demonstration("herding", "Social Bayesian herding", "independent evaluation")
def _herding():
    return (
        social_bayes_update(0.5, 0.8),
        0.5,
        "belief that option X is optimal after a peer signal",
    )


@demonstration("uncertainty", "Neglect of probability", "expected utility over scenarios")
def _uncertainty():
    def covered(a, x):
        return 1.0 if a >= x else 0.0

    scenarios = [(4.0, 1.0), (12.0, 1.0)]
    return (
        uncertainty_choice(covered, [8.0, 12.0], scenarios, neglect=True),
        uncertainty_choice(covered, [8.0, 12.0], scenarios, neglect=False),
        "capacity chosen against an uncertain demand of 4 or 12",
    )


@demonstration("status_quo", "Status quo bias", "opportunity-cost horizon")
def _status_quo():
    return (
        status_quo_gate(0.65, 0.6, 0.1),
        status_quo_gate(0.65, 0.6, 0.1, horizon=3),
        "switch to the better configuration?",
    )


@demonstration("framing", "Framing effect", "canonical state representation")
def _framing():
    free = FramedResource.framed("bandwidth", 50.0, Framing.FREE_FRACTION, 0.2)
    used = FramedResource.framed("bandwidth", 50.0, Framing.USED_FRACTION, 0.8)
    return (
        (free.free_fraction, used.used_fraction),
        canonicalize(free) == canonicalize(used),
        "20% free vs 80% used: raw values, then canonical equality",
    )


@demonstration("sunk_cost", "Sunk cost fallacy", "reset historical influence")
def _sunk_cost():
    params = SunkCostParams(alpha_sunk=1.0, investment=math.e - 1)
    return (
        sunk_cost_utility(1.0, 2.0, params),
        sunk_cost_utility(1.0, 2.0, params, mitigated=True),
        "utility of continuing a strategy that costs more than it returns",
    )


@demonstration("automation", "Automation bias", "mandatory twin verification")
def _automation():
    def twin_check(action):
        return Verification(passed=action >= 12.0, risk=0.4)

    return (
        automated_action(9.0).status,
        automated_action(9.0, verify=twin_check).status,
        "tool proposes 9 MHz where the twin requires 12 MHz",
    )


@demonstration("survivorship", "Survivorship bias", "balanced success/failure logs")
def _survivorship():
    samples = [Outcome(1.0, True), Outcome(-1.0, False)]
    return (
        survivorship_estimate(samples, survivors_only=True),
        survivorship_estimate(samples),
        "mean outcome of a strategy",
    )
