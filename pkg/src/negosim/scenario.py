#! /usr/bin/env python3
#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import enum
import json
import logging
import math
import re
import typing
from dataclasses import dataclass, field, replace
from pathlib import Path

import jsonschema

from .memory import RetrievalWeights, MemoryPolicy

logger = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).parent / "scenarios"

# Canonical fractions are quantised to this many decimals
CANONICAL_DECIMALS = 9

UNIT_SCALE = {
    "Hz": 1.0,
    "kHz": 1e3,
    "MHz": 1e6,
    "GHz": 1e9,
}


class ScenarioException(Exception):
    pass


class FramingException(ScenarioException):
    pass


class SliceId(str, enum.Enum):
    EMBB = "eMBB"
    URLLC = "URLLC"
    RAN = "RAN"
    EDGE = "Edge"


class Resource(str, enum.Enum):
    BANDWIDTH = "bandwidth"
    CPU = "cpu"


class Composition(str, enum.Enum):
    PARALLEL = "parallel"
    SERIAL = "serial"


@dataclass(frozen=True)
class SliceSpec:
    id: SliceId
    sla_latency: float
    traffic_rate: float
    queue_backlog: float
    min_utility_threshold: float = 0.0
    resource: Resource = Resource.BANDWIDTH
    latency_share: float = 1.0


@dataclass(frozen=True)
class CapacityConfig:
    b_total: float
    b_max: float
    f_max: float
    eta_min: float
    eta_max: float
    cycles_per_bit: float = 100.0

    def cap(self, resource):
        if resource == Resource.CPU:
            return self.f_max
        return self.b_max


@dataclass(frozen=True)
class UtilityWeights:
    w: typing.Tuple[float, float, float, float]
    epsilon: float = 0.05
    r_max: float = 1.0

    @property
    def latency(self):
        return self.w[0]

    @property
    def energy(self):
        return self.w[1]

    @property
    def fairness(self):
        return self.w[2]

    @property
    def risk(self):
        return self.w[3]


@dataclass(frozen=True)
class ProtocolConfig:
    max_rounds: int = 8
    accept_threshold: float = 0.6
    concession_rate: float = 0.25
    ladder_points: int = 81
    first_mover: typing.Optional[SliceId] = None


@dataclass(frozen=True)
class TrafficConfig:
    trial_sigma: float = 0.1
    noise_sigma: float = 0.1
    horizon: int = 64


@dataclass(frozen=True)
class MemoryConfig:
    policy: MemoryPolicy = MemoryPolicy.VANILLA
    weights: RetrievalWeights = field(default_factory=RetrievalWeights)


@dataclass(frozen=True)
class PlanningConfig:
    default_headroom: float = 0.5
    step: float = 0.03
    clearance: float = 0.1
    exploration: str = "auto"


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    composition: Composition
    slices: typing.Tuple[SliceSpec, ...]
    capacities: CapacityConfig
    weights: UtilityWeights
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    traffic: TrafficConfig = field(default_factory=TrafficConfig)
    memory: MemoryConfig = field(default_factory=MemoryConfig)
    planning: PlanningConfig = field(default_factory=PlanningConfig)
    keywords: typing.Tuple[str, ...] = ()
    trials: int = 30
    anchor_strategy: str = "fixed"

    def get_slice(self, slice_id):
        slice_id = SliceId(slice_id)
        for s in self.slices:
            if s.id == slice_id:
                return s
        raise KeyError(f"Slice {slice_id.value} not found in scenario {self.name}")

    @property
    def slice_ids(self):
        return tuple(s.id for s in self.slices)

    def replace(self, **kwargs):
        return replace(self, **kwargs)


_NUMBER = {"type": "number"}
_POSITIVE = {"type": "number", "exclusiveMinimum": 0}
_NONNEGATIVE = {"type": "number", "minimum": 0}
_UNIT = {"type": "number", "minimum": 0, "maximum": 1}

CONFIG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["name", "slices", "capacities", "weights"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string", "minLength": 1},
        "composition": {"enum": [c.value for c in Composition]},
        "slices": {
            "type": "array",
            "minItems": 1,
            "maxItems": 2,
            "items": {
                "type": "object",
                "required": [
                    "id",
                    "sla_latency_ms",
                    "traffic_rate_mbps",
                    "queue_backlog_mb",
                ],
                "additionalProperties": False,
                "properties": {
                    "id": {"enum": [s.value for s in SliceId]},
                    "sla_latency_ms": _POSITIVE,
                    "traffic_rate_mbps": _NONNEGATIVE,
                    "queue_backlog_mb": _NONNEGATIVE,
                    "min_utility_threshold": _UNIT,
                    "resource": {"enum": [r.value for r in Resource]},
                    "latency_share": {
                        "type": "number",
                        "exclusiveMinimum": 0,
                        "maximum": 1,
                    },
                },
            },
        },
        "capacities": {
            "type": "object",
            "required": [
                "b_total_mhz",
                "b_max_mhz",
                "f_max_ghz",
                "eta_min_bits_per_hz",
                "eta_max_bits_per_hz",
            ],
            "additionalProperties": False,
            "properties": {
                "b_total_mhz": _POSITIVE,
                "b_max_mhz": _POSITIVE,
                "f_max_ghz": _POSITIVE,
                "eta_min_bits_per_hz": _POSITIVE,
                "eta_max_bits_per_hz": _POSITIVE,
                "cycles_per_bit": _POSITIVE,
            },
        },
        "weights": {
            "type": "object",
            "required": ["latency", "energy", "fairness", "risk"],
            "additionalProperties": False,
            "properties": {
                "latency": _NONNEGATIVE,
                "energy": _NONNEGATIVE,
                "fairness": _NONNEGATIVE,
                "risk": _NONNEGATIVE,
                "epsilon": {"type": "number", "minimum": 0, "maximum": 0.5},
                "r_max": _UNIT,
            },
        },
        "protocol": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_rounds": {"type": "integer", "minimum": 1},
                "accept_threshold": _UNIT,
                "concession_rate": {
                    "type": "number",
                    "exclusiveMinimum": 0,
                    "maximum": 1,
                },
                "ladder_points": {"type": "integer", "minimum": 2},
                "first_mover": {"enum": [s.value for s in SliceId]},
            },
        },
        "traffic": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "trial_sigma": _NONNEGATIVE,
                "noise_sigma": _NONNEGATIVE,
                "horizon": {"type": "integer", "minimum": 1},
            },
        },
        "memory": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "policy": {"enum": [p.value for p in MemoryPolicy]},
                "alpha": _NONNEGATIVE,
                "beta": _NONNEGATIVE,
                "delta": _NONNEGATIVE,
                "theta": _POSITIVE,
                "kappa": _NONNEGATIVE,
                "sigma": _POSITIVE,
                "top_n": {"type": "integer", "minimum": 1},
                "decay_form": {"enum": ["factor", "rate"]},
            },
        },
        "planning": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "default_headroom": _NONNEGATIVE,
                "step": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "clearance": _NONNEGATIVE,
                "exploration": {"enum": ["auto", "step"]},
            },
        },
        "keywords": {"type": "array", "items": {"type": "string"}},
        "trials": {"type": "integer", "minimum": 1},
        "anchor_strategy": {"enum": ["fixed", "randomized"]},
    },
}


def _error_path(error):
    path = "/".join(str(p) for p in error.absolute_path)
    if error.validator == "required":
        missing = re.search(r"'([^']+)' is a required property", error.message)
        if missing:
            path = "/".join(p for p in (path, missing.group(1)) if p)
    return path or "<root>"


def validate_document(document):
    """
    Validates a configuration document against CONFIG_SCHEMA, raising
    ScenarioException naming the first offending field
    """
    validator = jsonschema.Draft7Validator(CONFIG_SCHEMA)
    errors = sorted(validator.iter_errors(document), key=lambda e: list(e.path))
    if errors:
        e = errors[0]
        raise ScenarioException(f"Invalid field '{_error_path(e)}': {e.message}")


def _read_document(source):
    if isinstance(source, dict):
        return source

    if hasattr(source, "read"):
        text = source.read()
        name = getattr(source, "name", "<stream>")
    else:
        path = Path(source)
        if not path.is_file():
            raise ScenarioException(f"Config file '{path}' does not exist")
        text = path.read_text()
        name = str(path)

    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioException(f"Unable to parse config '{name}': {e}") from e


def load_config(source):
    """
    Loads a scenario configuration from a path, an open file, or an already
    parsed document. Returns a validated ScenarioConfig with normalized
    utility weights
    """
    document = _read_document(source)
    validate_document(document)

    caps_doc = document["capacities"]
    caps = CapacityConfig(
        b_total=float(caps_doc["b_total_mhz"]),
        b_max=float(caps_doc["b_max_mhz"]),
        f_max=float(caps_doc["f_max_ghz"]),
        eta_min=float(caps_doc["eta_min_bits_per_hz"]),
        eta_max=float(caps_doc["eta_max_bits_per_hz"]),
        cycles_per_bit=float(caps_doc.get("cycles_per_bit", 100.0)),
    )
    if caps.eta_min > caps.eta_max:
        raise ScenarioException(
            "Invalid field 'capacities/eta_max_bits_per_hz': must not be less than eta_min_bits_per_hz"
        )

    weights_doc = document["weights"]
    raw_w = [float(weights_doc[k]) for k in ("latency", "energy", "fairness", "risk")]
    total = math.fsum(raw_w)
    if total <= 0:
        raise ScenarioException(
            "Invalid field 'weights': at least one weight must be positive"
        )
    weights = UtilityWeights(
        w=tuple(raw_w) if total == 1.0 else tuple(x / total for x in raw_w),
        epsilon=float(weights_doc.get("epsilon", 0.05)),
        r_max=float(weights_doc.get("r_max", 1.0)),
    )

    slices = []
    seen = set()
    for idx, s in enumerate(document["slices"]):
        slice_id = SliceId(s["id"])
        if slice_id in seen:
            raise ScenarioException(
                f"Invalid field 'slices/{idx}/id': duplicate slice '{slice_id.value}'"
            )
        seen.add(slice_id)
        slices.append(
            SliceSpec(
                id=slice_id,
                sla_latency=float(s["sla_latency_ms"]),
                traffic_rate=float(s["traffic_rate_mbps"]),
                queue_backlog=float(s["queue_backlog_mb"]),
                min_utility_threshold=float(s.get("min_utility_threshold", 0.0)),
                resource=Resource(s.get("resource", Resource.BANDWIDTH.value)),
                latency_share=float(s.get("latency_share", 1.0)),
            )
        )

    composition = Composition(document.get("composition", Composition.PARALLEL.value))
    if composition == Composition.SERIAL:
        kinds = sorted(s.resource.value for s in slices)
        if kinds != ["bandwidth", "cpu"]:
            raise ScenarioException(
                "Invalid field 'slices': serial composition needs one bandwidth and one cpu domain"
            )

    protocol_doc = document.get("protocol", {})
    first_mover = protocol_doc.get("first_mover")
    protocol = ProtocolConfig(
        max_rounds=int(protocol_doc.get("max_rounds", 8)),
        accept_threshold=float(protocol_doc.get("accept_threshold", 0.6)),
        concession_rate=float(protocol_doc.get("concession_rate", 0.25)),
        ladder_points=int(protocol_doc.get("ladder_points", 81)),
        first_mover=SliceId(first_mover) if first_mover else None,
    )
    if protocol.first_mover is not None and protocol.first_mover not in seen:
        raise ScenarioException(
            f"Invalid field 'protocol/first_mover': unknown slice '{first_mover}'"
        )

    traffic_doc = document.get("traffic", {})
    traffic = TrafficConfig(
        trial_sigma=float(traffic_doc.get("trial_sigma", 0.1)),
        noise_sigma=float(traffic_doc.get("noise_sigma", 0.1)),
        horizon=int(traffic_doc.get("horizon", 64)),
    )

    memory_doc = document.get("memory", {})
    default_sigma = 0.1 * max(caps.cap(s.resource) for s in slices)
    memory = MemoryConfig(
        policy=MemoryPolicy(memory_doc.get("policy", MemoryPolicy.VANILLA.value)),
        weights=RetrievalWeights(
            alpha=float(memory_doc.get("alpha", 1.0)),
            beta=float(memory_doc.get("beta", 0.5)),
            delta=float(memory_doc.get("delta", 1.0)),
            theta=float(memory_doc.get("theta", 5.0)),
            kappa=float(memory_doc.get("kappa", 0.5)),
            sigma=float(memory_doc.get("sigma", default_sigma)),
            top_n=int(memory_doc.get("top_n", 5)),
            decay_form=memory_doc.get("decay_form", "factor"),
        ),
    )

    planning_doc = document.get("planning", {})
    planning = PlanningConfig(
        default_headroom=float(planning_doc.get("default_headroom", 0.5)),
        step=float(planning_doc.get("step", 0.03)),
        clearance=float(planning_doc.get("clearance", 0.1)),
        exploration=planning_doc.get("exploration", "auto"),
    )

    config = ScenarioConfig(
        name=document["name"],
        composition=composition,
        slices=tuple(slices),
        capacities=caps,
        weights=weights,
        protocol=protocol,
        traffic=traffic,
        memory=memory,
        planning=planning,
        keywords=tuple(document.get("keywords", [])),
        trials=int(document.get("trials", 30)),
        anchor_strategy=document.get("anchor_strategy", "fixed"),
    )
    logger.info("Loaded scenario '%s' with %d slices", config.name, len(slices))
    return config


def load_builtin(name):
    """
    Loads one of the bundled scenario documents ("uc1" or "uc2")
    """
    path = SCENARIO_DIR / f"{name}.json"
    if not path.is_file():
        available = sorted(p.stem for p in SCENARIO_DIR.glob("*.json"))
        raise ScenarioException(
            f"Unknown built-in scenario '{name}'. Available: {' '.join(available)}"
        )
    return load_config(path)


def serialize_config(config):
    """
    Returns the document form of a config. load_config() of the result
    reproduces the config field by field
    """
    w = config.weights
    mw = config.memory.weights
    protocol = {
        "max_rounds": config.protocol.max_rounds,
        "accept_threshold": config.protocol.accept_threshold,
        "concession_rate": config.protocol.concession_rate,
        "ladder_points": config.protocol.ladder_points,
    }
    if config.protocol.first_mover is not None:
        protocol["first_mover"] = config.protocol.first_mover.value

    return {
        "name": config.name,
        "composition": config.composition.value,
        "slices": [
            {
                "id": s.id.value,
                "sla_latency_ms": s.sla_latency,
                "traffic_rate_mbps": s.traffic_rate,
                "queue_backlog_mb": s.queue_backlog,
                "min_utility_threshold": s.min_utility_threshold,
                "resource": s.resource.value,
                "latency_share": s.latency_share,
            }
            for s in config.slices
        ],
        "capacities": {
            "b_total_mhz": config.capacities.b_total,
            "b_max_mhz": config.capacities.b_max,
            "f_max_ghz": config.capacities.f_max,
            "eta_min_bits_per_hz": config.capacities.eta_min,
            "eta_max_bits_per_hz": config.capacities.eta_max,
            "cycles_per_bit": config.capacities.cycles_per_bit,
        },
        "weights": {
            "latency": w.latency,
            "energy": w.energy,
            "fairness": w.fairness,
            "risk": w.risk,
            "epsilon": w.epsilon,
            "r_max": w.r_max,
        },
        "protocol": protocol,
        "traffic": {
            "trial_sigma": config.traffic.trial_sigma,
            "noise_sigma": config.traffic.noise_sigma,
            "horizon": config.traffic.horizon,
        },
        "memory": {
            "policy": config.memory.policy.value,
            "alpha": mw.alpha,
            "beta": mw.beta,
            "delta": mw.delta,
            "theta": mw.theta,
            "kappa": mw.kappa,
            "sigma": mw.sigma,
            "top_n": mw.top_n,
            "decay_form": mw.decay_form,
        },
        "planning": {
            "default_headroom": config.planning.default_headroom,
            "step": config.planning.step,
            "clearance": config.planning.clearance,
            "exploration": config.planning.exploration,
        },
        "keywords": list(config.keywords),
        "trials": config.trials,
        "anchor_strategy": config.anchor_strategy,
    }


class Framing(str, enum.Enum):
    USED_FRACTION = "used_fraction"
    FREE_FRACTION = "free_fraction"
    USED_ABSOLUTE = "used_absolute"
    FREE_ABSOLUTE = "free_absolute"


@dataclass(frozen=True)
class FramedResource:
    """
    A resource described under one or more framings. At least one of the
    framed values must be present; when several are, they must describe the
    same state
    """

    resource: str
    total: float
    unit: str = "MHz"
    used_fraction: typing.Optional[float] = None
    free_fraction: typing.Optional[float] = None
    used: typing.Optional[float] = None
    free: typing.Optional[float] = None

    @classmethod
    def framed(cls, resource, total, framing, value, unit="MHz"):
        framing = Framing(framing)
        kwargs = {
            Framing.USED_FRACTION: "used_fraction",
            Framing.FREE_FRACTION: "free_fraction",
            Framing.USED_ABSOLUTE: "used",
            Framing.FREE_ABSOLUTE: "free",
        }
        return cls(resource, total, unit, **{kwargs[framing]: value})


@dataclass(frozen=True)
class FramedState:
    resources: typing.Tuple[FramedResource, ...]
    trial_index: int = 0


@dataclass(frozen=True)
class CanonicalResource:
    resource: str
    total: float
    free_fraction: float

    @property
    def free(self):
        return self.free_fraction * self.total

    @property
    def used(self):
        return self.total - self.free


@dataclass(frozen=True)
class CanonicalState:
    resources: typing.Tuple[CanonicalResource, ...]
    trial_index: int = 0

    def get(self, resource):
        for r in self.resources:
            if r.resource == resource:
                return r
        raise KeyError(f"Resource {resource} not in canonical state")


_FRAMING_RE = re.compile(
    r"^\s*(?P<value>[0-9]*\.?[0-9]+)\s*(?P<unit>%|[kMG]?Hz)\s+(?P<kind>free|used)\s*$"
)


def parse_framing(text, total, *, resource="bandwidth", unit="MHz"):
    """
    Parses a short framed description such as "20% free" or "40 MHz used"
    """
    m = _FRAMING_RE.match(text)
    if m is None:
        raise FramingException(f"Unsupported framing '{text}'")

    value = float(m.group("value"))
    kind = m.group("kind")
    if m.group("unit") == "%":
        framing = Framing.FREE_FRACTION if kind == "free" else Framing.USED_FRACTION
        value = value / 100.0
    else:
        framing = Framing.FREE_ABSOLUTE if kind == "free" else Framing.USED_ABSOLUTE
        value = value * UNIT_SCALE[m.group("unit")] / UNIT_SCALE[unit]
    return FramedResource.framed(resource, total, framing, value, unit=unit)


def _free_fraction(r):
    if r.unit not in UNIT_SCALE:
        raise FramingException(f"Unsupported unit '{r.unit}' for {r.resource}")
    if not r.total > 0:
        raise FramingException(f"Resource {r.resource} must have a positive total")

    candidates = []
    if r.free_fraction is not None:
        candidates.append(r.free_fraction)
    if r.used_fraction is not None:
        candidates.append(1.0 - r.used_fraction)
    if r.free is not None:
        candidates.append(r.free / r.total)
    if r.used is not None:
        candidates.append(1.0 - r.used / r.total)

    if not candidates:
        raise FramingException(f"Resource {r.resource} carries no framing")

    for c in candidates[1:]:
        if not math.isclose(c, candidates[0], rel_tol=1e-9, abs_tol=1e-9):
            raise FramingException(
                f"Inconsistent framing for {r.resource}: used + free does not match total"
            )

    frac = candidates[0]
    if frac < -1e-9 or frac > 1 + 1e-9:
        raise FramingException(
            f"Framing for {r.resource} is outside [0, {r.total}] {r.unit}"
        )
    frac = min(max(frac, 0.0), 1.0)
    return round(frac, CANONICAL_DECIMALS) + 0.0


def canonicalize(raw_state):
    """
    Converts a framed state description into a CanonicalState expressed only
    as free fractions and SI totals. Canonical states are returned unchanged
    """
    if isinstance(raw_state, CanonicalState):
        return raw_state
    if isinstance(raw_state, FramedResource):
        raw_state = FramedState((raw_state,))

    resources = []
    for r in raw_state.resources:
        resources.append(
            CanonicalResource(
                resource=r.resource,
                total=r.total * UNIT_SCALE.get(r.unit, 1.0),
                free_fraction=_free_fraction(r),
            )
        )
    return CanonicalState(tuple(resources), int(raw_state.trial_index))
