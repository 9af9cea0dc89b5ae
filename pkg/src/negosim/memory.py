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
import numpy as np

logger = logging.getLogger(__name__)

MEMORY_LOG_SCHEMA_VERSION = 1


class MemoryException(Exception):
    pass


class MemoryPolicy(str, enum.Enum):
    NONE = "none"
    VANILLA = "vanilla"
    UNBIASED = "unbiased"


class NegotiationResult(str, enum.Enum):
    AGREEMENT_SUCCESS = "agreement_success"
    UNRESOLVED = "unresolved_negotiation"
    SLA_VIOLATION = "agreement_with_sla_violation"

    @property
    def is_failure(self):
        return self in FAILURE_RESULTS


FAILURE_RESULTS = frozenset(
    (NegotiationResult.UNRESOLVED, NegotiationResult.SLA_VIOLATION)
)


@dataclass(frozen=True)
class RetrievalWeights:
    alpha: float = 1.0
    beta: float = 0.5
    delta: float = 1.0
    theta: float = 5.0
    kappa: float = 0.5
    sigma: float = 4.0
    top_n: int = 5
    decay_form: str = "factor"

    def __post_init__(self):
        for name in ("alpha", "beta", "delta", "theta", "kappa"):
            if getattr(self, name) < 0:
                raise MemoryException(f"Retrieval weight '{name}' must be >= 0")
        if self.sigma <= 0:
            raise MemoryException("Anchor penalty width 'sigma' must be > 0")
        if self.top_n < 1:
            raise MemoryException("'top_n' must be >= 1")
        if self.decay_form not in ("factor", "rate"):
            raise MemoryException(f"Unknown decay form '{self.decay_form}'")


@dataclass(frozen=True)
class StrategyContext:
    trial_number: int
    keywords: typing.Tuple[str, ...] = ()


@dataclass(frozen=True)
class OutcomeSummary:
    negotiation_result: NegotiationResult
    final_allocations: typing.Dict[str, float] = field(default_factory=dict)
    latency_ms: float = 0.0
    energy_saving_pct: float = 0.0
    headroom: typing.Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class StrategyRecord:
    id: str
    description: str
    context: StrategyContext
    outcome_summary: OutcomeSummary

    def __post_init__(self):
        if self.context.trial_number < 0:
            raise MemoryException(f"Record {self.id} has a negative trial number")
        try:
            result = NegotiationResult(self.outcome_summary.negotiation_result)
        except ValueError:
            raise MemoryException(
                f"Record {self.id} has unknown negotiation result '{self.outcome_summary.negotiation_result}'"
            )
        if result is not self.outcome_summary.negotiation_result:
            object.__setattr__(
                self,
                "outcome_summary",
                replace(self.outcome_summary, negotiation_result=result),
            )

    @property
    def trial_number(self):
        return self.context.trial_number

    @property
    def is_failure(self):
        return self.outcome_summary.negotiation_result.is_failure

    def to_dict(self):
        o = self.outcome_summary
        return {
            "id": self.id,
            "description": self.description,
            "context": {
                "trial_number": self.context.trial_number,
                "keywords": list(self.context.keywords),
            },
            "outcome_summary": {
                "negotiation_result": o.negotiation_result.value,
                "final_allocations": dict(o.final_allocations),
                "latency_ms": o.latency_ms,
                "energy_saving_pct": o.energy_saving_pct,
                "headroom": dict(o.headroom),
            },
        }

    @classmethod
    def from_dict(cls, d):
        o = d["outcome_summary"]
        return cls(
            id=d["id"],
            description=d["description"],
            context=StrategyContext(
                trial_number=int(d["context"]["trial_number"]),
                keywords=tuple(d["context"].get("keywords", [])),
            ),
            outcome_summary=OutcomeSummary(
                negotiation_result=NegotiationResult(o["negotiation_result"]),
                final_allocations={
                    k: float(v) for k, v in o.get("final_allocations", {}).items()
                },
                latency_ms=float(o.get("latency_ms", 0.0)),
                energy_saving_pct=float(o.get("energy_saving_pct", 0.0)),
                headroom={k: float(v) for k, v in o.get("headroom", {}).items()},
            ),
        )


@dataclass(frozen=True)
class Query:
    trial_number: int
    keywords: typing.Tuple[str, ...] = ()
    initial_anchor: typing.Optional[float] = None
    resource: typing.Optional[str] = None


@dataclass(frozen=True)
class ScoredMemory:
    record: StrategyRecord
    semantic: float
    decay: float
    bonus: float
    anchor_penalty: float
    final_score: float
    age: int = 0


@dataclass(frozen=True)
class QueryResult:
    retrieved: typing.Tuple[ScoredMemory, ...]
    average_score: float

    def __iter__(self):
        return iter(self.retrieved)

    def __len__(self):
        return len(self.retrieved)


_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


def tokenize(text):
    return frozenset(t for t in _TOKEN_SPLIT.split(text.lower()) if t)


def jaccard(a, b):
    """
    Jaccard similarity of two token sets. Two empty sets have similarity 0
    """
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def time_decay(age, theta, form="factor"):
    if theta <= 0:
        raise MemoryException(f"Decay factor must be > 0, got {theta}")
    age = max(0, age)
    if form == "rate":
        return math.exp(-theta * age)
    return math.exp(-age / theta)


def record_allocation(record, resource=None):
    allocations = record.outcome_summary.final_allocations
    if resource is not None:
        return allocations.get(resource)
    if len(allocations) == 1:
        return next(iter(allocations.values()))
    return None


def anchor_penalty(record, anchor, kappa, sigma, resource=None):
    """
    Exponential proximity kernel between the record's final allocation and
    the anchor. Records without an allocation for the resource score 0
    """
    if sigma <= 0:
        raise MemoryException(f"Anchor penalty width must be > 0, got {sigma}")
    b_m = record_allocation(record, resource)
    if b_m is None or anchor is None:
        return 0.0
    return kappa * math.exp(-abs(b_m - anchor) / sigma)


def score(record, query, weights):
    semantic = jaccard(tokenize(" ".join(query.keywords)), tokenize(record.description))
    age = query.trial_number - record.trial_number
    decay = time_decay(age, weights.theta, weights.decay_form)
    bonus = weights.delta if record.is_failure else 0.0
    penalty = 0.0
    if query.initial_anchor is not None:
        penalty = anchor_penalty(
            record, query.initial_anchor, weights.kappa, weights.sigma, query.resource
        )
    final = weights.alpha * semantic + weights.beta * decay + bonus - penalty
    return ScoredMemory(
        record=record,
        semantic=semantic,
        decay=decay,
        bonus=bonus,
        anchor_penalty=penalty,
        final_score=final,
        age=age,
    )


MEMORY_LOG_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["schema_version", "record"],
    "properties": {
        "schema_version": {"const": MEMORY_LOG_SCHEMA_VERSION},
        "record": {
            "type": "object",
            "required": ["id", "description", "context", "outcome_summary"],
            "properties": {
                "id": {"type": "string"},
                "description": {"type": "string"},
                "context": {
                    "type": "object",
                    "required": ["trial_number"],
                    "properties": {
                        "trial_number": {"type": "integer", "minimum": 0},
                        "keywords": {"type": "array", "items": {"type": "string"}},
                    },
                },
                "outcome_summary": {
                    "type": "object",
                    "required": ["negotiation_result"],
                    "properties": {
                        "negotiation_result": {
                            "enum": [r.value for r in NegotiationResult]
                        },
                        "final_allocations": {
                            "type": "object",
                            "additionalProperties": {"type": "number"},
                        },
                        "latency_ms": {"type": "number"},
                        "energy_saving_pct": {"type": "number"},
                    },
                },
            },
        },
    },
}


class MemoryStore(object):
    """
    Collective memory of distilled strategies. A single writer appends
    records; queries score a snapshot of the current contents
    """

    def __init__(self, policy=MemoryPolicy.UNBIASED, weights=None):
        self.policy = MemoryPolicy(policy)
        self.weights = weights or RetrievalWeights()
        self.__records = []
        self.__ids = set()

    def __len__(self):
        return len(self.__records)

    def __iter__(self):
        return iter(self.snapshot())

    def snapshot(self):
        return tuple(self.__records)

    def accepts(self, record):
        if self.policy == MemoryPolicy.NONE:
            return False
        if self.policy == MemoryPolicy.VANILLA:
            return not record.is_failure
        return True

    def record(self, record):
        if record.id in self.__ids:
            raise MemoryException(f"Duplicate strategy record id '{record.id}'")
        self.__ids.add(record.id)

        if self.accepts(record):
            self.__records.append(record)
            logger.debug("Stored strategy %s (%s)", record.id, self.policy.value)
        return self

    def effective_weights(self, weights=None):
        weights = weights or self.weights
        if self.policy == MemoryPolicy.VANILLA:
            return replace(weights, delta=0.0)
        return weights

    def query(self, query, weights=None):
        weights = self.effective_weights(weights)
        if self.policy == MemoryPolicy.VANILLA and query.initial_anchor is not None:
            query = replace(query, initial_anchor=None)

        scored = [score(r, query, weights) for r in self.snapshot()]
        scored.sort(key=lambda s: (-s.final_score, -s.record.trial_number, s.record.id))
        top = tuple(scored[: weights.top_n])
        average = float(np.mean([s.final_score for s in top])) if top else 0.0
        return QueryResult(top, average)

    def dump(self, path):
        """
        Writes the store as a line-delimited log, one record per line
        """
        with Path(path).open("w") as f:
            for r in self.__records:
                f.write(
                    json.dumps(
                        {"schema_version": MEMORY_LOG_SCHEMA_VERSION, "record": r.to_dict()},
                        sort_keys=True,
                    )
                )
                f.write("\n")

    @classmethod
    def replay(cls, path, policy=MemoryPolicy.UNBIASED, weights=None):
        """
        Reconstructs a store by replaying a memory log
        """
        store = cls(policy, weights)
        validator = jsonschema.Draft7Validator(MEMORY_LOG_SCHEMA)
        with Path(path).open("r") as f:
            for num, line in enumerate(f):
                if not line.strip():
                    continue
                try:
                    entry = json.loads(line)
                except json.JSONDecodeError as e:
                    raise MemoryException(f"{path}:{num + 1}: {e}") from e
                errors = list(validator.iter_errors(entry))
                if errors:
                    raise MemoryException(f"{path}:{num + 1}: {errors[0].message}")
                store.record(StrategyRecord.from_dict(entry["record"]))
        logger.info("Replayed %d strategies from %s", len(store), path)
        return store


def query_memory(store, query, weights=None):
    return store.query(query, weights)


def record_episode(store, record):
    return store.record(record)
