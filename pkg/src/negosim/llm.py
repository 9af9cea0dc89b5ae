#! /usr/bin/env python3
#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import logging
import os
from dataclasses import dataclass, replace

import jsonschema
import requests

from .biases import neutralize_prompt
from .negotiation import BiasHooks, Intent, NegotiationMessage, scripted_policy_step

logger = logging.getLogger(__name__)

API_KEY_ENV = "NEGOSIM_LLM_API_KEY"
DEFAULT_TIMEOUT = 10.0

REPLY_SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "required": ["proposal_mhz", "reason"],
    "properties": {
        "proposal_mhz": {"type": "number"},
        "reason": {"type": "string"},
    },
}


class LLMAdapterException(Exception):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    timeout: float = DEFAULT_TIMEOUT
    api_key_env: str = API_KEY_ENV

    @property
    def api_key(self):
        return os.environ.get(self.api_key_env)


def _stage(view, anchor_strategy):
    if view.opening:
        return f"Initial Proposal ({anchor_strategy.capitalize()} Anchor)"
    return "Counter Proposal"


def build_request(view, anchor_strategy="fixed"):
    """
    Structured request mirroring the context an LLM agent receives
    """
    twin = view.twin
    table = view.table
    unit = "GHz" if view.slice.resource.value == "cpu" else "MHz"
    latency = twin.evaluate(table, focus=view.slice.id).latency
    context_data = {
        "negotiation_stage": _stage(view, anchor_strategy),
        "slice_id": view.agent_id,
        "min_bw_for_sla_mhz": f"{twin.min_requirement(view.slice):.2f}",
        "dt_context": twin.context(),
        "initial_proposal_mhz": f"{view.own_anchor:.2f}",
        "round": view.round,
        "standing_proposal": {k: round(v, 4) for k, v in sorted(table.items())},
        "memory_retrievals": [
            {
                "id": m.record.id,
                "negotiation_result": m.record.outcome_summary.negotiation_result.value,
                "final_allocations": m.record.outcome_summary.final_allocations,
                "score": round(m.final_score, 4),
            }
            for m in view.retrievals
        ],
    }
    prompt = neutralize_prompt(
        "negotiate",
        {
            "agent_id": view.agent_id,
            "round": view.round,
            "offer_mhz": f"{table[view.agent_id]:.2f}",
            "unit": unit,
            "latency_ms": f"{latency:.2f}",
            "sla_latency_ms": f"{view.slice.sla_latency:.2f}",
        },
    )
    return {"prompt": prompt, "context_data": context_data}


def parse_reply(view, body):
    try:
        jsonschema.validate(body, REPLY_SCHEMA)
    except jsonschema.ValidationError as e:
        raise LLMAdapterException(f"malformed reply: {e.message}") from e

    value = float(body["proposal_mhz"])
    upper = view.twin.upper_bound(view.slice, view.table)
    if not 0 <= value <= upper:
        raise LLMAdapterException(f"proposal {value} outside [0, {upper:.3f}]")

    table = view.table
    if view.opening:
        intent = Intent.PROPOSE
    elif abs(value - table[view.agent_id]) <= 1e-9:
        intent = Intent.CONFIRM
    else:
        intent = Intent.COUNTER_PROPOSE
    return NegotiationMessage(
        intent=intent,
        sender=view.agent_id,
        round=view.round,
        proposal={**table, view.agent_id: value},
        reason=body["reason"],
    )


def llm_adapter_step(view, endpoint, hooks=None, anchor_strategy="fixed"):
    """
    Asks the external endpoint for the agent's move. Any failure falls back
    to the scripted policy with the reason tagged "fallback"
    """
    headers = {"Content-Type": "application/json"}
    if endpoint.api_key:
        headers["Authorization"] = f"Bearer {endpoint.api_key}"

    try:
        response = requests.post(
            endpoint.url,
            json=build_request(view, anchor_strategy),
            headers=headers,
            timeout=endpoint.timeout,
        )
        if response.status_code != 200:
            raise LLMAdapterException(f"HTTP {response.status_code}")
        try:
            body = response.json()
        except ValueError as e:
            raise LLMAdapterException("reply is not JSON") from e
        return parse_reply(view, body)
    except (requests.RequestException, LLMAdapterException) as e:
        logger.warning("LLM step for %s fell back to scripted policy: %s", view.agent_id, e)
        msg = scripted_policy_step(view, hooks)
        return replace(msg, reason=f"fallback ({e}): {msg.reason}")


class LLMPolicy(object):
    def __init__(self, endpoint, hooks=None, anchor_strategy="fixed"):
        if isinstance(endpoint, str):
            endpoint = EndpointConfig(endpoint)
        self.endpoint = endpoint
        self.hooks = hooks or BiasHooks()
        self.anchor_strategy = anchor_strategy

    def step(self, view):
        return llm_adapter_step(view, self.endpoint, self.hooks, self.anchor_strategy)
