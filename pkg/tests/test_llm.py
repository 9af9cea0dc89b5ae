#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import pytest

from negosim.llm import (
    API_KEY_ENV,
    EndpointConfig,
    LLMAdapterException,
    LLMPolicy,
    build_request,
    llm_adapter_step,
    parse_reply,
)
from negosim.memory import NegotiationResult
from negosim.negotiation import Agent, AgentView, Intent, NegotiationMessage, run_negotiation
from negosim.twin import DigitalTwin, initial_state

UC1_ANCHORS = {"URLLC": 9.0, "eMBB": 7.8}


@pytest.fixture
def twin(uc1):
    return DigitalTwin(uc1, initial_state(uc1))


def make_view(twin, slice_id, round=1, standing=None):
    return AgentView(
        slice=twin.scenario.get_slice(slice_id),
        round=round,
        twin=twin,
        own_anchor=UC1_ANCHORS[slice_id],
        anchors=dict(UC1_ANCHORS),
        threshold=0.6,
        standing=standing,
    )


def standing_offer():
    return NegotiationMessage(Intent.PROPOSE, "URLLC", 1, dict(UC1_ANCHORS))


def test_build_request(twin):
    request = build_request(make_view(twin, "URLLC"))
    context = request["context_data"]
    assert context["negotiation_stage"] == "Initial Proposal (Fixed Anchor)"
    assert context["slice_id"] == "URLLC"
    assert context["round"] == 1
    assert context["standing_proposal"] == UC1_ANCHORS
    assert context["initial_proposal_mhz"] == "9.00"
    assert context["memory_retrievals"] == []
    assert "URLLC" in request["prompt"]
    assert "9.00 MHz" in request["prompt"]

    request = build_request(make_view(twin, "eMBB", 2, standing_offer()), "randomized")
    assert request["context_data"]["negotiation_stage"] == "Counter Proposal"

    request = build_request(make_view(twin, "URLLC"), "randomized")
    assert request["context_data"]["negotiation_stage"] == "Initial Proposal (Randomized Anchor)"


def test_parse_reply(twin):
    msg = parse_reply(make_view(twin, "URLLC"), {"proposal_mhz": 9.0, "reason": "r"})
    assert msg.intent == Intent.PROPOSE
    assert msg.proposal == UC1_ANCHORS
    assert msg.reason == "r"

    view = make_view(twin, "eMBB", 2, standing_offer())
    assert parse_reply(view, {"proposal_mhz": 7.8, "reason": ""}).intent == Intent.CONFIRM
    msg = parse_reply(view, {"proposal_mhz": 10, "reason": ""})
    assert msg.intent == Intent.COUNTER_PROPOSE
    assert msg.proposal == {"URLLC": 9.0, "eMBB": 10.0}


@pytest.mark.parametrize(
    "body,error",
    [
        ({"proposal_mhz": 9.0}, "malformed"),
        ({"proposal_mhz": "9", "reason": ""}, "malformed"),
        ([], "malformed"),
        ({"proposal_mhz": -1.0, "reason": ""}, "outside"),
        # 50 MHz less the 7.8 MHz eMBB demand
        ({"proposal_mhz": 42.3, "reason": ""}, "outside"),
    ],
)
def test_parse_reply_invalid(twin, body, error):
    with pytest.raises(LLMAdapterException, match=error):
        parse_reply(make_view(twin, "URLLC"), body)


def test_echo(twin, llm_server, monkeypatch):
    monkeypatch.delenv(API_KEY_ENV, raising=False)
    msg = llm_adapter_step(make_view(twin, "URLLC"), EndpointConfig(llm_server.uri))
    assert msg.intent == Intent.PROPOSE
    assert msg.proposal == UC1_ANCHORS
    assert msg.reason == "stub keeps its demand"

    requests = llm_server.requests()
    assert len(requests) == 1
    assert requests[0]["authorization"] is None
    assert requests[0]["body"]["context_data"]["slice_id"] == "URLLC"


def test_api_key(twin, llm_server, monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "secret")
    llm_adapter_step(make_view(twin, "URLLC"), EndpointConfig(llm_server.uri))
    assert llm_server.requests()[0]["authorization"] == "Bearer secret"


@pytest.mark.parametrize(
    "mode,reason",
    [
        ("error", "HTTP 500"),
        ("malformed", "malformed reply"),
        ("out-of-range", "outside"),
        ("not-json", "reply is not JSON"),
        ("slow", "fallback ("),
    ],
)
def test_fallback(twin, llm_server_factory, mode, reason):
    server = llm_server_factory(mode)
    endpoint = EndpointConfig(server.uri, timeout=0.5)
    msg = llm_adapter_step(make_view(twin, "URLLC"), endpoint)

    assert msg.reason.startswith("fallback (")
    assert reason in msg.reason
    # The scripted policy opens with the anchors
    assert msg.intent == Intent.PROPOSE
    assert msg.proposal == UC1_ANCHORS


def test_unreachable_endpoint(twin):
    msg = llm_adapter_step(make_view(twin, "URLLC"), EndpointConfig("http://127.0.0.1:1", timeout=0.5))
    assert msg.reason.startswith("fallback (")
    assert msg.intent == Intent.PROPOSE


def test_llm_session(twin, uc1, llm_server):
    agents = [
        Agent(uc1.get_slice("URLLC"), LLMPolicy(llm_server.uri)),
        Agent(uc1.get_slice("eMBB"), LLMPolicy(llm_server.uri)),
    ]
    outcome = run_negotiation(agents, twin, uc1.protocol, UC1_ANCHORS)
    assert outcome.result == NegotiationResult.AGREEMENT_SUCCESS
    assert outcome.final_allocations == UC1_ANCHORS
    assert [r["body"]["context_data"]["slice_id"] for r in llm_server.requests()] == ["URLLC", "eMBB"]
