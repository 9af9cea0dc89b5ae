#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import json
import math
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from negosim.experiment import Retrieval, memory_age_stats, retrieval_ratio
from negosim.memory import (
    MemoryException,
    MemoryPolicy,
    MemoryStore,
    NegotiationResult,
    OutcomeSummary,
    Query,
    RetrievalWeights,
    StrategyContext,
    StrategyRecord,
    anchor_penalty,
    jaccard,
    query_memory,
    record_episode,
    score,
    time_decay,
    tokenize,
)

VOCABULARY = ("ran", "edge", "energy", "traffic", "high", "low", "cpu", "latency")


def make_record(id, trial, description="ran edge", result="agreement_success", allocations=None):
    return StrategyRecord(
        id=id,
        description=description,
        context=StrategyContext(trial, tuple(description.split())),
        outcome_summary=OutcomeSummary(
            negotiation_result=NegotiationResult(result),
            final_allocations=allocations or {},
            latency_ms=4.0,
            energy_saving_pct=30.0,
        ),
    )


def brute_force_score(record, query, w):
    q = set(t for t in " ".join(query.keywords).lower().replace("-", " ").split() if t)
    r = set(t for t in record.description.lower().replace("-", " ").split() if t)
    sim = len(q & r) / len(q | r) if q | r else 0.0
    age = max(0, query.trial_number - record.trial_number)
    decay = math.exp(-age / w.theta)
    bonus = w.delta if record.outcome_summary.negotiation_result.is_failure else 0.0
    penalty = 0.0
    if query.initial_anchor is not None and query.resource in record.outcome_summary.final_allocations:
        b = record.outcome_summary.final_allocations[query.resource]
        penalty = w.kappa * math.exp(-abs(b - query.initial_anchor) / w.sigma)
    return w.alpha * sim + w.beta * decay + bonus - penalty


def test_tokenize():
    assert tokenize("High Traffic, high-traffic!") == {"high", "traffic"}
    assert tokenize("") == frozenset()
    assert tokenize("CPU 45GHz") == {"cpu", "45ghz"}


def test_jaccard():
    assert jaccard({"a", "b"}, {"a", "b"}) == 1.0
    assert jaccard({"a", "b"}, {"b", "c"}) == 1 / 3
    assert jaccard(set(), set()) == 0.0


def test_time_decay():
    assert time_decay(0, 5.0) == 1.0
    assert abs(time_decay(5, 5.0) - math.exp(-1)) <= 1e-12
    assert time_decay(-3, 5.0) == 1.0
    assert time_decay(2, 0.5, "rate") == pytest.approx(math.exp(-1))
    with pytest.raises(MemoryException):
        time_decay(1, 0.0)


def test_anchor_penalty():
    r = make_record("a", 0, allocations={"RAN": 25.0})
    assert anchor_penalty(r, 25.0, 0.5, 5.0, "RAN") == 0.5
    assert anchor_penalty(r, 30.0, 0.5, 5.0, "RAN") == pytest.approx(0.5 * math.exp(-1))
    assert anchor_penalty(r, 1e9, 0.5, 5.0, "RAN") == pytest.approx(0.0)
    assert anchor_penalty(r, 25.0, 0.5, 5.0, "Edge") == 0.0
    # A single allocation is used when no resource is named
    assert anchor_penalty(r, 25.0, 0.5, 5.0) == 0.5
    assert anchor_penalty(make_record("b", 0), 25.0, 0.5, 5.0) == 0.0
    with pytest.raises(MemoryException):
        anchor_penalty(r, 25.0, 0.5, 0.0)


def test_score_examples():
    w = RetrievalWeights(alpha=1.0, beta=0.5, delta=1.0)
    query = Query(3, ("ran", "energy"))
    success = make_record("s", 3, "ran edge")
    failure = make_record("f", 3, "ran edge", result="unresolved_negotiation")

    s = score(success, query, w)
    assert s.semantic == 1 / 3
    assert s.final_score == pytest.approx(1 / 3 + 0.5)
    assert score(make_record("s2", 3, "ran energy x y"), query, w).final_score == 1.0
    assert score(make_record("f2", 3, "ran energy x y", "unresolved_negotiation"), query, w).final_score == 2.0
    assert score(failure, query, w).bonus == 1.0
    assert score(make_record("v", 3, result="agreement_with_sla_violation"), query, w).bonus == 1.0

    old = score(make_record("o", 0, "nothing shared"), Query(1000, ("ran",)), w)
    assert old.final_score == pytest.approx(0.0)


@settings(max_examples=1000, deadline=None)
@given(
    record_words=st.lists(st.sampled_from(VOCABULARY), max_size=5),
    query_words=st.lists(st.sampled_from(VOCABULARY), max_size=5),
    record_trial=st.integers(0, 100),
    query_trial=st.integers(0, 100),
    result=st.sampled_from(list(NegotiationResult)),
    allocation=st.one_of(st.none(), st.floats(0.0, 50.0)),
    anchor=st.one_of(st.none(), st.floats(0.0, 50.0)),
    alpha=st.floats(0.0, 2.0),
    beta=st.floats(0.0, 2.0),
    delta=st.floats(0.0, 2.0),
    theta=st.floats(0.5, 20.0),
    kappa=st.floats(0.0, 1.0),
    sigma=st.floats(0.5, 10.0),
)
def test_score_matches_oracle(
    record_words,
    query_words,
    record_trial,
    query_trial,
    result,
    allocation,
    anchor,
    alpha,
    beta,
    delta,
    theta,
    kappa,
    sigma,
):
    w = RetrievalWeights(alpha, beta, delta, theta, kappa, sigma)
    allocations = {} if allocation is None else {"RAN": allocation}
    record = make_record("r", record_trial, " ".join(record_words), result.value, allocations)
    query = Query(query_trial, tuple(query_words), anchor, "RAN")

    s = score(record, query, w)
    expected = brute_force_score(record, query, w)
    assert s.final_score == pytest.approx(expected, rel=1e-12, abs=1e-12)
    assert s.final_score == pytest.approx(
        w.alpha * s.semantic + w.beta * s.decay + s.bonus - s.anchor_penalty, rel=1e-12, abs=1e-12
    )


def test_unbiased_without_bonus_is_vanilla():
    records = [make_record(f"r{i}", i, "ran edge energy"[: 3 + i]) for i in range(8)]
    w = RetrievalWeights(delta=0.0)
    vanilla = MemoryStore(MemoryPolicy.VANILLA, w)
    unbiased = MemoryStore(MemoryPolicy.UNBIASED, w)
    for r in records:
        vanilla.record(r)
        unbiased.record(r)
    q = Query(10, ("ran", "energy"))
    assert vanilla.query(q) == unbiased.query(q)


def test_policies():
    failure = make_record("f", 0, result="unresolved_negotiation")
    success = make_record("s", 1)

    vanilla = MemoryStore(MemoryPolicy.VANILLA)
    vanilla.record(failure)
    assert len(vanilla) == 0
    vanilla.record(success)
    assert [r.id for r in vanilla] == ["s"]

    unbiased = record_episode(MemoryStore(MemoryPolicy.UNBIASED), failure)
    assert [r.id for r in unbiased] == ["f"]

    none = MemoryStore(MemoryPolicy.NONE)
    none.record(success)
    assert len(none) == 0


def test_vanilla_ignores_bonus_and_anchor():
    store = MemoryStore(MemoryPolicy.VANILLA, RetrievalWeights(delta=1.0, kappa=0.5))
    assert store.effective_weights().delta == 0.0
    store.record(make_record("s", 0, allocations={"RAN": 25.0}))
    found = store.query(Query(1, ("ran",), 25.0, "RAN"))
    assert found.retrieved[0].anchor_penalty == 0.0


def test_duplicate_id():
    store = MemoryStore(MemoryPolicy.UNBIASED)
    store.record(make_record("a", 0))
    with pytest.raises(MemoryException, match="Duplicate"):
        store.record(make_record("a", 1))

    # Dropped records still reserve their id
    vanilla = MemoryStore(MemoryPolicy.VANILLA)
    vanilla.record(make_record("f", 0, result="unresolved_negotiation"))
    with pytest.raises(MemoryException):
        vanilla.record(make_record("f", 1))


def test_invalid_records():
    with pytest.raises(MemoryException):
        make_record("a", -1)
    with pytest.raises(MemoryException, match="unknown negotiation result"):
        StrategyRecord(
            id="a",
            description="",
            context=StrategyContext(0),
            outcome_summary=OutcomeSummary(negotiation_result="maybe"),
        )


@pytest.mark.parametrize(
    "kwargs",
    [
        {"alpha": -1.0},
        {"theta": -1.0},
        {"sigma": 0.0},
        {"top_n": 0},
        {"decay_form": "linear"},
    ],
)
def test_invalid_weights(kwargs):
    with pytest.raises(MemoryException):
        RetrievalWeights(**kwargs)


def test_query_empty():
    result = query_memory(MemoryStore(MemoryPolicy.UNBIASED), Query(0, ("ran",)))
    assert len(result) == 0
    assert result.average_score == 0.0


def test_query_top_n_and_order():
    store = MemoryStore(MemoryPolicy.UNBIASED, RetrievalWeights(top_n=5))
    for i in range(5):
        store.record(make_record(f"r{i}", 10, "ran edge energy"))
    store.record(make_record("dominated", 0, "unrelated words"))

    result = store.query(Query(10, ("ran", "edge", "energy")))
    ids = [m.record.id for m in result]
    assert "dominated" not in ids
    # Equal scores fall back to the record id
    assert ids == ["r0", "r1", "r2", "r3", "r4"]
    assert result.average_score == pytest.approx(1.5)


def test_query_ties_prefer_newer():
    store = MemoryStore(MemoryPolicy.UNBIASED, RetrievalWeights(beta=0.0))
    store.record(make_record("old", 1))
    store.record(make_record("new", 2))
    assert [m.record.id for m in store.query(Query(5, ("ran",)))] == ["new", "old"]


def test_query_fewer_than_top_n():
    store = MemoryStore(MemoryPolicy.UNBIASED)
    for i in range(3):
        store.record(make_record(f"r{i}", i))
    assert len(store.query(Query(5, ("ran",)))) == 3


def test_query_ages():
    store = MemoryStore(MemoryPolicy.UNBIASED)
    store.record(make_record("r", 2))
    assert store.query(Query(7, ("ran",))).retrieved[0].age == 5


def balanced_store(policy, rng):
    # Three of each outcome with top 5: every query leaves out one record, so
    # the unbiased ratio lands in [2/3, 3/2] whatever the scores are. This
    # checks the pooled bookkeeping, not that scoring balances retrieval
    store = MemoryStore(policy, RetrievalWeights(alpha=1.0, beta=0.5, delta=1.0, top_n=5))
    for i in range(3):
        for result in ("agreement_success", "unresolved_negotiation"):
            words = " ".join(rng.sample(VOCABULARY, 3))
            store.record(make_record(f"{result}-{i}", rng.randrange(20), words, result))
    return store


@pytest.mark.parametrize(
    "policy,low,high",
    [
        (MemoryPolicy.UNBIASED, 0.5, 2.0),
        (MemoryPolicy.VANILLA, math.inf, math.inf),
    ],
)
def test_retrieval_ratio_balanced_store(policy, low, high):
    rng = random.Random(0)
    log = []
    for _ in range(100):
        store = balanced_store(policy, rng)
        q = Query(20, tuple(rng.sample(VOCABULARY, 3)))
        result = store.query(q)

        # Brute force: score every record and keep the best
        expected = sorted(
            store,
            key=lambda r: (-brute_force_score(r, q, store.effective_weights()), -r.trial_number, r.id),
        )[:5]
        assert [m.record.id for m in result] == [r.id for r in expected]
        log.extend(Retrieval(m.record.id, m.record.is_failure, m.age) for m in result)

    ratio = retrieval_ratio(log)
    assert low <= ratio <= high


@settings(max_examples=200, deadline=None)
@given(
    ages=st.lists(st.integers(0, 5), min_size=2, max_size=12),
    words=st.lists(st.lists(st.sampled_from(VOCABULARY), max_size=3), min_size=12, max_size=12),
    failures=st.lists(st.booleans(), min_size=12, max_size=12),
    query_words=st.lists(st.sampled_from(VOCABULARY), min_size=1, max_size=3),
)
def test_mean_age_nondecreasing_in_theta(ages, words, failures, query_words):
    # Holds while every age is within the decay factor
    means = []
    for theta in (5.0, 10.0, 20.0, 50.0):
        store = MemoryStore(MemoryPolicy.UNBIASED, RetrievalWeights(theta=theta, top_n=3))
        for i, age in enumerate(ages):
            result = "unresolved_negotiation" if failures[i] else "agreement_success"
            store.record(make_record(f"r{i:02d}", 5 - age, " ".join(words[i]), result))
        found = store.query(Query(5, tuple(query_words)))
        means.append(sum(m.age for m in found) / len(found))
    for a, b in zip(means, means[1:]):
        assert b >= a - 1e-12


def test_age_stats():
    log = [Retrieval("a", False, 2), Retrieval("b", True, 4)]
    stats = memory_age_stats(log)
    assert stats.mean == 3.0
    assert stats.sd == 1.0


def test_dump_and_replay(tmp_path):
    store = MemoryStore(MemoryPolicy.UNBIASED)
    store.record(make_record("a", 0, allocations={"RAN": 25.0}))
    store.record(make_record("b", 1, result="agreement_with_sla_violation"))
    path = tmp_path / "memory.jsonl"
    store.dump(path)

    lines = path.read_text().splitlines()
    assert len(lines) == 2
    assert json.loads(lines[0])["schema_version"] == 1

    replayed = MemoryStore.replay(path, MemoryPolicy.UNBIASED)
    assert list(replayed) == list(store)

    vanilla = MemoryStore.replay(path, MemoryPolicy.VANILLA)
    assert [r.id for r in vanilla] == ["a"]


def test_replay_invalid(tmp_path):
    path = tmp_path / "memory.jsonl"
    path.write_text('{"schema_version": 2, "record": {}}\n')
    with pytest.raises(MemoryException, match=":1:"):
        MemoryStore.replay(path)

    path.write_text("not json\n")
    with pytest.raises(MemoryException):
        MemoryStore.replay(path)
