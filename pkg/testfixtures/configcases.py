#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import copy

import pytest

DELETE = object()


def mutate(document, path, value):
    """
    Returns a copy of document with the value at path ("a/0/b") replaced,
    or removed when value is DELETE
    """
    d = copy.deepcopy(document)
    parts = [int(p) if p.isdigit() else p for p in path.split("/")]
    target = d
    for p in parts[:-1]:
        target = target[p]
    if value is DELETE:
        del target[parts[-1]]
    else:
        target[parts[-1]] = value
    return d


def _parametrize(names, data):
    params = []
    for d in data:
        params.append(d[1:])

    ids = []
    for idx, d in enumerate(data):
        ids.append(f"{idx + 1}/{len(data)}: {d[0]}")

    return pytest.mark.parametrize(names, params, ids=ids)


def invalid_config_tests():
    """
    (description, path, value, field named in the error)
    """
    return _parametrize(
        "path,value,field",
        [
            ("missing name", "name", DELETE, "name"),
            ("empty name", "name", "", "name"),
            ("unknown top level key", "colour", "blue", "<root>"),
            ("missing slices", "slices", DELETE, "slices"),
            ("no slices", "slices", [], "slices"),
            ("unknown slice", "slices/0/id", "mMTC", "slices/0/id"),
            ("zero sla", "slices/0/sla_latency_ms", 0, "slices/0/sla_latency_ms"),
            ("negative traffic", "slices/1/traffic_rate_mbps", -1, "slices/1/traffic_rate_mbps"),
            ("missing backlog", "slices/0/queue_backlog_mb", DELETE, "slices/0/queue_backlog_mb"),
            ("threshold above one", "slices/0/min_utility_threshold", 1.5, "slices/0/min_utility_threshold"),
            ("unknown resource", "slices/0/resource", "memory", "slices/0/resource"),
            ("zero b_total", "capacities/b_total_mhz", 0, "capacities/b_total_mhz"),
            ("missing f_max", "capacities/f_max_ghz", DELETE, "capacities/f_max_ghz"),
            ("string capacity", "capacities/b_max_mhz", "50", "capacities/b_max_mhz"),
            ("eta range inverted", "capacities/eta_min_bits_per_hz", 9, "capacities/eta_max_bits_per_hz"),
            ("negative weight", "weights/latency", -0.1, "weights/latency"),
            ("all weights zero", "weights", {"latency": 0, "energy": 0, "fairness": 0, "risk": 0}, "weights"),
            ("epsilon too large", "weights/epsilon", 0.6, "weights/epsilon"),
            ("zero rounds", "protocol/max_rounds", 0, "protocol/max_rounds"),
            ("fractional rounds", "protocol/max_rounds", 2.5, "protocol/max_rounds"),
            ("accept threshold above one", "protocol/accept_threshold", 1.2, "protocol/accept_threshold"),
            ("zero concession", "protocol/concession_rate", 0, "protocol/concession_rate"),
            ("first mover absent", "protocol/first_mover", "RAN", "protocol/first_mover"),
            ("negative noise", "traffic/noise_sigma", -0.1, "traffic/noise_sigma"),
            ("unknown memory policy", "memory/policy", "selective", "memory/policy"),
            ("zero theta", "memory/theta", 0, "memory/theta"),
            ("unknown decay form", "memory/decay_form", "linear", "memory/decay_form"),
            ("zero top_n", "memory/top_n", 0, "memory/top_n"),
            ("unknown exploration", "planning/exploration", "random", "planning/exploration"),
            ("forced bisection", "planning/exploration", "bisect", "planning/exploration"),
            ("zero trials", "trials", 0, "trials"),
            ("unknown anchor strategy", "anchor_strategy", "adaptive", "anchor_strategy"),
        ],
    )
