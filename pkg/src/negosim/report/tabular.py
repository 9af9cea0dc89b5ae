#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import csv
import math

from ..scenario import SliceId
from .common import ReportFormat
from .registry import report_format

CSV_SCHEMA_VERSION = 1

TRIAL_COLUMNS = (
    "schema_version",
    "trial_index",
    "scenario",
    "anchor_strategy",
    "memory_policy",
    "seed",
    "result",
    "rounds_used",
    "latency_ms",
    "energy_saving_pct",
    "fallback",
)

SLICE_FIELDS = (
    "anchor",
    "final",
    "distance_from_anchor",
    "latency_ms",
    "energy_saving_pct",
    "headroom",
)

RETRIEVAL_COLUMNS = (
    "retrievals",
    "retrieved_failures",
    "retrieval_log",
)

CSV_COLUMNS = (
    TRIAL_COLUMNS
    + tuple(f"{field}_{s.value}" for s in SliceId for field in SLICE_FIELDS)
    + RETRIEVAL_COLUMNS
)


def fmt(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        if not math.isfinite(value):
            return "INFEASIBLE"
        return f"{value:.6f}"
    return str(value)


def record_row(r):
    row = {
        "schema_version": CSV_SCHEMA_VERSION,
        "trial_index": r.trial_index,
        "scenario": r.scenario,
        "anchor_strategy": r.anchor_strategy,
        "memory_policy": r.memory_policy,
        "seed": r.seed,
        "result": r.result,
        "rounds_used": r.rounds_used,
        "latency_ms": r.latency_ms,
        "energy_saving_pct": r.energy_saving_pct,
        "fallback": r.fallback,
    }
    per_slice = {
        "anchor": r.anchors,
        "final": r.final_allocations,
        "distance_from_anchor": r.distance_from_anchor_mhz,
        "latency_ms": r.slice_latency_ms,
        "energy_saving_pct": r.slice_energy_saving_pct,
        "headroom": r.headroom,
    }
    for s in SliceId:
        for field in SLICE_FIELDS:
            row[f"{field}_{s.value}"] = per_slice[field].get(s.value)

    row["retrievals"] = len(r.retrievals)
    row["retrieved_failures"] = sum(1 for x in r.retrievals if x.was_failure)
    row["retrieval_log"] = "|".join(
        f"{x.agent}:{x.record_id}:{x.age}:{'F' if x.was_failure else 'S'}" for x in r.retrievals
    )
    return {k: fmt(v) for k, v in row.items()}


@report_format("csv")
class CsvReport(ReportFormat):
    HELP = "One row per trial with a fixed, versioned column order"

    def write(self, items, f):
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for r in items:
            writer.writerow(record_row(r))
