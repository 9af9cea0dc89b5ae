#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import csv
import math

from .common import JinjaTemplateRender, ReportFormat
from .registry import TEMPLATE_DIR, report_format

BIAS_DEMO_COLUMNS = ("name", "title", "biased", "mitigated", "mitigation", "notes")


def show(value):
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        if not math.isfinite(value):
            return "INFEASIBLE"
        return f"{value:.4f}"
    if isinstance(value, (tuple, list)):
        return "(" + ", ".join(show(v) for v in value) + ")"
    return str(value)


@report_format("bias-demo")
class BiasDemoReport(JinjaTemplateRender):
    HELP = "Markdown table of the biased and mitigated value of each operator"
    ITEMS = "biases"

    TEMPLATE = TEMPLATE_DIR / "biasdemo.md.j2"

    def get_extra_env(self):
        return {"show": show}


@report_format("bias-demo-csv")
class BiasDemoCsvReport(ReportFormat):
    HELP = "CSV of the biased and mitigated value of each operator"
    ITEMS = "biases"

    def write(self, items, f):
        writer = csv.DictWriter(f, fieldnames=BIAS_DEMO_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for d in items:
            writer.writerow(
                {
                    "name": d.name,
                    "title": d.title,
                    "biased": show(d.biased),
                    "mitigated": show(d.mitigated),
                    "mitigation": d.mitigation,
                    "notes": "; ".join(d.notes),
                }
            )
