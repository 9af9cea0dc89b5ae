#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import json

from .common import JSON_SCHEMA_VERSION, ReportFormat
from .registry import report_format


@report_format("json")
class JsonReport(ReportFormat):
    HELP = "Full trial records including transcripts and retrievals"

    def write(self, items, f):
        json.dump(
            {
                "schema_version": JSON_SCHEMA_VERSION,
                "records": [r.to_dict() for r in items],
            },
            f,
            indent=2,
            sort_keys=True,
        )
        f.write("\n")
