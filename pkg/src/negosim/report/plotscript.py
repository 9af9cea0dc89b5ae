#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

from ..scenario import SliceId
from .common import JinjaTemplateRender
from .registry import TEMPLATE_DIR, report_format


@report_format("plot-script")
class PlotScriptReport(JinjaTemplateRender):
    HELP = "Standalone matplotlib script plotting a CSV report"

    TEMPLATE = TEMPLATE_DIR / "plot.py.j2"

    @classmethod
    def get_arguments(cls, parser):
        super().get_arguments(parser)
        parser.add_argument(
            "--csv-path",
            help="CSV file the script reads when run without arguments. Default is %(default)s",
            default="trials.csv",
        )

    @classmethod
    def from_args(cls, args):
        return cls(csv_path=args.csv_path)

    def get_additional_render_args(self, items):
        present = []
        for s in SliceId:
            if any(s.value in r.anchors for r in items):
                present.append(s.value)
        return {
            "csv_path": self.options.get("csv_path", "trials.csv"),
            "slices": present,
            "scenarios": sorted({r.scenario for r in items}),
        }
