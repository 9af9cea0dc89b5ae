#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

from .registry import REPORT_FORMATS  # noqa: F401
from .common import OutputFile, load_records  # noqa: F401

# All report formats must be imported here to be registered
from .tabular import CsvReport  # noqa: F401
from .jsonout import JsonReport  # noqa: F401
from .plotscript import PlotScriptReport  # noqa: F401
from .biasdemo import BiasDemoReport, BiasDemoCsvReport  # noqa: F401
