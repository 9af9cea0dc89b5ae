#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

from pathlib import Path

REPORT_FORMATS = {}

TEMPLATE_DIR = Path(__file__).parent / "templates"


def report_format(name):
    def inner(cls):
        global REPORT_FORMATS
        REPORT_FORMATS[name] = cls
        return cls

    return inner
