#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import json
import sys
from contextlib import contextmanager
from pathlib import Path

from jinja2 import Environment, FileSystemLoader, StrictUndefined, TemplateRuntimeError

from ..version import VERSION

JSON_SCHEMA_VERSION = 1


class ReportException(Exception):
    pass


class OutputFile(object):
    def __init__(self, path):
        self.path = path

    def __str__(self):
        return str(self.path)

    @contextmanager
    def open(self, mode="w"):
        if str(self.path) == "-":
            yield sys.stdout
        else:
            path = Path(self.path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open(mode, newline="") as f:
                yield f


def as_output(output):
    if isinstance(output, OutputFile):
        return output
    return OutputFile(output)


class ReportFormat(object):
    """
    Base class of report formats. Subclasses implement write(items, f)
    """

    HELP = ""
    ITEMS = "trials"

    def __init__(self, **kwargs):
        self.options = kwargs

    @classmethod
    def get_arguments(cls, parser):
        parser.add_argument(
            "--output",
            "-o",
            help="Output file or '-' for stdout. Default is %(default)s",
            default="-",
        )

    @classmethod
    def from_args(cls, args):
        return cls()

    def output_records(self, items, output):
        output = as_output(output)
        with output.open("w") as f:
            self.write(list(items), f)
        return output


class JinjaTemplateRender(ReportFormat):
    """
    Report format rendered from a single Jinja template
    """

    TEMPLATE = None

    def get_additional_render_args(self, items):
        return {}

    def get_extra_env(self):
        return {}

    def render(self, template, output, *, extra_env={}, render_args={}):
        def abort_helper(msg):
            raise TemplateRuntimeError(msg)

        env = Environment(
            loader=FileSystemLoader([template.parent]),
            undefined=StrictUndefined,
            keep_trailing_newline=True,
        )
        for k, v in extra_env.items():
            env.globals[k] = v
        env.globals["abort"] = abort_helper
        env.globals["NEGOSIM_VERSION"] = VERSION
        template = env.get_template(template.name)

        render = template.render(
            disclaimer="This file was automatically generated by negosim. DO NOT MANUALLY MODIFY IT",
            **render_args,
        )

        output.write(render)
        if not render.endswith("\n"):
            output.write("\n")

    def write(self, items, f):
        self.render(
            self.TEMPLATE,
            f,
            extra_env=self.get_extra_env(),
            render_args={"items": items, **self.get_additional_render_args(items)},
        )


def load_records(path):
    """
    Reads the records of a JSON report back
    """
    from ..experiment import TrialRecord

    path = Path(path)
    if not path.is_file():
        raise ReportException(f"Report file '{path}' does not exist")
    with path.open("r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ReportException(f"Unable to parse '{path}': {e}") from e
    if data.get("schema_version") != JSON_SCHEMA_VERSION:
        raise ReportException(
            f"'{path}' has schema version {data.get('schema_version')}, expected {JSON_SCHEMA_VERSION}"
        )
    return [TrialRecord.from_dict(r) for r in data["records"]]
