#! /usr/bin/env python3
#
# Copyright (c) 2026 negosim contributors
#
# SPDX-License-Identifier: MIT

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .biases import DEMONSTRATIONS, run_demonstrations
from .experiment import emit_report, run_sweep, run_trials, summarize
from .llm import EndpointConfig, LLMPolicy
from .memory import MemoryException, MemoryPolicy, MemoryStore
from .report import REPORT_FORMATS, load_records
from .report.common import ReportException
from .scenario import ScenarioException, load_builtin, load_config, serialize_config
from .version import VERSION

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1

# Exceptions reported with exit code 1. Anything else is a runtime error
VALIDATION_ERRORS = (
    ScenarioException,
    ReportException,
    MemoryException,
    FileNotFoundError,
)


class UsageError(Exception):
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"ERROR: {message}\n")


class LLMFactory(object):
    def __init__(self, endpoint, anchor_strategy):
        self.endpoint = endpoint
        self.anchor_strategy = anchor_strategy

    def __call__(self, slice):
        return LLMPolicy(self.endpoint, anchor_strategy=self.anchor_strategy)


def positive_int(value):
    try:
        n = int(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid integer '{value}'")
    if n < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {n}")
    return n


def read_manifest(path):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"Manifest '{path}' does not exist")
    with path.open("r") as f:
        try:
            manifest = json.load(f)
        except json.JSONDecodeError as e:
            raise UsageError(f"Unable to parse manifest '{path}': {e}") from e
    if manifest.get("manifest_version") != MANIFEST_VERSION:
        raise UsageError(f"Manifest '{path}' has an unsupported version")
    return manifest


def resolve_config(default_scenario, args, manifest=None):
    """
    Builds the run's config: built-in scenario, config file or manifest,
    then command line overrides. The result is validated again so that
    overrides are held to the same rules as config files
    """
    if manifest is not None:
        config = load_config(manifest["config"])
    elif args.config:
        config = load_config(args.config)
    else:
        config = load_builtin(default_scenario)

    if args.anchor_strategy is not None:
        config = config.replace(anchor_strategy=args.anchor_strategy)
    if args.memory is not None:
        config = config.replace(memory=replace(config.memory, policy=MemoryPolicy(args.memory)))

    protocol = config.protocol
    if args.max_rounds is not None:
        protocol = replace(protocol, max_rounds=args.max_rounds)
    if args.accept_threshold is not None:
        protocol = replace(protocol, accept_threshold=args.accept_threshold)
    config = config.replace(protocol=protocol)

    return load_config(serialize_config(config))


def build_manifest(config, seed, trials, llm_endpoint):
    return {
        "manifest_version": MANIFEST_VERSION,
        "negosim_version": VERSION,
        "seed": seed,
        "trials": trials,
        "anchor_strategy": config.anchor_strategy,
        "memory_policy": config.memory.policy.value,
        "llm_endpoint": llm_endpoint,
        "config": serialize_config(config),
    }


def write_json(path, data):
    with path.open("w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")


def write_outputs(outdir, records, manifest, memory=None):
    outdir.mkdir(parents=True, exist_ok=True)
    emit_report(records, "csv", outdir / "trials.csv")
    emit_report(records, "json", outdir / "trials.json")
    emit_report(records, "plot-script", outdir / "plot.py", csv_path="trials.csv")
    if memory is not None:
        memory.dump(outdir / "memory.jsonl")
    write_json(outdir / "manifest.json", manifest)


def main(args=None):
    def handle_run(parser, args):
        manifest = read_manifest(args.manifest) if args.manifest else None
        config = resolve_config(args.scenario, args, manifest)

        seed = args.seed
        if seed is None:
            seed = manifest["seed"] if manifest else 42
        trials = args.trials
        if trials is None:
            trials = manifest["trials"] if manifest else config.trials
        llm_endpoint = args.llm_endpoint
        if llm_endpoint is None and manifest:
            llm_endpoint = manifest.get("llm_endpoint")

        logger.info("Loaded scenario %s", config.name)
        outdir = Path(args.output)

        if args.seeds:
            if llm_endpoint:
                raise UsageError("--seeds cannot be combined with --llm-endpoint")
            results = run_sweep(config, args.seeds, trials, jobs=args.jobs)
            summary = {}
            for s, records in results.items():
                write_outputs(
                    outdir / f"seed-{s}",
                    records,
                    build_manifest(config, s, trials, None),
                )
                summary[str(s)] = summarize(records)
            print(json.dumps(summary, indent=2, sort_keys=True))
            return 0

        factory = {}
        if llm_endpoint:
            factory["policy_factory"] = LLMFactory(
                EndpointConfig(llm_endpoint), config.anchor_strategy
            )

        memory = MemoryStore(config.memory.policy, config.memory.weights)
        records = run_trials(config, trials, seed, memory=memory, **factory)
        write_outputs(
            outdir,
            records,
            build_manifest(config, seed, trials, llm_endpoint),
            memory,
        )
        print(json.dumps(summarize(records), indent=2, sort_keys=True))
        return 0

    def handle_biases_demo(parser, args):
        demos = run_demonstrations(args.bias or None)
        REPORT_FORMATS[args.format]().output_records(demos, args.output)
        return 0

    def handle_report(parser, args):
        records = load_records(args.input)
        args.fmt.from_args(args).output_records(records, args.output)
        return 0

    def handle_list(parser, args):
        width = max(len(k) for k in REPORT_FORMATS)
        for k, v in REPORT_FORMATS.items():
            if args.short:
                print(k)
            else:
                print(f"{k:{width}} - [{v.ITEMS}] {v.HELP}")
        return 0

    def handle_version(parser, args):
        print(VERSION)
        return 0

    parser = ArgumentParser(
        description=f"Cognitive-bias aware 6G negotiation simulator. Version {VERSION}"
    )
    parser.add_argument(
        "--verbose",
        "-v",
        action="store_true",
        help="Enable debug logging",
    )
    command_subparser = parser.add_subparsers(
        title="command",
        description="Command to execute",
        required=True,
    )

    for name, scenario, summary in (
        ("run-uc1", "uc1", "Inter-slice bandwidth negotiation (anchoring)"),
        ("run-uc2", "uc2", "Cross-domain RAN/edge negotiation (memory debiasing)"),
    ):
        p = command_subparser.add_parser(name, help=summary)
        p.add_argument(
            "--config",
            "-c",
            help="Scenario config file. Default is the built-in scenario",
        )
        p.add_argument(
            "--manifest",
            help="Replay the run described by a manifest.json",
        )
        p.add_argument(
            "--trials",
            "-t",
            type=positive_int,
            help="Number of trials. Default is the config's trial count",
        )
        p.add_argument(
            "--seed",
            "-s",
            type=int,
            help="Root seed of every random stream. Default is 42",
        )
        p.add_argument(
            "--seeds",
            type=int,
            nargs="+",
            metavar="SEED",
            help="Run one independent experiment per seed",
        )
        p.add_argument(
            "--jobs",
            "-j",
            type=positive_int,
            default=1,
            help="Worker processes for --seeds. Default is %(default)s",
        )
        p.add_argument(
            "--anchor-strategy",
            choices=("fixed", "randomized"),
            help="Opening proposal strategy",
        )
        p.add_argument(
            "--memory",
            choices=[m.value for m in MemoryPolicy],
            help="Collective memory policy",
        )
        p.add_argument("--max-rounds", type=positive_int, help="Negotiation round limit")
        p.add_argument("--accept-threshold", type=float, help="Agent acceptance threshold")
        p.add_argument(
            "--llm-endpoint",
            help="URL of an LLM adapter endpoint. The API key is read from $NEGOSIM_LLM_API_KEY",
        )
        p.add_argument(
            "--output",
            "-o",
            default=f"negosim-{scenario}",
            help="Output directory. Default is %(default)s",
        )
        p.set_defaults(func=handle_run, scenario=scenario)

    demo_parser = command_subparser.add_parser(
        "biases-demo",
        help="Biased vs. mitigated outcome of each bias operator",
    )
    demo_parser.add_argument(
        "--bias",
        "-b",
        action="append",
        choices=sorted(DEMONSTRATIONS),
        default=[],
        help="Only demonstrate this bias (may be repeated)",
    )
    demo_parser.add_argument(
        "--format",
        "-f",
        choices=sorted(k for k, v in REPORT_FORMATS.items() if v.ITEMS == "biases"),
        default="bias-demo",
        help="Output format. Default is %(default)s",
    )
    demo_parser.add_argument(
        "--output",
        "-o",
        default="-",
        help="Output file or '-' for stdout. Default is %(default)s",
    )
    demo_parser.set_defaults(func=handle_biases_demo)

    report_parser = command_subparser.add_parser(
        "report",
        help="Convert a JSON trial report to another format",
    )
    report_parser.add_argument(
        "--input",
        "-i",
        required=True,
        help="trials.json written by a run",
    )
    report_parser.set_defaults(func=handle_report)

    format_subparser = report_parser.add_subparsers(
        title="format",
        description="Report format to write",
        required=True,
    )
    for k, v in REPORT_FORMATS.items():
        if v.ITEMS != "trials":
            continue
        p = format_subparser.add_parser(k, help=v.HELP)
        v.get_arguments(p)
        p.set_defaults(fmt=v)

    list_parser = command_subparser.add_parser("list", help="List report formats")
    list_parser.add_argument(
        "--short",
        "-s",
        action="store_true",
        help="Only list formats without descriptions",
    )
    list_parser.set_defaults(func=handle_list)

    version_parser = command_subparser.add_parser("version", help="Show version")
    version_parser.set_defaults(func=handle_version)

    parsed_args = parser.parse_args(args)

    logging.basicConfig(
        level=logging.DEBUG if parsed_args.verbose else logging.WARNING,
        format="%(levelname)s: %(name)s: %(message)s",
    )

    try:
        return parsed_args.func(parser, parsed_args)
    except (UsageError,) + VALIDATION_ERRORS as e:
        print(f"ERROR: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.debug("Runtime error", exc_info=True)
        print(f"ERROR: {e}", file=sys.stderr)
        return 2
