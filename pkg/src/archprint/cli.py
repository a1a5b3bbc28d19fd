"""Single entry point for the whole pipeline.

Subcommands map one-to-one onto library operations: generate a zoo, serve
a target, build classification templates and timing profiles, rank
probes, run an attack, evaluate a campaign, ingest external measurement
CSVs, and inspect difference-of-means diagnostics.

Conventions: diagnostics go to stderr, data goes to files or stdout; every
randomized command takes an explicit --seed; exit code 0 on success, 1 on
validation errors (including unknown flags), 2 on runtime failures. Any
subcommand accepts --config <json>; command-line flags override file
values. ARCHPRINT_LOG=off|info|debug controls diagnostic verbosity.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import evaluation, profiler, zoo
from .attack import rank_probes, run_attack, select_probes
from .client import InProcessSession, RemoteSession
from .core import LabelSpace, ModelId
from .errors import FingerprintError
from .service import PredictionService

log = logging.getLogger("archprint.cli")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; the contract wants 1 for validation.
    def error(self, message):
        raise _UsageError(message)


def _configure_logging() -> None:
    level_name = os.environ.get("ARCHPRINT_LOG", "off").lower()
    levels = {"off": logging.CRITICAL + 10, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        raise _UsageError(f"ARCHPRINT_LOG must be off|info|debug, got {level_name!r}")
    logging.basicConfig(stream=sys.stderr, level=levels[level_name])


class _Options:
    """Flag values with config-file fallback (file < flag precedence)."""

    def __init__(self, args: argparse.Namespace, known_keys: set[str]):
        self._args = vars(args)
        self._file: dict = {}
        config_path = self._args.get("config")
        if config_path:
            try:
                self._file = json.loads(Path(config_path).read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError) as exc:
                raise _UsageError(f"cannot read config file {config_path}: {exc}")
            if not isinstance(self._file, dict):
                raise _UsageError("config file must hold a JSON object")
            unknown = set(self._file) - known_keys
            if unknown:
                raise _UsageError(f"unknown config keys: {sorted(unknown)}")

    def get(self, key: str, default=None, required: bool = False):
        value = self._args.get(key)
        if value is None:
            value = self._file.get(key, default)
        if value is None and required:
            raise _UsageError(f"missing required option --{key.replace('_', '-')}")
        return value

    @property
    def file_values(self) -> dict:
        return self._file


def _emit(document: dict, out: str | None) -> None:
    text = json.dumps(document)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text + "\n")


# ---------------------------------------------------------------------------
# Subcommand handlers
# ---------------------------------------------------------------------------

def _cmd_zoo_gen(args) -> int:
    opts = _Options(
        args,
        {
            "seed", "out", "architectures", "profiling_variants", "holdout_variants",
            "probes", "labels", "alpha", "noise", "top_n", "timing",
        },
    )
    timing = opts.get("timing")
    config = zoo.ZooConfig(
        n_architectures=int(opts.get("architectures", zoo.DEFAULT_ARCHITECTURES)),
        profiling_variants=int(
            opts.get("profiling_variants", zoo.DEFAULT_PROFILING_VARIANTS)
        ),
        holdout_variants=int(opts.get("holdout_variants", zoo.DEFAULT_HOLDOUT_VARIANTS)),
        n_probes=int(opts.get("probes", zoo.DEFAULT_PROBES)),
        label_space=LabelSpace.of_size(int(opts.get("labels", 10))),
        inter_concentration=float(opts.get("alpha", zoo.DEFAULT_CONCENTRATION)),
        intra_noise=float(opts.get("noise", zoo.DEFAULT_INTRA_NOISE)),
        top_n=int(opts.get("top_n", 5)),
        timing=tuple(tuple(pair) for pair in timing) if timing else (),
        seed=int(opts.get("seed", required=True)),
    )
    profiling, holdout = zoo.generate_zoo(config)
    out = opts.get("out", required=True)
    zoo.save_zoo(out, config, profiling, holdout)
    log.info("wrote zoo with %d models to %s", len(profiling) + len(holdout), out)
    return 0


def _cmd_serve(args) -> int:
    opts = _Options(
        args, {"bind", "zoo", "target", "top_n", "net_delay_ns", "log", "seed"}
    )
    config, profiling, holdout = zoo.load_zoo(opts.get("zoo", required=True))
    target = ModelId.parse(opts.get("target", required=True))
    model = zoo.find_model(profiling, holdout, target)
    host, _, port = str(opts.get("bind", "127.0.0.1:8100")).partition(":")
    seed = opts.get("seed")
    service = PredictionService(
        model=model,
        label_space=config.label_space,
        top_n=int(opts.get("top_n", config.top_n)),
        host=host,
        port=int(port or 0),
        net_delay_ns=int(opts.get("net_delay_ns", 0)),
        latency_rng=np.random.default_rng(int(seed)) if seed is not None else None,
        log_path=opts.get("log"),
    )
    service.start()
    sys.stderr.write(f"serving on {service.url}\n")
    try:
        service.wait()
    except KeyboardInterrupt:
        sys.stderr.write("shutting down\n")
    finally:
        service.stop()
    return 0


def _cmd_profile_classify(args) -> int:
    opts = _Options(args, {"zoo", "out", "top_n"})
    config, profiling, _ = zoo.load_zoo(opts.get("zoo", required=True))
    cube = profiler.collect_cube(
        zoo.group_by_architecture(profiling),
        probes=range(config.n_probes),
        top_n=int(opts.get("top_n", config.top_n)),
        label_space=config.label_space,
    )
    template = profiler.build_templates(cube)
    profiler.save_templates(template, opts.get("out", required=True))
    return 0


def _cmd_profile_timing(args) -> int:
    opts = _Options(args, {"zoo", "reps", "seed", "out", "probe", "transport"})
    config, profiling, _ = zoo.load_zoo(opts.get("zoo", required=True))
    seed = int(opts.get("seed", required=True))
    groups = zoo.group_by_architecture(profiling)
    transport = opts.get("transport", "inprocess")
    if transport == "loopback":
        profile = profiler.profile_timing_loopback(
            groups,
            config.label_space,
            config.top_n,
            repetitions=int(opts.get("reps", 10)),
            probe=int(opts.get("probe", 0)),
            seed=seed,
        )
    elif transport == "inprocess":
        rng = np.random.default_rng(seed)
        sessions = [
            [
                InProcessSession(model, config.top_n, child)
                for model, child in zip(group, rng.spawn(len(group)))
            ]
            for group in groups
        ]
        profile = profiler.profile_timing(
            sessions,
            repetitions=int(opts.get("reps", 10)),
            probe=int(opts.get("probe", 0)),
        )
    else:
        raise _UsageError(f"--transport must be inprocess or loopback, got {transport!r}")
    profiler.save_timing_profile(profile, opts.get("out", required=True))
    return 0


def _cmd_probe_rank(args) -> int:
    opts = _Options(args, {"templates", "restrict", "count", "out"})
    template = profiler.load_templates(opts.get("templates", required=True))
    restrict_text = opts.get("restrict")
    if restrict_text:
        restrict = [int(v) for v in str(restrict_text).split(",") if v != ""]
    else:
        restrict = list(range(template.n_architectures))
    ranking = rank_probes(template, restrict)
    count = opts.get("count")
    selected = select_probes(ranking, int(count)) if count is not None else list(
        ranking.order
    )
    _emit(
        {
            "restrict": list(ranking.restrict),
            "selected": selected,
            "scores": [float(s) for s in ranking.scores],
        },
        opts.get("out"),
    )
    return 0


def _cmd_attack(args) -> int:
    opts = _Options(
        args, {"templates", "timing", "url", "d", "reps", "timing_probe", "out"}
    )
    template = profiler.load_templates(opts.get("templates", required=True))
    timing = profiler.load_timing_profile(opts.get("timing", required=True))
    session = RemoteSession(opts.get("url", required=True), template.label_space)
    try:
        transcript = run_attack(
            session,
            template,
            timing,
            probe_budget=int(opts.get("d", 5)),
            timing_repetitions=int(opts.get("reps", 10)),
            timing_probe=int(opts.get("timing_probe", 0)),
        )
    finally:
        session.close()
    _emit(transcript.to_dict(), opts.get("out"))
    verdict = transcript.verdict
    sys.stderr.write(
        f"verdict={verdict} queries_spent={transcript.queries_spent} "
        f"fallback={transcript.shortlist.fallback} aborted={transcript.aborted}\n"
    )
    return 0 if not transcript.aborted else 2


def _cmd_evaluate(args) -> int:
    opts = _Options(
        args,
        {"zoo", "artifacts", "repetitions", "probe_budget", "runs", "seed", "out_dir"},
    )
    file_values = dict(opts.file_values)
    for key in ("repetitions", "probe_budget", "runs", "seed"):
        override = opts.get(key)
        if override is not None:
            file_values[key] = int(override)
    if "zoo" in file_values:
        config = evaluation.CampaignConfig.from_dict(file_values)
        report = evaluation.run_campaign(config)
    elif "artifacts" in file_values:
        report = _replay_campaign_from_files(file_values)
    else:
        raise _UsageError("campaign config must define either a zoo or artifacts")
    out_dir = Path(opts.get("out_dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    evaluation.emit_report(
        report,
        json_path=out_dir / "report.json",
        table_path=out_dir / "report.txt",
        csv_path=out_dir / "per_architecture.csv",
    )
    sys.stdout.write(
        f"accuracy={report.accuracy:.4g} shortlist_hit_rate="
        f"{report.shortlist_hit_rate:.4g} attacks={len(report.records)}\n"
    )
    return 0


def _replay_campaign_from_files(file_values: dict):
    """Campaign over previously ingested measurement files."""
    artifacts = file_values["artifacts"]
    required = {"templates", "timing", "holdout_responses", "holdout_timing"}
    missing = required - set(artifacts)
    if missing:
        raise _UsageError(f"artifacts config missing keys: {sorted(missing)}")
    template = profiler.load_templates(artifacts["templates"])
    timing = profiler.load_timing_profile(artifacts["timing"])
    holdout_cube = profiler.ingest_responses_csv(
        artifacts["holdout_responses"], template.label_space
    )
    holdout_traces = profiler.ingest_timing_csv(artifacts["holdout_timing"])
    return evaluation.run_replay_campaign(
        {
            "top_n": artifacts.get("top_n", 5),
            "seed": file_values.get("seed", 0),
        },
        template,
        timing,
        holdout_cube,
        holdout_traces,
        repetitions=file_values.get("repetitions", 10),
        probe_budget=file_values.get("probe_budget", 5),
    )


def _cmd_ingest(args) -> int:
    opts = _Options(
        args, {"responses", "labels", "out_templates", "timing", "out_timing"}
    )
    responses = opts.get("responses")
    timing = opts.get("timing")
    if not responses and not timing:
        raise _UsageError("nothing to ingest: pass --responses and/or --timing")
    if responses:
        labels = opts.get("labels")
        if labels is None:
            raise _UsageError("--labels (label-space size) is required with --responses")
        cube = profiler.ingest_responses_csv(responses, LabelSpace.of_size(int(labels)))
        sys.stderr.write(
            f"ingested responses cube dims={cube.dims} hash={cube.content_hash()[:12]}\n"
        )
        out_templates = opts.get("out_templates")
        if out_templates:
            profiler.save_templates(profiler.build_templates(cube), out_templates)
    if timing:
        traces = profiler.ingest_timing_csv(timing)
        profile = profiler.pooled_timing_profile(traces)
        sys.stderr.write(
            f"ingested timing traces for {profile.n_architectures} architectures\n"
        )
        out_timing = opts.get("out_timing")
        if out_timing:
            profiler.save_timing_profile(profile, out_timing)
    return 0


def _cmd_dom(args) -> int:
    opts = _Options(args, {"zoo", "responses", "labels", "probe", "pair", "out", "top_n"})
    if opts.get("zoo"):
        config, profiling, _ = zoo.load_zoo(opts.get("zoo"))
        cube = profiler.collect_cube(
            zoo.group_by_architecture(profiling),
            probes=range(config.n_probes),
            top_n=int(opts.get("top_n", config.top_n)),
            label_space=config.label_space,
        )
    elif opts.get("responses"):
        labels = opts.get("labels")
        if labels is None:
            raise _UsageError("--labels is required with --responses")
        cube = profiler.ingest_responses_csv(
            opts.get("responses"), LabelSpace.of_size(int(labels))
        )
    else:
        raise _UsageError("pass --zoo or --responses")
    pair_text = str(opts.get("pair", required=True))
    first, _, second = pair_text.partition(",")
    report = profiler.dom_report(
        cube, int(opts.get("probe", required=True)), (int(first), int(second))
    )
    _emit(
        {
            "probe": report.probe,
            "pair": list(report.pair),
            "inter": [float(v) for v in report.inter],
            "intra_first": [float(v) for v in report.intra_first],
            "intra_second": [float(v) for v in report.intra_second],
        },
        opts.get("out"),
    )
    return 0


# ---------------------------------------------------------------------------
# Parser wiring
# ---------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="archprint", description=__doc__)
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_config(p: _Parser) -> None:
        p.add_argument("--config", help="JSON file of option defaults")

    zoo_parser = subparsers.add_parser("zoo", help="zoo management")
    zoo_sub = zoo_parser.add_subparsers(dest="zoo_command", required=True)
    gen = zoo_sub.add_parser("gen", help="generate a synthetic zoo")
    gen.add_argument("--seed", type=int)
    gen.add_argument("--out")
    gen.add_argument("--architectures", type=int)
    gen.add_argument("--profiling-variants", dest="profiling_variants", type=int)
    gen.add_argument("--holdout-variants", dest="holdout_variants", type=int)
    gen.add_argument("--probes", type=int)
    gen.add_argument("--labels", type=int)
    gen.add_argument("--alpha", type=float)
    gen.add_argument("--noise", type=float)
    gen.add_argument("--top-n", dest="top_n", type=int)
    add_config(gen)
    gen.set_defaults(handler=_cmd_zoo_gen)

    serve = subparsers.add_parser("serve", help="serve one zoo model over HTTP")
    serve.add_argument("--bind")
    serve.add_argument("--zoo")
    serve.add_argument("--target", help="architecture:variant")
    serve.add_argument("--top-n", dest="top_n", type=int)
    serve.add_argument("--net-delay-ns", dest="net_delay_ns", type=int)
    serve.add_argument("--log")
    serve.add_argument("--seed", type=int)
    add_config(serve)
    serve.set_defaults(handler=_cmd_serve)

    profile_parser = subparsers.add_parser("profile", help="build attack artifacts")
    profile_sub = profile_parser.add_subparsers(dest="profile_command", required=True)
    classify = profile_sub.add_parser("classify", help="collect templates from a zoo")
    classify.add_argument("--zoo")
    classify.add_argument("--out")
    classify.add_argument("--top-n", dest="top_n", type=int)
    add_config(classify)
    classify.set_defaults(handler=_cmd_profile_classify)
    timing = profile_sub.add_parser("timing", help="collect timing windows from a zoo")
    timing.add_argument("--zoo")
    timing.add_argument("--reps", type=int)
    timing.add_argument("--seed", type=int)
    timing.add_argument("--probe", type=int)
    timing.add_argument(
        "--transport",
        choices=["inprocess", "loopback"],
        help="measure simulated latencies directly, or through a loopback service",
    )
    timing.add_argument("--out")
    add_config(timing)
    timing.set_defaults(handler=_cmd_profile_timing)

    probe_parser = subparsers.add_parser("probe", help="probe selection")
    probe_sub = probe_parser.add_subparsers(dest="probe_command", required=True)
    rank = probe_sub.add_parser("rank", help="rank probes by discriminability")
    rank.add_argument("--templates")
    rank.add_argument("--restrict", help="comma-separated architecture ids")
    rank.add_argument("--count", type=int, help="emit only the top COUNT probes")
    rank.add_argument("--out")
    add_config(rank)
    rank.set_defaults(handler=_cmd_probe_rank)

    attack = subparsers.add_parser("attack", help="attack a live service")
    attack.add_argument("--templates")
    attack.add_argument("--timing")
    attack.add_argument("--url")
    attack.add_argument("--d", type=int, help="number of probes to query")
    attack.add_argument("--reps", type=int, help="timing trace count")
    attack.add_argument("--timing-probe", dest="timing_probe", type=int)
    attack.add_argument("--out")
    add_config(attack)
    attack.set_defaults(handler=_cmd_attack)

    evaluate = subparsers.add_parser("evaluate", help="run a campaign")
    evaluate.add_argument("--repetitions", type=int)
    evaluate.add_argument("--probe-budget", dest="probe_budget", type=int)
    evaluate.add_argument("--runs", type=int)
    evaluate.add_argument("--seed", type=int)
    evaluate.add_argument("--out-dir", dest="out_dir")
    add_config(evaluate)
    evaluate.set_defaults(handler=_cmd_evaluate)

    ingest = subparsers.add_parser("ingest", help="ingest external measurement CSVs")
    ingest.add_argument("--responses")
    ingest.add_argument("--labels", type=int, help="label-space size")
    ingest.add_argument("--out-templates", dest="out_templates")
    ingest.add_argument("--timing")
    ingest.add_argument("--out-timing", dest="out_timing")
    add_config(ingest)
    ingest.set_defaults(handler=_cmd_ingest)

    dom = subparsers.add_parser("dom", help="difference-of-means diagnostics")
    dom.add_argument("--zoo")
    dom.add_argument("--responses")
    dom.add_argument("--labels", type=int)
    dom.add_argument("--probe", type=int)
    dom.add_argument("--pair", help="two architecture ids, e.g. 0,3")
    dom.add_argument("--top-n", dest="top_n", type=int)
    dom.add_argument("--out")
    add_config(dom)
    dom.set_defaults(handler=_cmd_dom)

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        _configure_logging()
        parser = _build_parser()
        args = parser.parse_args(argv)
        return args.handler(args)
    except _UsageError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except (ValueError, LookupError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except FingerprintError as exc:
        sys.stderr.write(f"failure: {exc}\n")
        return 2
    except OSError as exc:
        sys.stderr.write(f"failure: {exc}\n")
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
