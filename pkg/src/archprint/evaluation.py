"""Campaign harness: many attacks, aggregated into a reproducible report.

A campaign attacks every held-out model of every architecture ``runs``
times and aggregates verdict accuracy, shortlist recall, and budget
statistics. Attacks run against in-process sessions (or replay sessions
when driving the pipeline from ingested measurement files), so a campaign
is a pure function of its seed: report JSON is byte-identical across
repeats. Wall-clock values never enter the report.

Per-attack randomness is seeded by (campaign seed, architecture, holdout
index, run index), so any single attack can be replayed in isolation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .attack import AttackTranscript, run_attack
from .client import InProcessSession, MeasuredResponse
from .core import TopNResponse
from .errors import InvalidConfig
from .profiler import (
    ArchitectureTemplate,
    ResponseCube,
    TimingProfile,
    build_templates,
    collect_cube,
    profile_timing,
)
from .zoo import ZooConfig, generate_zoo, group_by_architecture

REPORT_SCHEMA = "archprint.report@1"

# Sub-stream tags keeping profiling and attack randomness disjoint.
_TIMING_STREAM = 1
_ATTACK_STREAM = 2


@dataclass(frozen=True)
class CampaignConfig:
    """What to attack and how often; deterministic given ``seed``."""

    zoo: ZooConfig
    repetitions: int = 10
    probe_budget: int = 5
    runs: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.runs < 1:
            raise InvalidConfig("runs must be at least 1")
        if self.repetitions < 1 or self.probe_budget < 1:
            raise InvalidConfig("repetitions and probe_budget must be positive")
        if self.zoo.holdout_variants < 1:
            raise InvalidConfig("campaign needs at least one holdout variant")

    def to_dict(self) -> dict:
        return {
            "zoo": self.zoo.to_dict(),
            "repetitions": self.repetitions,
            "probe_budget": self.probe_budget,
            "runs": self.runs,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignConfig":
        return cls(
            zoo=ZooConfig.from_dict(data["zoo"]),
            repetitions=data.get("repetitions", 10),
            probe_budget=data.get("probe_budget", 5),
            runs=data.get("runs", 1),
            seed=data.get("seed", 0),
        )


@dataclass(frozen=True)
class AttackRecord:
    """One attack's summary row inside a report."""

    architecture: int
    holdout_index: int
    run: int
    verdict: int | None
    correct: bool
    shortlist_size: int
    shortlist_hit: bool
    fallback: bool
    queries_spent: int
    vote_share: float
    aborted: bool


@dataclass(frozen=True)
class ArchitectureStats:
    architecture: int
    attacks: int
    shortlist_hits: int
    correct: int
    mean_vote_share: float
    mean_queries: float
    max_queries: int


@dataclass(frozen=True)
class CampaignReport:
    config: CampaignConfig
    records: tuple[AttackRecord, ...]
    per_architecture: tuple[ArchitectureStats, ...]
    accuracy: float
    shortlist_hit_rate: float
    mean_queries: float
    max_queries: int
    aborted_attacks: int
    transcripts: tuple[AttackTranscript, ...] = field(repr=False, default=())

    def to_dict(self) -> dict:
        return {
            "schema": REPORT_SCHEMA,
            "config": self.config.to_dict(),
            "aggregates": {
                "attacks": len(self.records),
                "accuracy": self.accuracy,
                "shortlist_hit_rate": self.shortlist_hit_rate,
                "mean_queries": self.mean_queries,
                "max_queries": self.max_queries,
                "aborted_attacks": self.aborted_attacks,
            },
            "per_architecture": [
                {
                    "architecture": s.architecture,
                    "attacks": s.attacks,
                    "shortlist_hits": s.shortlist_hits,
                    "correct": s.correct,
                    "mean_vote_share": s.mean_vote_share,
                    "mean_queries": s.mean_queries,
                    "max_queries": s.max_queries,
                }
                for s in self.per_architecture
            ],
            "attacks": [
                {
                    "architecture": r.architecture,
                    "holdout_index": r.holdout_index,
                    "run": r.run,
                    "verdict": r.verdict,
                    "correct": r.correct,
                    "shortlist_size": r.shortlist_size,
                    "shortlist_hit": r.shortlist_hit,
                    "fallback": r.fallback,
                    "queries_spent": r.queries_spent,
                    "vote_share": r.vote_share,
                    "aborted": r.aborted,
                }
                for r in self.records
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CampaignReport":
        if data.get("schema") != REPORT_SCHEMA:
            raise ValueError(f"unsupported report schema {data.get('schema')!r}")
        records = tuple(
            AttackRecord(
                architecture=r["architecture"],
                holdout_index=r["holdout_index"],
                run=r["run"],
                verdict=r["verdict"],
                correct=r["correct"],
                shortlist_size=r["shortlist_size"],
                shortlist_hit=r["shortlist_hit"],
                fallback=r["fallback"],
                queries_spent=r["queries_spent"],
                vote_share=r["vote_share"],
                aborted=r["aborted"],
            )
            for r in data["attacks"]
        )
        per_arch = tuple(
            ArchitectureStats(
                architecture=s["architecture"],
                attacks=s["attacks"],
                shortlist_hits=s["shortlist_hits"],
                correct=s["correct"],
                mean_vote_share=s["mean_vote_share"],
                mean_queries=s["mean_queries"],
                max_queries=s["max_queries"],
            )
            for s in data["per_architecture"]
        )
        aggregates = data["aggregates"]
        return cls(
            config=CampaignConfig.from_dict(data["config"]),
            records=records,
            per_architecture=per_arch,
            accuracy=aggregates["accuracy"],
            shortlist_hit_rate=aggregates["shortlist_hit_rate"],
            mean_queries=aggregates["mean_queries"],
            max_queries=aggregates["max_queries"],
            aborted_attacks=aggregates["aborted_attacks"],
        )


def build_artifacts(
    config: CampaignConfig,
) -> tuple[ArchitectureTemplate, TimingProfile, list, list]:
    """Profile the zoo once: templates, timing windows, and both model pools."""
    profiling, holdout = generate_zoo(config.zoo)
    groups = group_by_architecture(profiling)
    cube = collect_cube(
        groups,
        probes=range(config.zoo.n_probes),
        top_n=config.zoo.top_n,
        label_space=config.zoo.label_space,
    )
    template = build_templates(cube)
    timing_rng = np.random.default_rng([config.seed, _TIMING_STREAM])
    session_groups = [
        [
            InProcessSession(model, config.zoo.top_n, child)
            for model, child in zip(group, timing_rng.spawn(len(group)))
        ]
        for group in groups
    ]
    timing = profile_timing(session_groups, repetitions=config.repetitions)
    return template, timing, profiling, holdout


def run_campaign(config: CampaignConfig) -> CampaignReport:
    """Attack every holdout model ``runs`` times; aggregate the outcomes."""
    template, timing, _, holdout = build_artifacts(config)
    holdout_groups = group_by_architecture(holdout)

    records: list[AttackRecord] = []
    transcripts: list[AttackTranscript] = []
    for arch, group in enumerate(holdout_groups):
        for holdout_index, model in enumerate(group):
            for run in range(config.runs):
                rng = np.random.default_rng(
                    [config.seed, _ATTACK_STREAM, arch, holdout_index, run]
                )
                session = InProcessSession(model, config.zoo.top_n, rng)
                transcript = run_attack(
                    session,
                    template,
                    timing,
                    probe_budget=config.probe_budget,
                    timing_repetitions=config.repetitions,
                )
                records.append(_record(transcript, arch, holdout_index, run))
                transcripts.append(transcript)
    return _aggregate(config, records, transcripts)


def _record(
    transcript: AttackTranscript, architecture: int, holdout_index: int, run: int
) -> AttackRecord:
    votes_total = sum(transcript.tally.values())
    if transcript.aborted or transcript.verdict is None:
        vote_share = 0.0
    elif votes_total == 0:
        vote_share = 1.0  # singleton shortlist: verdict without stage 2
    else:
        vote_share = transcript.tally[transcript.verdict] / votes_total
    return AttackRecord(
        architecture=architecture,
        holdout_index=holdout_index,
        run=run,
        verdict=transcript.verdict,
        correct=transcript.verdict == architecture,
        shortlist_size=len(transcript.shortlist.candidates),
        shortlist_hit=(
            not transcript.shortlist.fallback
            and architecture in transcript.shortlist.candidates
        ),
        fallback=transcript.shortlist.fallback,
        queries_spent=transcript.queries_spent,
        vote_share=vote_share,
        aborted=transcript.aborted,
    )


def _aggregate(
    config: CampaignConfig,
    records: list[AttackRecord],
    transcripts: list[AttackTranscript],
) -> CampaignReport:
    counted = [r for r in records if not r.aborted]
    if not counted:
        raise InvalidConfig("campaign produced no completed attacks")
    per_arch: list[ArchitectureStats] = []
    for arch in sorted({r.architecture for r in records}):
        rows = [r for r in counted if r.architecture == arch]
        per_arch.append(
            ArchitectureStats(
                architecture=arch,
                attacks=len(rows),
                shortlist_hits=sum(r.shortlist_hit for r in rows),
                correct=sum(r.correct for r in rows),
                mean_vote_share=(
                    sum(r.vote_share for r in rows) / len(rows) if rows else 0.0
                ),
                mean_queries=(
                    sum(r.queries_spent for r in rows) / len(rows) if rows else 0.0
                ),
                max_queries=max((r.queries_spent for r in rows), default=0),
            )
        )
    return CampaignReport(
        config=config,
        records=tuple(records),
        per_architecture=tuple(per_arch),
        accuracy=sum(r.correct for r in counted) / len(counted),
        shortlist_hit_rate=sum(r.shortlist_hit for r in counted) / len(counted),
        mean_queries=sum(r.queries_spent for r in counted) / len(counted),
        max_queries=max(r.queries_spent for r in counted),
        aborted_attacks=len(records) - len(counted),
        transcripts=tuple(transcripts),
    )


def render_table(report: CampaignReport) -> str:
    """Aligned text table, one row per architecture, 4 significant digits."""

    def sig(value: float) -> str:
        return format(value, ".4g")

    headers = ["arch", "attacks", "short_hits", "correct", "vote_share", "mean_q", "max_q"]
    rows = [
        [
            str(s.architecture),
            str(s.attacks),
            str(s.shortlist_hits),
            str(s.correct),
            sig(s.mean_vote_share),
            sig(s.mean_queries),
            str(s.max_queries),
        ]
        for s in report.per_architecture
    ]
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(headers)]
    lines = [
        "  ".join(h.rjust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in rows]
    lines.append("")
    lines.append(
        f"attacks={len(report.records)}  accuracy={sig(report.accuracy)}  "
        f"shortlist_hit_rate={sig(report.shortlist_hit_rate)}  "
        f"mean_queries={sig(report.mean_queries)}  max_queries={report.max_queries}"
    )
    return "\n".join(lines) + "\n"


def emit_report(
    report: CampaignReport,
    json_path: str | Path,
    table_path: str | Path | None = None,
    csv_path: str | Path | None = None,
    transcript_dir: str | Path | None = None,
) -> None:
    """Write the machine report, plus optional human table and per-arch CSV."""
    Path(json_path).write_text(json.dumps(report.to_dict()), encoding="utf-8")
    if table_path is not None:
        Path(table_path).write_text(render_table(report), encoding="utf-8")
    if csv_path is not None:
        lines = ["architecture,attacks,shortlist_hits,correct,mean_vote_share,mean_queries,max_queries"]
        for s in report.per_architecture:
            lines.append(
                f"{s.architecture},{s.attacks},{s.shortlist_hits},{s.correct},"
                f"{s.mean_vote_share!r},{s.mean_queries!r},{s.max_queries}"
            )
        Path(csv_path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    if transcript_dir is not None:
        directory = Path(transcript_dir)
        directory.mkdir(parents=True, exist_ok=True)
        for record, transcript in zip(report.records, report.transcripts):
            name = f"attack_a{record.architecture}_h{record.holdout_index}_r{record.run}.json"
            transcript.save(directory / name)


def load_report(path: str | Path) -> CampaignReport:
    return CampaignReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class ReplaySession:
    """Session backed by recorded responses and traces (ingested pipelines).

    Responses replay the recorded expanded vector's non-zero entries (up
    to ``top_n``, highest probability first); latency traces replay in
    recorded order, cycling if the attack asks for more than were logged.
    """

    def __init__(self, rows: np.ndarray, traces: Sequence[int], top_n: int):
        if not len(traces):
            raise InvalidConfig("replay session needs at least one trace")
        self._rows = np.asarray(rows, dtype=np.float64)
        self._traces = [int(t) for t in traces]
        self._top_n = top_n
        self._sequence = 0
        self._trace_cursor = 0

    @property
    def queries_sent(self) -> int:
        return self._sequence

    def query(self, probe: int) -> MeasuredResponse:
        row = self._rows[probe]
        order = np.argsort(-row, kind="stable")
        entries = [
            (int(c), float(row[c])) for c in order[: self._top_n] if row[c] > 0.0
        ]
        latency = self._traces[self._trace_cursor % len(self._traces)]
        self._trace_cursor += 1
        measured = MeasuredResponse(TopNResponse(tuple(entries)), latency, self._sequence)
        self._sequence += 1
        return measured

    def measure_latency(self, probe: int = 0, repetitions: int = 10) -> list[int]:
        return [self.query(probe).latency_ns for _ in range(repetitions)]


def run_replay_campaign(
    options: dict,
    template: ArchitectureTemplate,
    timing: TimingProfile,
    holdout_cube: ResponseCube,
    holdout_traces: dict[tuple[int, int], list[int]],
    repetitions: int = 10,
    probe_budget: int = 5,
) -> CampaignReport:
    """Campaign over ingested holdout measurements instead of a zoo.

    ``holdout_cube`` holds the test models' expanded responses with the
    same probe/architecture axes as the template; ``holdout_traces`` maps
    (architecture, variant) to recorded latency traces. ``options`` may
    carry ``top_n`` and ``seed``; the config echoed into the report is a
    stub describing the replayed dimensions, not a generative recipe.
    """
    n_probes, n_archs, variants, _ = holdout_cube.values.shape
    if n_probes != template.n_probes or n_archs != template.n_architectures:
        raise InvalidConfig(
            "holdout cube dimensions do not match the template artifact"
        )
    zoo_stub = ZooConfig(
        n_architectures=n_archs,
        profiling_variants=max(template.source_dims[2], 1),
        holdout_variants=variants,
        n_probes=n_probes,
        label_space=holdout_cube.label_space,
        top_n=options.get("top_n", 5),
        seed=options.get("seed", 0),
    )
    config = CampaignConfig(
        zoo=zoo_stub,
        repetitions=repetitions,
        probe_budget=probe_budget,
        runs=1,
        seed=options.get("seed", 0),
    )
    records: list[AttackRecord] = []
    transcripts: list[AttackTranscript] = []
    for arch in range(n_archs):
        for variant in range(variants):
            traces = holdout_traces.get((arch, variant))
            if traces is None:
                raise InvalidConfig(
                    f"no timing traces for holdout model ({arch}, {variant})"
                )
            session = ReplaySession(
                holdout_cube.values[:, arch, variant, :], traces, zoo_stub.top_n
            )
            transcript = run_attack(
                session,
                template,
                timing,
                probe_budget=probe_budget,
                timing_repetitions=repetitions,
            )
            records.append(_record(transcript, arch, variant, 0))
            transcripts.append(transcript)
    return _aggregate(config, records, transcripts)
