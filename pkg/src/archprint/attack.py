"""Two-stage architecture extraction against a live session.

Stage 1 measures the target's inference latency and shortlists every
architecture whose profiled (min, max) window contains the aggregate.
Stage 2 ranks probes by how far apart the shortlisted architectures'
template vectors sit (summed pairwise Euclidean distance), queries the top
few, matches each answer to its nearest template, and majority-votes.

Every tie resolves deterministically: ranking ties to the lower probe id,
distance ties to the lower architecture id, vote ties first to the
smallest summed match distance and then to the lower architecture id.
The transcript records each query, each vote, and the total budget spent.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import TopNResponse, expand_topn, nearest_index
from .errors import (
    EmptyInput,
    EmptyTraces,
    TransportError,
    UnknownArchitecture,
    UnknownProbe,
)
from .profiler import ArchitectureTemplate, TimingProfile

TRANSCRIPT_SCHEMA = "archprint.transcript@1"


def aggregate_target_timing(traces: list[int]) -> int:
    """Collapse target latency traces to one value: the lower median."""
    if not traces:
        raise EmptyTraces("no timing traces to aggregate")
    ordered = sorted(traces)
    return ordered[(len(ordered) - 1) // 2]


@dataclass(frozen=True)
class Shortlist:
    """Stage-1 outcome: candidate architectures for the measured latency."""

    candidates: tuple[int, ...]
    target_latency_ns: int
    windows: tuple[tuple[int, int], ...]  # echoed per candidate
    fallback: bool


def shortlist_architectures(profile: TimingProfile, target_latency_ns: int) -> Shortlist:
    """Architectures whose window contains the latency, boundaries included.

    If no window contains it, the single architecture whose window sits
    closest (smallest gap to the nearer endpoint, ties to the lower id) is
    returned with the fallback flag set, so downstream consumers can
    separate genuine containment from a rescue.
    """
    contained = [
        arch
        for arch, (low, high) in enumerate(profile.windows)
        if low <= target_latency_ns <= high
    ]
    if contained:
        return Shortlist(
            candidates=tuple(contained),
            target_latency_ns=target_latency_ns,
            windows=tuple(profile.windows[a] for a in contained),
            fallback=False,
        )

    def gap(window: tuple[int, int]) -> int:
        low, high = window
        if target_latency_ns < low:
            return low - target_latency_ns
        return target_latency_ns - high

    nearest = min(range(len(profile.windows)), key=lambda a: (gap(profile.windows[a]), a))
    return Shortlist(
        candidates=(nearest,),
        target_latency_ns=target_latency_ns,
        windows=(profile.windows[nearest],),
        fallback=True,
    )


@dataclass(frozen=True, eq=False)
class ProbeRanking:
    """Per-probe discriminability over a candidate set.

    ``scores[i]`` sums the Euclidean distances between every unordered
    pair of candidate architectures' template vectors for probe i;
    ``order`` lists probe ids by descending score, ties to the lower id.
    """

    scores: np.ndarray
    restrict: tuple[int, ...]
    order: tuple[int, ...]

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)


def rank_probes(
    template: ArchitectureTemplate, restrict: set[int] | tuple[int, ...] | list[int]
) -> ProbeRanking:
    """Score every probe's power to separate the given architectures."""
    candidates = tuple(sorted(set(int(a) for a in restrict)))
    if not candidates:
        raise EmptyInput("restriction set is empty")
    for arch in candidates:
        if not 0 <= arch < template.n_architectures:
            raise UnknownArchitecture(
                f"architecture {arch} outside [0, {template.n_architectures})"
            )
    sub = template.means[:, candidates, :]  # (N, S, L)
    scores = np.zeros(template.n_probes, dtype=np.float64)
    for a in range(len(candidates)):
        for b in range(a + 1, len(candidates)):
            scores += np.sqrt(np.sum((sub[:, a, :] - sub[:, b, :]) ** 2, axis=1))
    order = tuple(int(i) for i in np.argsort(-scores, kind="stable"))
    return ProbeRanking(scores=scores, restrict=candidates, order=order)


def select_probes(ranking: ProbeRanking, count: int) -> list[int]:
    """The ``count`` most discriminative probe ids, best first."""
    if not 1 <= count <= len(ranking.order):
        raise ValueError(f"count must be in [1, {len(ranking.order)}], got {count}")
    return list(ranking.order[:count])


def match_response(
    template: ArchitectureTemplate,
    restrict: set[int] | tuple[int, ...] | list[int],
    probe: int,
    response: TopNResponse,
) -> tuple[int, float]:
    """Nearest candidate architecture for one probe response.

    Returns (architecture id, Euclidean distance); exact distance ties go
    to the lower architecture id.
    """
    candidates = tuple(sorted(set(int(a) for a in restrict)))
    if not candidates:
        raise EmptyInput("restriction set is empty")
    if not 0 <= probe < template.n_probes:
        raise UnknownProbe(f"probe {probe} outside [0, {template.n_probes})")
    for arch in candidates:
        if not 0 <= arch < template.n_architectures:
            raise UnknownArchitecture(
                f"architecture {arch} outside [0, {template.n_architectures})"
            )
    vector = expand_topn(response, template.label_space)
    row, distance = nearest_index(template.means[probe, candidates, :], vector)
    return candidates[row], distance


def majority_vote(
    votes: list[int], distances: list[float]
) -> tuple[int, bool]:
    """Most frequent vote; ties resolved by summed distance, then lower id.

    Returns (verdict, tie_broken); ``tie_broken`` is set whenever more than
    one architecture shared the top tally, regardless of how the tie was
    eventually resolved.
    """
    if not votes or len(votes) != len(distances):
        raise EmptyInput("votes and distances must be non-empty and aligned")
    tallies: dict[int, int] = {}
    summed: dict[int, float] = {}
    for vote, distance in zip(votes, distances):
        tallies[vote] = tallies.get(vote, 0) + 1
        summed[vote] = summed.get(vote, 0.0) + distance
    top = max(tallies.values())
    tied = sorted(arch for arch, count in tallies.items() if count == top)
    if len(tied) == 1:
        return tied[0], False
    verdict = min(tied, key=lambda arch: (summed[arch], arch))
    return verdict, True


@dataclass(frozen=True)
class ProbeOutcome:
    """One stage-2 exchange: what was asked, what came back, how it voted."""

    probe: int
    entries: tuple[tuple[int, float], ...]
    vote: int
    distance: float


@dataclass(frozen=True)
class AttackTranscript:
    """Complete, self-consistent record of one attack run."""

    timing_traces: tuple[int, ...]
    target_latency_ns: int
    shortlist: Shortlist
    selected_probes: tuple[int, ...]
    outcomes: tuple[ProbeOutcome, ...]
    tally: dict[int, int]
    verdict: int | None
    tie_broken: bool
    queries_spent: int
    aborted: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        return {
            "schema": TRANSCRIPT_SCHEMA,
            "timing_traces": list(self.timing_traces),
            "target_latency_ns": self.target_latency_ns,
            "shortlist": {
                "candidates": list(self.shortlist.candidates),
                "target_latency_ns": self.shortlist.target_latency_ns,
                "windows": [list(w) for w in self.shortlist.windows],
                "fallback": self.shortlist.fallback,
            },
            "selected_probes": list(self.selected_probes),
            "outcomes": [
                {
                    "probe": o.probe,
                    "entries": [[c, p] for c, p in o.entries],
                    "vote": o.vote,
                    "distance": o.distance,
                }
                for o in self.outcomes
            ],
            "tally": {str(arch): count for arch, count in sorted(self.tally.items())},
            "verdict": self.verdict,
            "tie_broken": self.tie_broken,
            "queries_spent": self.queries_spent,
            "aborted": self.aborted,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AttackTranscript":
        if data.get("schema") != TRANSCRIPT_SCHEMA:
            raise ValueError(f"unsupported transcript schema {data.get('schema')!r}")
        shortlist = Shortlist(
            candidates=tuple(data["shortlist"]["candidates"]),
            target_latency_ns=data["shortlist"]["target_latency_ns"],
            windows=tuple(tuple(w) for w in data["shortlist"]["windows"]),
            fallback=data["shortlist"]["fallback"],
        )
        return cls(
            timing_traces=tuple(data["timing_traces"]),
            target_latency_ns=data["target_latency_ns"],
            shortlist=shortlist,
            selected_probes=tuple(data["selected_probes"]),
            outcomes=tuple(
                ProbeOutcome(
                    probe=o["probe"],
                    entries=tuple((c, p) for c, p in o["entries"]),
                    vote=o["vote"],
                    distance=o["distance"],
                )
                for o in data["outcomes"]
            ),
            tally={int(arch): count for arch, count in data["tally"].items()},
            verdict=data["verdict"],
            tie_broken=data["tie_broken"],
            queries_spent=data["queries_spent"],
            aborted=data["aborted"],
            error=data["error"],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "AttackTranscript":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def run_attack(
    session,
    template: ArchitectureTemplate,
    timing_profile: TimingProfile,
    probe_budget: int = 5,
    timing_repetitions: int = 10,
    timing_probe: int = 0,
) -> AttackTranscript:
    """Full two-stage attack against one session.

    Measures ``timing_repetitions`` latency traces, shortlists, and -- when
    more than one candidate survives -- queries the ``probe_budget`` most
    discriminative probes for the shortlist and majority-votes the matches.
    A singleton shortlist becomes the verdict without any stage-2 queries.
    Transport failures abort with a partial transcript.
    """
    if probe_budget < 1 or timing_repetitions < 1:
        raise ValueError("probe_budget and timing_repetitions must be positive")
    traces: list[int] = []
    try:
        traces = session.measure_latency(timing_probe, timing_repetitions)
    except TransportError as exc:
        return _aborted_transcript(traces, session.queries_sent, str(exc))
    target_latency = aggregate_target_timing(traces)
    shortlist = shortlist_architectures(timing_profile, target_latency)

    if len(shortlist.candidates) == 1:
        verdict = shortlist.candidates[0]
        return AttackTranscript(
            timing_traces=tuple(traces),
            target_latency_ns=target_latency,
            shortlist=shortlist,
            selected_probes=(),
            outcomes=(),
            tally={verdict: 0},
            verdict=verdict,
            tie_broken=False,
            queries_spent=timing_repetitions,
        )

    ranking = rank_probes(template, shortlist.candidates)
    budget = min(probe_budget, len(ranking.order))
    probes = select_probes(ranking, budget)
    outcomes: list[ProbeOutcome] = []
    votes: list[int] = []
    distances: list[float] = []
    for probe in probes:
        try:
            measured = session.query(probe)
        except TransportError as exc:
            return _aborted_transcript(
                traces,
                session.queries_sent,
                str(exc),
                target_latency=target_latency,
                shortlist=shortlist,
                probes=probes,
                outcomes=outcomes,
            )
        vote, distance = match_response(
            template, shortlist.candidates, probe, measured.response
        )
        outcomes.append(
            ProbeOutcome(
                probe=probe,
                entries=measured.response.entries,
                vote=vote,
                distance=distance,
            )
        )
        votes.append(vote)
        distances.append(distance)
    verdict, tie_broken = majority_vote(votes, distances)
    tally: dict[int, int] = {}
    for vote in votes:
        tally[vote] = tally.get(vote, 0) + 1
    return AttackTranscript(
        timing_traces=tuple(traces),
        target_latency_ns=target_latency,
        shortlist=shortlist,
        selected_probes=tuple(probes),
        outcomes=tuple(outcomes),
        tally=tally,
        verdict=verdict,
        tie_broken=tie_broken,
        queries_spent=timing_repetitions + len(probes),
    )


def _aborted_transcript(
    traces: list[int],
    queries_spent: int,
    error: str,
    target_latency: int = 0,
    shortlist: Shortlist | None = None,
    probes: list[int] | None = None,
    outcomes: list[ProbeOutcome] | None = None,
) -> AttackTranscript:
    return AttackTranscript(
        timing_traces=tuple(traces),
        target_latency_ns=target_latency,
        shortlist=shortlist
        if shortlist is not None
        else Shortlist(candidates=(), target_latency_ns=0, windows=(), fallback=False),
        selected_probes=tuple(probes or ()),
        outcomes=tuple(outcomes or ()),
        tally={},
        verdict=None,
        tie_broken=False,
        queries_spent=queries_spent,
        aborted=True,
        error=error,
    )
