"""Offline profiling: response cubes, templates, timing windows, diagnostics.

The attacker's knowledge base has two halves. The classification half is a
dense cube of expanded response vectors, one per (probe, architecture,
weight variant), averaged over variants into per-architecture templates.
The timing half is a per-architecture (min, max) latency window pooled
over every profiled model's traces, kept as strict min/max with no outlier
trimming so the shortlisting containment test stays faithful to the window
actually observed.

Both halves can also be ingested from CSV files produced by external
tooling, so measurements of real models can replace the simulator without
touching the rest of the pipeline.
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import LabelSpace, expand_topn
from .errors import (
    InconsistentDims,
    IndexOutOfRange,
    KTooSmall,
    MissingCell,
    OracleError,
    ProbabilityOutOfRange,
    SchemaMismatch,
)

TEMPLATE_SCHEMA = "archprint.templates@1"
TIMING_SCHEMA = "archprint.timing@1"
RESPONSES_CSV_HEADER = ["probe_id", "architecture_id", "variant", "class_index", "probability"]
TIMING_CSV_HEADER = ["architecture_id", "variant", "trace_ns"]


@dataclass(frozen=True, eq=False)
class ResponseCube:
    """Dense expanded responses, shape (n_probes, n_architectures, variants, |L|)."""

    values: np.ndarray
    label_space: LabelSpace
    provenance: str = "simulated"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 4:
            raise InconsistentDims(f"cube must be 4-D, got shape {values.shape}")
        if values.shape[3] != self.label_space.size:
            raise InconsistentDims(
                f"cube label axis {values.shape[3]} != label space {self.label_space.size}"
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape[:3]

    def content_hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(repr(self.values.shape).encode())
        digest.update(self.provenance.encode())
        digest.update(np.ascontiguousarray(self.values).tobytes())
        return digest.hexdigest()


@dataclass(frozen=True, eq=False)
class ArchitectureTemplate:
    """Per-(probe, architecture) mean response vectors over weight variants."""

    means: np.ndarray  # (n_probes, n_architectures, |L|)
    source_dims: tuple[int, int, int]
    label_space: LabelSpace
    source_hash: str

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        if means.ndim != 3:
            raise InconsistentDims(f"template must be 3-D, got shape {means.shape}")
        means.setflags(write=False)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "source_dims", tuple(self.source_dims))

    @property
    def n_probes(self) -> int:
        return self.means.shape[0]

    @property
    def n_architectures(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class TimingProfile:
    """Pooled per-architecture latency windows plus the raw traces behind them."""

    windows: tuple[tuple[int, int], ...]  # (min_ns, max_ns) per architecture
    traces: tuple[tuple[int, ...], ...]
    repetitions_per_model: int
    models_per_architecture: int

    @property
    def n_architectures(self) -> int:
        return len(self.windows)


def collect_cube(
    model_groups: Sequence[Sequence],
    probes: Sequence[int],
    top_n: int,
    label_space: LabelSpace,
) -> ResponseCube:
    """Query every model for every probe and expand into a cube.

    ``model_groups`` is one list of oracles per architecture (anything with
    ``respond(probe, top_n) -> TopNResponse``); all groups must be the same
    size. Query failures re-raise with the failing cell's coordinates.
    """
    if not model_groups or not probes:
        raise InconsistentDims("need at least one architecture and one probe")
    variants = len(model_groups[0])
    if variants == 0 or any(len(group) != variants for group in model_groups):
        raise InconsistentDims("every architecture needs the same number of variants")
    values = np.zeros(
        (len(probes), len(model_groups), variants, label_space.size), dtype=np.float64
    )
    for j, group in enumerate(model_groups):
        for p, model in enumerate(group):
            for i, probe in enumerate(probes):
                try:
                    response = model.respond(probe, top_n)
                except Exception as exc:
                    raise OracleError(
                        f"query failed at probe={probe} architecture={j} variant={p}: {exc}"
                    ) from exc
                values[i, j, p] = expand_topn(response, label_space)
    return ResponseCube(values=values, label_space=label_space, provenance="simulated")


def build_templates(cube: ResponseCube) -> ArchitectureTemplate:
    """Average the cube over the variant axis."""
    return ArchitectureTemplate(
        means=cube.values.mean(axis=2),
        source_dims=cube.dims,
        label_space=cube.label_space,
        source_hash=cube.content_hash(),
    )


def profile_timing(
    session_groups: Sequence[Sequence],
    repetitions: int,
    probe: int = 0,
) -> TimingProfile:
    """Collect latency traces per architecture through the client path.

    ``session_groups`` holds one session per profiled model, grouped by
    architecture. Each model contributes ``repetitions`` sequential
    measurements; an architecture's window is the strict min/max of its
    pooled traces.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be positive")
    if not session_groups or any(not group for group in session_groups):
        raise InconsistentDims("need at least one session per architecture")
    pooled: list[tuple[int, ...]] = []
    for group in session_groups:
        traces: list[int] = []
        for session in group:
            traces.extend(session.measure_latency(probe, repetitions))
        pooled.append(tuple(traces))
    return TimingProfile(
        windows=tuple((min(t), max(t)) for t in pooled),
        traces=tuple(pooled),
        repetitions_per_model=repetitions,
        models_per_architecture=len(session_groups[0]),
    )


def profile_timing_loopback(
    model_groups: Sequence[Sequence],
    label_space: LabelSpace,
    top_n: int,
    repetitions: int,
    probe: int = 0,
    seed: int | None = None,
) -> TimingProfile:
    """Collect timing traces through a real loopback HTTP service.

    Each model is served briefly and measured over the wire, so the traces
    carry the same transport overhead a live attack will see; windows
    profiled this way keep the containment test symmetric against targets
    measured through the same stack. Slower than the in-process path and
    not bit-reproducible (wall clock), so campaigns default to in-process.
    """
    from .client import RemoteSession
    from .service import PredictionService

    if repetitions < 1:
        raise ValueError("repetitions must be positive")
    root_rng = np.random.default_rng(seed)
    pooled: list[tuple[int, ...]] = []
    for group in model_groups:
        traces: list[int] = []
        for model in group:
            service = PredictionService(
                model, label_space, top_n, latency_rng=root_rng.spawn(1)[0]
            )
            with service:
                session = RemoteSession(service.url, label_space)
                try:
                    traces.extend(session.measure_latency(probe, repetitions))
                finally:
                    session.close()
        pooled.append(tuple(traces))
    return TimingProfile(
        windows=tuple((min(t), max(t)) for t in pooled),
        traces=tuple(pooled),
        repetitions_per_model=repetitions,
        models_per_architecture=len(model_groups[0]) if model_groups else 0,
    )


def timing_profile_from_traces(
    traces_by_architecture: Sequence[Sequence[int]],
    repetitions_per_model: int = 0,
    models_per_architecture: int = 0,
) -> TimingProfile:
    """Build a profile from pre-collected traces (ingest path, tests)."""
    if not traces_by_architecture or any(not t for t in traces_by_architecture):
        raise InconsistentDims("every architecture needs at least one trace")
    pooled = tuple(tuple(int(v) for v in t) for t in traces_by_architecture)
    return TimingProfile(
        windows=tuple((min(t), max(t)) for t in pooled),
        traces=pooled,
        repetitions_per_model=repetitions_per_model,
        models_per_architecture=models_per_architecture,
    )


@dataclass(frozen=True, eq=False)
class DomReport:
    """Class-wise absolute difference of mean probabilities for one probe.

    ``inter`` compares the two architectures' variant means; the intra
    baselines compare the first half of each architecture's variants with
    the second half, which is the yardstick a probe must beat to carry any
    architectural signal.
    """

    probe: int
    pair: tuple[int, int]
    inter: np.ndarray
    intra_first: np.ndarray
    intra_second: np.ndarray


def dom_report(cube: ResponseCube, probe: int, pair: tuple[int, int]) -> DomReport:
    """Difference-of-means diagnostic for one probe and architecture pair."""
    n_probes, n_archs, variants, _ = cube.values.shape
    j, m = pair
    if not 0 <= probe < n_probes:
        raise IndexOutOfRange(f"probe {probe} outside [0, {n_probes})")
    if not (0 <= j < n_archs and 0 <= m < n_archs):
        raise IndexOutOfRange(f"pair {pair} outside [0, {n_archs})")
    if variants < 2:
        raise KTooSmall("intra-architecture baseline needs at least two variants")
    half = (variants + 1) // 2

    def intra(arch: int) -> np.ndarray:
        slice_ = cube.values[probe, arch]
        return np.abs(slice_[:half].mean(axis=0) - slice_[half:].mean(axis=0))

    mean_j = cube.values[probe, j].mean(axis=0)
    mean_m = cube.values[probe, m].mean(axis=0)
    return DomReport(
        probe=probe,
        pair=(j, m),
        inter=np.abs(mean_j - mean_m),
        intra_first=intra(j),
        intra_second=intra(m),
    )


# ---------------------------------------------------------------------------
# Artifact persistence
# ---------------------------------------------------------------------------

def save_templates(template: ArchitectureTemplate, path: str | Path) -> None:
    document = {
        "schema": TEMPLATE_SCHEMA,
        "labels": list(template.label_space.labels),
        "source_dims": list(template.source_dims),
        "source_hash": template.source_hash,
        "means": [[list(map(float, row)) for row in arch] for arch in template.means],
    }
    Path(path).write_text(json.dumps(document), encoding="utf-8")


def load_templates(path: str | Path) -> ArchitectureTemplate:
    document = json.loads(Path(path).read_text(encoding="utf-8"))
    if document.get("schema") != TEMPLATE_SCHEMA:
        raise SchemaMismatch(f"unsupported template schema {document.get('schema')!r}")
    return ArchitectureTemplate(
        means=np.array(document["means"], dtype=np.float64),
        source_dims=tuple(document["source_dims"]),
        label_space=LabelSpace(tuple(document["labels"])),
        source_hash=document["source_hash"],
    )


def save_timing_profile(profile: TimingProfile, path: str | Path) -> None:
    document = {
        "schema": TIMING_SCHEMA,
        "repetitions_per_model": profile.repetitions_per_model,
        "models_per_architecture": profile.models_per_architecture,
        "architectures": [
            {"min_ns": lo, "max_ns": hi, "traces": list(traces)}
            for (lo, hi), traces in zip(profile.windows, profile.traces)
        ],
    }
    Path(path).write_text(json.dumps(document), encoding="utf-8")


def load_timing_profile(path: str | Path) -> TimingProfile:
    document = json.loads(Path(path).read_text(encoding="utf-8"))
    if document.get("schema") != TIMING_SCHEMA:
        raise SchemaMismatch(f"unsupported timing schema {document.get('schema')!r}")
    entries = document["architectures"]
    return TimingProfile(
        windows=tuple((e["min_ns"], e["max_ns"]) for e in entries),
        traces=tuple(tuple(e["traces"]) for e in entries),
        repetitions_per_model=document["repetitions_per_model"],
        models_per_architecture=document["models_per_architecture"],
    )


# ---------------------------------------------------------------------------
# CSV export / ingest
# ---------------------------------------------------------------------------

def export_responses_csv(cube: ResponseCube, path: str | Path) -> None:
    """One row per non-zero (probe, architecture, variant, class) entry.

    A cell whose vector is entirely zero still gets one placeholder row
    (class 0, probability 0.0) so the file stays dense in cells.
    """
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(RESPONSES_CSV_HEADER)
        n_probes, n_archs, variants, n_labels = cube.values.shape
        for i in range(n_probes):
            for j in range(n_archs):
                for p in range(variants):
                    vector = cube.values[i, j, p]
                    nonzero = np.nonzero(vector)[0]
                    if nonzero.size == 0:
                        writer.writerow([i, j, p, 0, repr(0.0)])
                        continue
                    for c in nonzero:
                        writer.writerow([i, j, p, int(c), repr(float(vector[c]))])


def ingest_responses_csv(
    path: str | Path, label_space: LabelSpace, version: str = "1"
) -> ResponseCube:
    """Read a response log back into a dense cube (provenance "ingested").

    Validation failures carry the 1-based row number of the offending line.
    """
    if version != "1":
        raise SchemaMismatch(f"unsupported responses schema version {version!r}")
    cells: dict[tuple[int, int, int], dict[int, float]] = {}
    max_i = max_j = max_p = -1
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != RESPONSES_CSV_HEADER:
            raise SchemaMismatch(
                f"bad header {header!r}, expected {RESPONSES_CSV_HEADER!r}"
            )
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 5:
                raise SchemaMismatch(f"row {row_number}: expected 5 fields, got {len(row)}")
            try:
                i, j, p, c = (int(v) for v in row[:4])
                probability = float(row[4])
            except ValueError as exc:
                raise SchemaMismatch(f"row {row_number}: {exc}") from exc
            if min(i, j, p, c) < 0:
                raise SchemaMismatch(f"row {row_number}: negative index")
            if c >= label_space.size:
                raise IndexOutOfRange(
                    f"row {row_number}: class {c} outside label space of size "
                    f"{label_space.size}"
                )
            if not 0.0 <= probability <= 1.0:
                raise ProbabilityOutOfRange(
                    f"row {row_number}: probability {probability} outside [0, 1]"
                )
            cell = cells.setdefault((i, j, p), {})
            if c in cell:
                raise SchemaMismatch(
                    f"row {row_number}: duplicate class {c} for cell ({i}, {j}, {p})"
                )
            cell[c] = probability
            max_i, max_j, max_p = max(max_i, i), max(max_j, j), max(max_p, p)
    if max_i < 0:
        raise SchemaMismatch("response log holds no rows")
    values = np.zeros(
        (max_i + 1, max_j + 1, max_p + 1, label_space.size), dtype=np.float64
    )
    for i in range(max_i + 1):
        for j in range(max_j + 1):
            for p in range(max_p + 1):
                cell = cells.get((i, j, p))
                if cell is None:
                    raise MissingCell(
                        f"no rows for probe={i} architecture={j} variant={p}"
                    )
                for c, probability in cell.items():
                    values[i, j, p, c] = probability
    return ResponseCube(values=values, label_space=label_space, provenance="ingested")


def export_timing_csv(
    traces_by_model: dict[tuple[int, int], Sequence[int]], path: str | Path
) -> None:
    """One row per (architecture, variant, trace)."""
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(TIMING_CSV_HEADER)
        for (arch, variant), traces in sorted(traces_by_model.items()):
            for trace in traces:
                writer.writerow([arch, variant, int(trace)])


def ingest_timing_csv(path: str | Path) -> dict[tuple[int, int], list[int]]:
    """Read per-model timing traces; pool with timing_profile_from_traces."""
    traces: dict[tuple[int, int], list[int]] = {}
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header != TIMING_CSV_HEADER:
            raise SchemaMismatch(f"bad header {header!r}, expected {TIMING_CSV_HEADER!r}")
        for row_number, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise SchemaMismatch(f"row {row_number}: expected 3 fields, got {len(row)}")
            try:
                arch, variant, trace = (int(v) for v in row)
            except ValueError as exc:
                raise SchemaMismatch(f"row {row_number}: {exc}") from exc
            if trace <= 0:
                raise SchemaMismatch(f"row {row_number}: trace must be positive")
            traces.setdefault((arch, variant), []).append(trace)
    if not traces:
        raise SchemaMismatch("timing log holds no rows")
    return traces


def pooled_timing_profile(
    traces_by_model: dict[tuple[int, int], list[int]]
) -> TimingProfile:
    """Pool per-model traces into per-architecture windows."""
    architectures = sorted({arch for arch, _ in traces_by_model})
    if architectures != list(range(len(architectures))):
        raise InconsistentDims(f"architecture ids not dense: {architectures}")
    by_arch: list[list[int]] = [[] for _ in architectures]
    for (arch, _), traces in sorted(traces_by_model.items()):
        by_arch[arch].extend(traces)
    variants = {
        arch: len({v for a, v in traces_by_model if a == arch}) for arch in architectures
    }
    return timing_profile_from_traces(
        by_arch,
        repetitions_per_model=0,
        models_per_architecture=min(variants.values()),
    )
