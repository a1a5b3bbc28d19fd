"""Reproducible synthetic population of oracle models.

The population mimics the behaviour this attack relies on: models that
share an architecture answer a probe almost identically, while models of
different architectures answer it with visibly different class
distributions. Each architecture draws, per probe, a base class
distribution from a symmetric Dirichlet (concentration ``inter_concentration``:
small values give peaked, architecture-specific distributions, large values
push every architecture towards uniform). A weight variant then perturbs
the base multiplicatively with log-normal noise of scale ``intra_noise``
and renormalises, so variants of one architecture cluster tightly around
their base.

Latency is an independent channel: every architecture has a fixed
(base_latency_ns, jitter_ns) pair and a model's inference time is sampled
uniformly from base +/- jitter.

Generation is fully deterministic given the config seed: a single PCG64
stream is consumed in a fixed order (per architecture: the base matrix,
then one noise matrix per variant, profiling variants before holdout).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import LabelSpace, ModelId, TopNResponse
from .errors import InvalidConfig, UnknownProbe, ZooLoadFailure

ZOO_SCHEMA = "archprint.zoo@1"

DEFAULT_ARCHITECTURES = 27
DEFAULT_PROFILING_VARIANTS = 10
DEFAULT_HOLDOUT_VARIANTS = 5
DEFAULT_PROBES = 1000
DEFAULT_CONCENTRATION = 0.5
DEFAULT_INTRA_NOISE = 0.05

# Default latency layout bounds and the overlapping-cluster parameters.
LATENCY_LOW_NS = 500_000
LATENCY_HIGH_NS = 20_000_000
SINGLE_JITTER_NS = 50_000
CLUSTER_SIZE = 6
CLUSTER_JITTER_NS = 400_000
CLUSTER_STEP_NS = 100_000


def default_timing_layout(n_architectures: int) -> tuple[tuple[int, int], ...]:
    """Per-architecture (base_latency_ns, jitter_ns) pairs.

    Bases spread evenly over [0.5 ms, 20 ms] with narrow jitter, except for
    one cluster of six architectures (the middle ids, when there are enough
    architectures) whose bases sit within 0.5 ms of each other under a wide
    jitter, so all six timing windows pairwise intersect while staying clear
    of their neighbours.
    """
    if n_architectures < 2:
        raise InvalidConfig("need at least two architectures")
    if n_architectures < CLUSTER_SIZE + 2:
        step = (LATENCY_HIGH_NS - LATENCY_LOW_NS) // max(n_architectures - 1, 1)
        jitter = min(SINGLE_JITTER_NS, step // 4)
        return tuple(
            (LATENCY_LOW_NS + i * step, jitter) for i in range(n_architectures)
        )

    n_slots = n_architectures - CLUSTER_SIZE + 1
    step = (LATENCY_HIGH_NS - LATENCY_LOW_NS) // (n_slots - 1)
    slots = [LATENCY_LOW_NS + i * step for i in range(n_slots)]
    cluster_slot = n_slots // 2
    cluster_start = (n_architectures - CLUSTER_SIZE) // 2

    layout: list[tuple[int, int]] = []
    single_positions = [s for i, s in enumerate(slots) if i != cluster_slot]
    center = slots[cluster_slot]
    offsets = [
        int((i - (CLUSTER_SIZE - 1) / 2) * CLUSTER_STEP_NS) for i in range(CLUSTER_SIZE)
    ]
    singles = iter(single_positions)
    for arch in range(n_architectures):
        if cluster_start <= arch < cluster_start + CLUSTER_SIZE:
            layout.append((center + offsets[arch - cluster_start], CLUSTER_JITTER_NS))
        else:
            layout.append((next(singles), SINGLE_JITTER_NS))
    return tuple(layout)


@dataclass(frozen=True)
class ZooConfig:
    """Knobs of the synthetic population; deterministic given ``seed``."""

    n_architectures: int = DEFAULT_ARCHITECTURES
    profiling_variants: int = DEFAULT_PROFILING_VARIANTS
    holdout_variants: int = DEFAULT_HOLDOUT_VARIANTS
    n_probes: int = DEFAULT_PROBES
    label_space: LabelSpace = field(default_factory=lambda: LabelSpace.of_size(10))
    inter_concentration: float = DEFAULT_CONCENTRATION
    intra_noise: float = DEFAULT_INTRA_NOISE
    top_n: int = 5
    timing: tuple[tuple[int, int], ...] = ()
    seed: int = 0

    def __post_init__(self):
        if not self.timing:
            object.__setattr__(
                self, "timing", default_timing_layout(self.n_architectures)
            )
        else:
            object.__setattr__(
                self, "timing", tuple((int(b), int(j)) for b, j in self.timing)
            )
        if self.n_architectures < 2:
            raise InvalidConfig("n_architectures must be at least 2")
        if self.profiling_variants < 1:
            raise InvalidConfig("profiling_variants must be at least 1")
        if self.holdout_variants < 0:
            raise InvalidConfig("holdout_variants must be non-negative")
        if self.n_probes < 1:
            raise InvalidConfig("n_probes must be at least 1")
        if self.inter_concentration <= 0:
            raise InvalidConfig("inter_concentration must be positive")
        if self.intra_noise < 0:
            raise InvalidConfig("intra_noise must be non-negative")
        if not 1 <= self.top_n <= self.label_space.size:
            raise InvalidConfig(
                f"top_n must be in [1, {self.label_space.size}], got {self.top_n}"
            )
        if len(self.timing) != self.n_architectures:
            raise InvalidConfig(
                f"timing layout has {len(self.timing)} entries for "
                f"{self.n_architectures} architectures"
            )
        if any(base <= 0 for base, _ in self.timing):
            raise InvalidConfig("base latencies must be positive")
        if any(jitter < 0 for _, jitter in self.timing):
            raise InvalidConfig("jitters must be non-negative")

    def with_seed(self, seed: int) -> "ZooConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> dict:
        return {
            "n_architectures": self.n_architectures,
            "profiling_variants": self.profiling_variants,
            "holdout_variants": self.holdout_variants,
            "n_probes": self.n_probes,
            "labels": list(self.label_space.labels),
            "inter_concentration": self.inter_concentration,
            "intra_noise": self.intra_noise,
            "top_n": self.top_n,
            "timing": [list(pair) for pair in self.timing],
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ZooConfig":
        return cls(
            n_architectures=data["n_architectures"],
            profiling_variants=data["profiling_variants"],
            holdout_variants=data["holdout_variants"],
            n_probes=data["n_probes"],
            label_space=LabelSpace(tuple(data["labels"])),
            inter_concentration=data["inter_concentration"],
            intra_noise=data["intra_noise"],
            top_n=data["top_n"],
            timing=tuple((b, j) for b, j in data["timing"]),
            seed=data["seed"],
        )


@dataclass(frozen=True, eq=False)
class OracleModel:
    """One concrete model: a full response distribution per probe plus
    its architecture's latency parameters."""

    id: ModelId
    table: np.ndarray  # (n_probes, |L|), rows sum to 1
    base_latency_ns: int
    jitter_ns: int

    def __post_init__(self):
        table = np.asarray(self.table, dtype=np.float64)
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    @property
    def n_probes(self) -> int:
        return self.table.shape[0]

    def row(self, probe: int) -> np.ndarray:
        if not 0 <= probe < self.n_probes:
            raise UnknownProbe(f"probe {probe} outside [0, {self.n_probes})")
        return self.table[probe]

    def respond(self, probe: int, top_n: int) -> TopNResponse:
        return query_oracle(self, probe, top_n)


def generate_zoo(config: ZooConfig) -> tuple[list[OracleModel], list[OracleModel]]:
    """Draw the full population; returns (profiling models, holdout models).

    Both lists are ordered by (architecture, variant); holdout variants
    continue the variant numbering after the profiling ones.
    """
    rng = np.random.default_rng(config.seed)
    n_labels = config.label_space.size
    total_variants = config.profiling_variants + config.holdout_variants
    alpha = np.full(n_labels, config.inter_concentration, dtype=np.float64)

    profiling: list[OracleModel] = []
    holdout: list[OracleModel] = []
    for arch in range(config.n_architectures):
        base = rng.dirichlet(alpha, size=config.n_probes)
        base_latency, jitter = config.timing[arch]
        for variant in range(total_variants):
            noise = rng.normal(0.0, config.intra_noise, size=base.shape)
            table = base * np.exp(noise)
            table /= table.sum(axis=1, keepdims=True)
            model = OracleModel(
                id=ModelId(arch, variant),
                table=table,
                base_latency_ns=base_latency,
                jitter_ns=jitter,
            )
            if variant < config.profiling_variants:
                profiling.append(model)
            else:
                holdout.append(model)
    return profiling, holdout


def group_by_architecture(models: list[OracleModel]) -> list[list[OracleModel]]:
    """Models regrouped into per-architecture lists, variant order preserved."""
    groups: dict[int, list[OracleModel]] = {}
    for model in models:
        groups.setdefault(model.id.architecture, []).append(model)
    return [groups[arch] for arch in sorted(groups)]


def query_oracle(model: OracleModel, probe: int, top_n: int) -> TopNResponse:
    """The model's ``top_n`` most probable classes for ``probe``.

    Probability ties break towards the lower class index; a given model
    answers a given probe identically every time.
    """
    row = model.row(probe)
    if not 1 <= top_n <= row.shape[0]:
        raise InvalidConfig(f"top_n must be in [1, {row.shape[0]}], got {top_n}")
    order = np.argsort(-row, kind="stable")[:top_n]
    return TopNResponse(tuple((int(c), float(row[c])) for c in order))


def sample_latency(model: OracleModel, rng: np.random.Generator) -> int:
    """One inference-time draw in nanoseconds: base +/- uniform jitter, >= 1."""
    if model.jitter_ns == 0:
        return max(model.base_latency_ns, 1)
    offset = int(rng.integers(-model.jitter_ns, model.jitter_ns + 1))
    return max(model.base_latency_ns + offset, 1)


def save_zoo(
    path: str | Path,
    config: ZooConfig,
    profiling: list[OracleModel],
    holdout: list[OracleModel],
) -> None:
    """Write the population to a versioned JSON document (exact replay)."""
    document = {
        "schema": ZOO_SCHEMA,
        "config": config.to_dict(),
        "models": [
            {
                "architecture": m.id.architecture,
                "variant": m.id.variant,
                "pool": pool,
                "base_latency_ns": m.base_latency_ns,
                "jitter_ns": m.jitter_ns,
                "table": [[float(v) for v in row] for row in m.table],
            }
            for pool, models in (("profiling", profiling), ("holdout", holdout))
            for m in models
        ],
    }
    Path(path).write_text(json.dumps(document), encoding="utf-8")


def load_zoo(path: str | Path) -> tuple[ZooConfig, list[OracleModel], list[OracleModel]]:
    """Read a zoo document back; inverse of :func:`save_zoo`."""
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ZooLoadFailure(f"cannot read zoo file {path}: {exc}") from exc
    if document.get("schema") != ZOO_SCHEMA:
        raise ZooLoadFailure(
            f"unsupported zoo schema {document.get('schema')!r} in {path}"
        )
    config = ZooConfig.from_dict(document["config"])
    profiling: list[OracleModel] = []
    holdout: list[OracleModel] = []
    for entry in document["models"]:
        model = OracleModel(
            id=ModelId(entry["architecture"], entry["variant"]),
            table=np.array(entry["table"], dtype=np.float64),
            base_latency_ns=entry["base_latency_ns"],
            jitter_ns=entry["jitter_ns"],
        )
        if entry["pool"] == "profiling":
            profiling.append(model)
        elif entry["pool"] == "holdout":
            holdout.append(model)
        else:
            raise ZooLoadFailure(f"unknown pool {entry['pool']!r} in {path}")
    return config, profiling, holdout


def find_model(
    profiling: list[OracleModel], holdout: list[OracleModel], target: ModelId
) -> OracleModel:
    """Locate a model by id across both pools."""
    for model in profiling + holdout:
        if model.id == target:
            return model
    raise ZooLoadFailure(f"model {target} not present in the zoo")
