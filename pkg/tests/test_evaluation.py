import json

import numpy as np
import pytest

from archprint.core import LabelSpace
from archprint.errors import InvalidConfig
from archprint.evaluation import (
    CampaignConfig,
    ReplaySession,
    build_artifacts,
    emit_report,
    load_report,
    render_table,
    run_campaign,
    run_replay_campaign,
)
from archprint.profiler import (
    collect_cube,
    export_responses_csv,
    export_timing_csv,
    ingest_responses_csv,
    ingest_timing_csv,
)
from archprint.zoo import ZooConfig, generate_zoo, group_by_architecture


def campaign_config(**overrides):
    zoo_overrides = overrides.pop("zoo_overrides", {})
    zoo = dict(
        n_architectures=4,
        profiling_variants=3,
        holdout_variants=2,
        n_probes=25,
        label_space=LabelSpace.of_size(10),
        seed=17,
    )
    zoo.update(zoo_overrides)
    base = dict(zoo=ZooConfig(**zoo), repetitions=10, probe_budget=5, runs=1, seed=17)
    base.update(overrides)
    return CampaignConfig(**base)


def test_campaign_attack_count():
    config = campaign_config(runs=2)
    report = run_campaign(config)
    assert len(report.records) == 4 * 2 * 2  # archs * holdouts * runs


def test_campaign_degenerate_zoo_is_perfect():
    config = campaign_config(
        zoo_overrides=dict(
            intra_noise=0.0,
            timing=tuple((1_000_000 * (i + 1), 0) for i in range(4)),
        )
    )
    report = run_campaign(config)
    assert report.accuracy == 1.0
    assert report.shortlist_hit_rate == 1.0


def test_campaign_validates_config():
    with pytest.raises(InvalidConfig):
        campaign_config(runs=0)
    with pytest.raises(InvalidConfig):
        campaign_config(zoo_overrides=dict(holdout_variants=0))


def test_campaign_report_json_deterministic():
    config = campaign_config()
    a = json.dumps(run_campaign(config).to_dict())
    b = json.dumps(run_campaign(config).to_dict())
    assert a == b


def test_aggregates_recomputable_from_transcripts():
    config = campaign_config()
    report = run_campaign(config)
    assert len(report.transcripts) == len(report.records)
    correct = sum(
        t.verdict == r.architecture
        for t, r in zip(report.transcripts, report.records)
        if not t.aborted
    )
    assert report.accuracy == correct / len(report.records)
    assert report.max_queries == max(t.queries_spent for t in report.transcripts)
    hits = sum(
        (not t.shortlist.fallback) and (r.architecture in t.shortlist.candidates)
        for t, r in zip(report.transcripts, report.records)
    )
    assert report.shortlist_hit_rate == hits / len(report.records)


def test_report_round_trip_and_table(tmp_path):
    report = run_campaign(campaign_config())
    json_path = tmp_path / "report.json"
    table_path = tmp_path / "report.txt"
    csv_path = tmp_path / "per_arch.csv"
    transcripts = tmp_path / "transcripts"
    emit_report(report, json_path, table_path, csv_path, transcripts)
    loaded = load_report(json_path)
    assert loaded.accuracy == report.accuracy
    assert loaded.records == report.records
    assert loaded.per_architecture == report.per_architecture
    table = table_path.read_text()
    assert len(table.splitlines()) >= 4 + 2  # 4 arch rows plus header and rule
    assert "accuracy=" in table
    assert len(list(transcripts.glob("*.json"))) == len(report.records)
    csv_lines = csv_path.read_text().splitlines()
    assert len(csv_lines) == 1 + 4


def test_render_table_uses_four_significant_digits():
    report = run_campaign(campaign_config())
    table = render_table(report)
    assert f"accuracy={format(report.accuracy, '.4g')}" in table


def test_per_attack_seeding_replays_single_attack():
    from archprint.attack import run_attack
    from archprint.client import InProcessSession

    config = campaign_config()
    report = run_campaign(config)
    template, timing, _, holdout = build_artifacts(config)
    groups = group_by_architecture(holdout)
    arch, h, run = 2, 1, 0
    rng = np.random.default_rng([config.seed, 2, arch, h, run])
    session = InProcessSession(groups[arch][h], config.zoo.top_n, rng)
    replayed = run_attack(
        session,
        template,
        timing,
        probe_budget=config.probe_budget,
        timing_repetitions=config.repetitions,
    )
    index = next(
        i
        for i, r in enumerate(report.records)
        if (r.architecture, r.holdout_index, r.run) == (arch, h, run)
    )
    assert report.transcripts[index] == replayed


def test_accuracy_never_rises_with_noise():
    # one-sided check over 5 seeds and a 3-point noise sweep
    sweeps = []
    for seed in range(5):
        accuracies = []
        for noise in (0.05, 2.0, 4.0):
            config = campaign_config(
                seed=seed,
                zoo_overrides=dict(
                    seed=seed,
                    intra_noise=noise,
                    timing=tuple((1_000_000, 500_000) for _ in range(4)),
                ),
            )
            accuracies.append(run_campaign(config).accuracy)
        sweeps.append(accuracies)
    non_increasing = sum(a[0] >= a[1] >= a[2] for a in sweeps)
    assert non_increasing >= 4


# --- replay (ingested artifacts) ------------------------------------------------

def test_replay_session_reconstructs_responses():
    config = ZooConfig(
        n_architectures=3,
        profiling_variants=2,
        holdout_variants=1,
        n_probes=6,
        label_space=LabelSpace.of_size(8),
        seed=3,
    )
    _, holdout = generate_zoo(config)
    model = holdout[0]
    cube = collect_cube([[model]], range(6), config.top_n, config.label_space)
    session = ReplaySession(cube.values[:, 0, 0, :], [5, 6, 7], top_n=config.top_n)
    from archprint.zoo import query_oracle

    for probe in range(6):
        assert session.query(probe).response == query_oracle(model, probe, config.top_n)
    # six queries so far, so the cursor has cycled back to the first trace
    assert session.measure_latency(0, 5) == [5, 6, 7, 5, 6]


def test_replay_campaign_from_exported_files(tmp_path):
    config = campaign_config()
    template, timing, profiling, holdout = build_artifacts(config)
    holdout_groups = group_by_architecture(holdout)
    holdout_cube = collect_cube(
        holdout_groups,
        range(config.zoo.n_probes),
        config.zoo.top_n,
        config.zoo.label_space,
    )
    rng = np.random.default_rng(100)
    traces = {
        (arch, v): [
            int(t)
            for t in rng.integers(
                config.zoo.timing[arch][0] - config.zoo.timing[arch][1],
                config.zoo.timing[arch][0] + config.zoo.timing[arch][1] + 1,
                size=10,
            )
        ]
        for arch in range(4)
        for v in range(2)
    }
    responses_csv = tmp_path / "holdout.csv"
    timing_csv = tmp_path / "holdout_timing.csv"
    export_responses_csv(holdout_cube, responses_csv)
    export_timing_csv(traces, timing_csv)

    replay_cube = ingest_responses_csv(responses_csv, config.zoo.label_space)
    replay_traces = ingest_timing_csv(timing_csv)
    report = run_replay_campaign(
        {"top_n": config.zoo.top_n, "seed": 17},
        template,
        timing,
        replay_cube,
        replay_traces,
    )
    assert len(report.records) == 8
    assert report.accuracy >= 0.8  # same zoo underneath, so replay should match well
