import json

import numpy as np

from archprint.cli import main
from archprint.core import ModelId
from archprint.service import PredictionService
from archprint.zoo import find_model, load_zoo


def run_cli(*argv):
    return main(list(argv))


def gen_small_zoo(tmp_path, name="zoo.json", **extra):
    path = tmp_path / name
    argv = [
        "zoo", "gen",
        "--seed", "5",
        "--out", str(path),
        "--architectures", "4",
        "--profiling-variants", "2",
        "--holdout-variants", "1",
        "--probes", "15",
        "--labels", "8",
    ]
    for key, value in extra.items():
        argv += [f"--{key}", str(value)]
    assert run_cli(*argv) == 0
    return path


def test_zoo_gen_is_byte_deterministic(tmp_path):
    a = gen_small_zoo(tmp_path, "a.json")
    b = gen_small_zoo(tmp_path, "b.json")
    assert a.read_bytes() == b.read_bytes()


def test_zoo_gen_requires_seed(tmp_path, capsys):
    code = run_cli("zoo", "gen", "--out", str(tmp_path / "z.json"))
    assert code == 1
    assert "seed" in capsys.readouterr().err


def test_unknown_flag_is_validation_error(capsys):
    assert run_cli("zoo", "gen", "--does-not-exist", "1") == 1


def test_unknown_config_key_is_validation_error(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"bogus_key": 1}))
    assert run_cli("zoo", "gen", "--config", str(config)) == 1
    assert "bogus_key" in capsys.readouterr().err


def test_config_file_supplies_defaults_flags_override(tmp_path):
    config = tmp_path / "config.json"
    config.write_text(
        json.dumps(
            {
                "seed": 5,
                "architectures": 4,
                "profiling_variants": 2,
                "holdout_variants": 1,
                "probes": 15,
                "labels": 8,
            }
        )
    )
    from_config = tmp_path / "from_config.json"
    assert run_cli("zoo", "gen", "--config", str(config), "--out", str(from_config)) == 0
    reference = gen_small_zoo(tmp_path, "reference.json")
    assert from_config.read_bytes() == reference.read_bytes()

    overridden = tmp_path / "overridden.json"
    assert (
        run_cli(
            "zoo", "gen",
            "--config", str(config),
            "--seed", "6",
            "--out", str(overridden),
        )
        == 0
    )
    assert overridden.read_bytes() != reference.read_bytes()


def test_profile_and_rank_pipeline(tmp_path, capsys):
    zoo_path = gen_small_zoo(tmp_path)
    templates = tmp_path / "templates.json"
    timing = tmp_path / "timing.json"
    assert run_cli("profile", "classify", "--zoo", str(zoo_path), "--out", str(templates)) == 0
    assert (
        run_cli(
            "profile", "timing",
            "--zoo", str(zoo_path),
            "--reps", "5",
            "--seed", "3",
            "--out", str(timing),
        )
        == 0
    )
    assert run_cli("probe", "rank", "--templates", str(templates), "--count", "3") == 0
    ranking = json.loads(capsys.readouterr().out)
    assert len(ranking["selected"]) == 3
    assert ranking["restrict"] == [0, 1, 2, 3]
    scores = ranking["scores"]
    selected = ranking["selected"]
    assert scores[selected[0]] == max(scores)


def test_dom_command(tmp_path, capsys):
    zoo_path = gen_small_zoo(tmp_path)
    assert run_cli("dom", "--zoo", str(zoo_path), "--probe", "2", "--pair", "0,3") == 0
    report = json.loads(capsys.readouterr().out)
    assert report["pair"] == [0, 3]
    assert len(report["inter"]) == 8


def test_ingest_round_trip_via_cli(tmp_path, capsys, small_cube):
    from archprint.profiler import export_responses_csv, export_timing_csv

    responses = tmp_path / "responses.csv"
    export_responses_csv(small_cube, responses)
    timing_csv = tmp_path / "timing.csv"
    export_timing_csv({(0, 0): [4, 6], (1, 0): [9, 12]}, timing_csv)
    out_templates = tmp_path / "templates.json"
    out_timing = tmp_path / "timing.json"
    code = run_cli(
        "ingest",
        "--responses", str(responses),
        "--labels", str(small_cube.label_space.size),
        "--out-templates", str(out_templates),
        "--timing", str(timing_csv),
        "--out-timing", str(out_timing),
    )
    assert code == 0
    from archprint.profiler import load_templates, load_timing_profile

    template = load_templates(out_templates)
    assert template.means.shape[0] == small_cube.dims[0]
    profile = load_timing_profile(out_timing)
    assert profile.windows == ((4, 6), (9, 12))


def test_ingest_reports_bad_rows(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text(
        "probe_id,architecture_id,variant,class_index,probability\n0,0,0,0,1.5\n"
    )
    assert run_cli("ingest", "--responses", str(bad), "--labels", "4") == 1
    assert "row 2" in capsys.readouterr().err


def test_full_pipeline_closure(tmp_path, capsys):
    """Every artifact one subcommand writes is consumable by the next."""
    zoo_path = gen_small_zoo(tmp_path, noise="0.05")
    templates = tmp_path / "templates.json"
    timing = tmp_path / "timing.json"
    transcript_path = tmp_path / "transcript.json"
    request_log = tmp_path / "requests.jsonl"

    assert run_cli("profile", "classify", "--zoo", str(zoo_path), "--out", str(templates)) == 0
    # live target, so profile timing through the same loopback transport
    assert (
        run_cli(
            "profile", "timing",
            "--zoo", str(zoo_path),
            "--reps", "5",
            "--seed", "3",
            "--transport", "loopback",
            "--out", str(timing),
        )
        == 0
    )

    config, profiling, holdout = load_zoo(zoo_path)
    target = find_model(profiling, holdout, ModelId(2, 2))  # the holdout variant
    service = PredictionService(
        target,
        config.label_space,
        config.top_n,
        latency_rng=np.random.default_rng(8),
        log_path=request_log,
    ).start()
    try:
        code = run_cli(
            "attack",
            "--templates", str(templates),
            "--timing", str(timing),
            "--url", service.url,
            "--d", "5",
            "--reps", "10",
            "--out", str(transcript_path),
        )
    finally:
        service.stop()
    assert code == 0
    transcript = json.loads(transcript_path.read_text())
    assert transcript["queries_spent"] <= 15
    logged = [json.loads(l)["probe_id"] for l in request_log.read_text().splitlines()]
    assert len(logged) == transcript["queries_spent"]
    assert logged[:10] == [0] * 10
    assert logged[10:] == list(transcript["selected_probes"])


def test_evaluate_command(tmp_path, capsys):
    config = {
        "zoo": {
            "n_architectures": 3,
            "profiling_variants": 2,
            "holdout_variants": 1,
            "n_probes": 10,
            "labels": [f"c{i}" for i in range(8)],
            "inter_concentration": 0.5,
            "intra_noise": 0.05,
            "top_n": 5,
            "timing": [[1_000_000, 0], [2_000_000, 0], [3_000_000, 0]],
            "seed": 4,
        },
        "repetitions": 10,
        "probe_budget": 5,
        "runs": 1,
        "seed": 4,
    }
    config_path = tmp_path / "campaign.json"
    config_path.write_text(json.dumps(config))
    out_dir = tmp_path / "results"
    code = run_cli("evaluate", "--config", str(config_path), "--out-dir", str(out_dir))
    assert code == 0
    stdout = capsys.readouterr().out
    assert "accuracy=" in stdout
    assert (out_dir / "report.json").exists()
    assert (out_dir / "report.txt").exists()
    assert (out_dir / "per_architecture.csv").exists()
    report = json.loads((out_dir / "report.json").read_text())
    assert report["aggregates"]["attacks"] == 3


def test_evaluate_repeats_are_byte_identical(tmp_path, capsys):
    config = {
        "zoo": {
            "n_architectures": 3,
            "profiling_variants": 2,
            "holdout_variants": 1,
            "n_probes": 10,
            "labels": [f"c{i}" for i in range(8)],
            "inter_concentration": 0.5,
            "intra_noise": 0.05,
            "top_n": 5,
            "timing": [[1_000_000, 200_000], [1_100_000, 200_000], [3_000_000, 100_000]],
            "seed": 11,
        },
        "seed": 11,
    }
    config_path = tmp_path / "campaign.json"
    config_path.write_text(json.dumps(config))
    first = tmp_path / "one"
    second = tmp_path / "two"
    assert run_cli("evaluate", "--config", str(config_path), "--out-dir", str(first)) == 0
    assert run_cli("evaluate", "--config", str(config_path), "--out-dir", str(second)) == 0
    assert (first / "report.json").read_bytes() == (second / "report.json").read_bytes()


def test_serve_validation_errors(tmp_path):
    assert run_cli("serve", "--zoo", str(tmp_path / "missing.json"), "--target", "0:0") == 2
