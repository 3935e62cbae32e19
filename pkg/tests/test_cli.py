import json
import math
import os

import pytest

from mmrelay.channel import SuccessTable, channel_fingerprint
from mmrelay.cli import (
    SWEEP_HEADER,
    SweepSpec,
    _extremum_rows,
    _validate_matrix,
    cached_table,
    load_config,
    main,
    parse_axis,
    run_sweep,
)
from mmrelay.config import ConfigError, SceneConfig
from mmrelay.metrics import evaluate

TINY = ["--set", "n_ues=2", "--set", "n_shadow_samples=4000"]


@pytest.fixture(scope="module")
def cache_dir(tmp_path_factory):
    return str(tmp_path_factory.mktemp("tables"))


def tiny_config(**overrides) -> SceneConfig:
    return SceneConfig(n_ues=2, n_shadow_samples=4000, **overrides)


# ------------------------------------------------------------ config input

def test_overrides_and_degree_sugar():
    cfg = load_config(None, ["q_u=0.7", "theta_rd_deg=30", "n_ues=5"])
    assert cfg.q_u == 0.7
    assert cfg.theta_rd == pytest.approx(math.radians(30.0))
    assert cfg.n_ues == 5


def test_sigma_e_deg_is_a_real_field_not_sugar():
    cfg = load_config(None, ["sigma_e_deg=7"])
    assert cfg.sigma_e_deg == 7


def test_json_file_with_override_precedence(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps({"q_u": 0.3, "theta_rd_deg": 45}))
    cfg = load_config(str(path), ["q_u=0.5"])
    assert cfg.q_u == 0.5
    assert cfg.theta_rd == pytest.approx(math.radians(45.0))


def test_unknown_field_is_rejected():
    with pytest.raises(ConfigError, match="unknown"):
        load_config(None, ["q_x=0.5"])
    with pytest.raises(ConfigError):
        load_config(None, ["q_u:0.5"])
    with pytest.raises(ConfigError):
        load_config(None, ["q_u=zero point five"])


def test_non_object_json_is_rejected(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config(str(path))


# ------------------------------------------------------------ axis parsing

def test_axis_linspace_form():
    name, values = parse_axis("q_uf=0:1:5")
    assert name == "q_uf"
    assert values == (0.0, 0.25, 0.5, 0.75, 1.0)


def test_axis_comma_form_and_degree_sugar():
    name, values = parse_axis("theta_rd_deg=15,30,60")
    assert name == "theta_rd"
    assert values == tuple(math.radians(v) for v in (15.0, 30.0, 60.0))


@pytest.mark.parametrize("bad", ["q_uf", "q_uf=0:1", "q_uf=0:1:0",
                                 "q_uf=", "q_uf=a,b"])
def test_axis_rejects_malformed_ranges(bad):
    with pytest.raises(ConfigError):
        parse_axis(bad)


def test_sweep_spec_validation():
    base = tiny_config()
    axis = ("q_uf", (0.1, 0.5))
    with pytest.raises(ConfigError, match="one or two"):
        SweepSpec(base=base, axes=())
    with pytest.raises(ConfigError, match="one or two"):
        SweepSpec(base=base, axes=(axis, axis, axis))
    with pytest.raises(ConfigError, match="not a configuration field"):
        SweepSpec(base=base, axes=(("q_x", (0.1,)),))
    with pytest.raises(ConfigError, match="empty"):
        SweepSpec(base=base, axes=(("q_uf", ()),))
    with pytest.raises(ConfigError, match="objective"):
        SweepSpec(base=base, axes=(axis,), objective="latency")
    with pytest.raises(ConfigError, match="extremum"):
        SweepSpec(base=base, axes=(axis,), extremum="best")


# ------------------------------------------------------------ extremum trace

def _fake_rows(values):
    return [{"q_uf": v, "t_aggregate": t, "d_total": 1.0, "error": ""}
            for v, t in values]


def test_extremum_single_axis_argmax():
    spec = SweepSpec(base=tiny_config(),
                     axes=(("q_uf", (0.0, 0.5, 1.0)),), extremum="max")
    rows = _fake_rows([(0.0, 1.0), (0.5, 3.0), (1.0, 2.0)])
    (ext,) = _extremum_rows(spec, rows)
    assert ext["arg_value"] == 0.5
    assert ext["value"] == 3.0
    assert ext["arg_name"] == "q_uf"


def test_extremum_tie_breaks_toward_the_smaller_argument():
    spec = SweepSpec(base=tiny_config(),
                     axes=(("q_uf", (0.0, 0.5, 1.0)),), extremum="max")
    rows = _fake_rows([(0.0, 3.0), (0.5, 3.0), (1.0, 1.0)])
    (ext,) = _extremum_rows(spec, rows)
    assert ext["arg_value"] == 0.0


def test_extremum_skips_failed_and_infinite_points():
    spec = SweepSpec(base=tiny_config(),
                     axes=(("q_uf", (0.0, 0.5, 1.0)),),
                     objective="delay", extremum="min")
    rows = [
        {"q_uf": 0.0, "d_total": 5.0, "error": "ValueError: boom"},
        {"q_uf": 0.5, "d_total": math.inf, "error": ""},
        {"q_uf": 1.0, "d_total": 7.0, "error": ""},
    ]
    (ext,) = _extremum_rows(spec, rows)
    assert ext["arg_value"] == 1.0 and ext["value"] == 7.0


def test_extremum_two_axis_grouping():
    spec = SweepSpec(
        base=tiny_config(),
        axes=(("q_u", (0.2, 0.4)), ("q_uf", (0.0, 1.0))),
        extremum="max",
    )
    rows = [
        {"q_u": 0.2, "q_uf": 0.0, "t_aggregate": 1.0, "error": ""},
        {"q_u": 0.2, "q_uf": 1.0, "t_aggregate": 2.0, "error": ""},
        {"q_u": 0.4, "q_uf": 0.0, "t_aggregate": 4.0, "error": ""},
        {"q_u": 0.4, "q_uf": 1.0, "t_aggregate": 3.0, "error": ""},
    ]
    first, second = _extremum_rows(spec, rows)
    assert first["outer_value"] == 0.2 and first["arg_value"] == 1.0
    assert second["outer_value"] == 0.4 and second["arg_value"] == 0.0


# ------------------------------------------------------------ table cache

def test_cache_round_trips_the_table(cache_dir):
    cfg = tiny_config()
    built = cached_table(cfg, cache_dir)
    loaded = cached_table(cfg, cache_dir)
    assert loaded.probs == built.probs
    files = [f for f in os.listdir(cache_dir) if f.endswith(".csv")]
    assert len(files) == 1
    assert channel_fingerprint(cfg) in files[0]


def test_protocol_knobs_share_a_cache_entry(cache_dir):
    before = set(os.listdir(cache_dir))
    cached_table(tiny_config(q_u=0.9, q_r=0.4, d_a=7.0), cache_dir)
    assert set(os.listdir(cache_dir)) == before
    cached_table(tiny_config(d_ur=35.0), cache_dir)
    assert len(set(os.listdir(cache_dir))) == len(before) + 1


# ------------------------------------------------------------ sweeps

def test_single_point_sweep_matches_direct_evaluation(cache_dir):
    base = tiny_config()
    spec = SweepSpec(base=base, axes=(("q_uf", (0.5,)),), cache_dir=cache_dir)
    rows, ext = run_sweep(spec)
    assert len(rows) == 1 and ext == []
    row = rows[0]
    assert row["error"] == ""
    assert row["source"] == "analysis"

    cfg = base.with_updates(q_uf=0.5)
    queue, perf = evaluate(cfg, cached_table(cfg, cache_dir))
    assert row["t_aggregate"] == pytest.approx(perf.t_aggregate, rel=1e-12)
    assert row["d_total"] == pytest.approx(perf.d_total, rel=1e-12)
    assert row["q_bar"] == pytest.approx(queue.q_bar, rel=1e-12)
    assert row["regime"] == perf.regime


def test_sweep_rows_have_the_full_schema(cache_dir):
    spec = SweepSpec(base=tiny_config(), axes=(("q_u", (0.2, 0.5)),),
                     cache_dir=cache_dir)
    rows, _ = run_sweep(spec)
    for row in rows:
        assert tuple(row.keys()) == SWEEP_HEADER
    assert rows[0]["q_u"] == 0.2 and rows[1]["q_u"] == 0.5


def test_sweep_isolates_per_point_failures(cache_dir):
    spec = SweepSpec(base=tiny_config(),
                     axes=(("q_uf", (0.5, 1.5)),), cache_dir=cache_dir)
    rows, _ = run_sweep(spec)
    assert rows[0]["error"] == ""
    assert "q_uf" in rows[1]["error"]
    assert rows[1]["t_aggregate"] == ""


def test_sweep_tracks_the_broadcast_beamwidth_default(cache_dir):
    spec = SweepSpec(
        base=tiny_config(),
        axes=(("theta_rd", (math.radians(20.0), math.radians(50.0))),),
        cache_dir=cache_dir,
    )
    rows, _ = run_sweep(spec)
    for row in rows:
        assert row["theta_bw_b"] == pytest.approx(row["theta_rd"])


def test_parallel_sweep_matches_serial(cache_dir):
    base = tiny_config()
    axes = (("q_u", (0.2, 0.4)), ("q_uf", (0.3, 0.7)))
    serial, _ = run_sweep(SweepSpec(base=base, axes=axes, cache_dir=cache_dir))
    parallel, _ = run_sweep(SweepSpec(base=base, axes=axes, cache_dir=cache_dir,
                                      workers=2))
    assert serial == parallel


def test_sweep_with_simulation_fills_sim_columns(cache_dir):
    spec = SweepSpec(base=tiny_config(), axes=(("q_uf", (0.5,)),),
                     simulate=True, slots=5_000, cache_dir=cache_dir)
    (row,), _ = run_sweep(spec)
    assert row["source"] == "analysis+table-sim"
    assert 0.0 < row["sim_t"] <= 2.0
    assert row["sim_q_tx"] > 0.0


# ------------------------------------------------------------ entry point

def run_cli(*argv) -> int:
    return main(list(argv))


def test_analyze_command_emits_json(tmp_path, cache_dir):
    out = tmp_path / "report.json"
    code = run_cli("analyze", *TINY, "--cache-dir", cache_dir, "--out", str(out))
    assert code == 0
    payload = json.loads(out.read_text())
    assert set(payload) == {"queue", "performance"}
    assert payload["performance"]["regime"] in ("stable", "unstable",
                                                "near_instability")


def test_analyze_rejects_unknown_override(capsys, cache_dir):
    code = run_cli("analyze", "--set", "q_x=1", "--cache-dir", cache_dir)
    assert code == 2
    assert "configuration error" in capsys.readouterr().err


def test_build_table_writes_a_loadable_csv(tmp_path):
    out = tmp_path / "table.csv"
    code = run_cli("build-table", *TINY, "--out", str(out))
    assert code == 0
    table = SuccessTable.from_csv(out)
    assert table.n_ues == 2
    assert all(0.0 <= p <= 1.0 for p in table.probs.values())


def test_simulate_command_round_trips_json(tmp_path, cache_dir):
    out = tmp_path / "sim.json"
    trace = tmp_path / "trace.csv"
    code = run_cli("simulate", *TINY, "--cache-dir", cache_dir,
                   "--slots", "2000", "--out", str(out), "--trace", str(trace))
    assert code == 0
    payload = json.loads(out.read_text())
    assert payload["slots"] == 2000
    assert payload["mode"] == "table"
    assert len(payload["qsize_trajectory"]) > 0
    header = trace.read_text().splitlines()[0].split(",")
    assert header[:2] == ["slot", "queue_size"]
    assert "align_u0" in header and "strat_u1" in header


def test_simulate_physical_mode(tmp_path):
    out = tmp_path / "sim.json"
    code = run_cli("simulate", *TINY, "--mode", "physical",
                   "--slots", "2000", "--out", str(out))
    assert code == 0
    assert json.loads(out.read_text())["mode"] == "physical"


def test_sweep_command_writes_csvs(tmp_path, cache_dir):
    out = tmp_path / "grid.csv"
    ext = tmp_path / "ext.csv"
    code = run_cli("sweep", *TINY, "--cache-dir", cache_dir,
                   "--axis", "q_uf=0:1:3", "--objective", "throughput",
                   "--extremum", "max", "--out", str(out),
                   "--extremum-out", str(ext))
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0].split(",") == list(SWEEP_HEADER)
    assert len(lines) == 4
    ext_lines = ext.read_text().splitlines()
    assert len(ext_lines) == 2
    assert ext_lines[0].startswith("outer_name,outer_value,arg_name")


def test_validate_command_passes(capsys):
    assert run_cli("validate") == 0
    out = capsys.readouterr().out
    assert "all checks passed" in out
    assert "FAIL" not in out


def test_oracle_validation_matrix_is_clean():
    checks = _validate_matrix(seed=3, tol=1e-12)
    assert len(checks) == 12
    assert all(ok for _, _, ok in checks)
