import json
import os

import pytest

from ironclad import cli
from ironclad import config as cfgmod
from ironclad.errors import InvalidParameterError
from ironclad.simulator import SimConfig


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _rows(text):
    import csv

    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


@pytest.fixture(autouse=True)
def _outdir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path))
    monkeypatch.chdir(tmp_path)


# config


def test_build_params_rate_forms():
    a = cfgmod.build_params({"p_per_delta": 2, "rho": 0.1, "delta": 100, "q": 0, "theta": 1})
    b = cfgmod.build_params({"p": 0.02, "rho": 0.1, "delta": 100, "q": 0, "theta": 1})
    c = cfgmod.build_params({"p_total": 0.2, "rho": 0.1, "delta": 100, "q": 0, "theta": 1}, per_chain=10)
    assert a.p == pytest.approx(0.02) and b.p == 0.02 and c.p == 0.2
    assert cfgmod.build_params({"p_per_delta": 2, "rho": 0.1, "delta": 100, "q": 0, "theta": 1}, per_chain=10).p == pytest.approx(0.2)


@pytest.mark.parametrize(
    "section,field",
    [({"p": 0.1, "theta": 1}, "rho"), ({"p": 0.1, "rho": 0.1}, "theta"), ({"p": 0.1, "p_per_delta": 1, "rho": 0, "theta": 1}, "p"),
     ({"p": 0.1, "rho": 0.1, "theta": 1, "colour": 3}, "colour"), ({"p": "x", "rho": 0.1, "theta": 1}, "p"),
     ({"p": 0.1, "rho": 0.1, "theta": 1, "delta": 1.5}, "delta")],
)
def test_build_params_errors(section, field):
    with pytest.raises(InvalidParameterError) as exc:
        cfgmod.build_params(section)
    assert exc.value.field == field


def test_q_auto_resolves_to_numeric_optimum():
    from ironclad.analytics import optimal_q_numeric

    p = cfgmod.build_params({"p_per_delta": 1, "rho": 0.0, "theta": 500, "q": "auto"})
    assert p.q == optimal_q_numeric(1e-13, 10**13, 500.0)
    assert cfgmod.build_params({"p_per_delta": 1, "rho": 0.0, "theta": 1, "q": "auto"}).q == 0.0


def test_sim_config_roundtrip_ini_and_json():
    text = """
    [params]
    p_per_delta = 1.5   ; per chain
    rho = 0.2
    delta = 20
    q = 0.05
    theta = 10
    [sim]
    miners = 8
    horizon = 500
    chains = 2
    k_grid = 1, 3
    """
    text = "\n".join(ln.strip() for ln in text.splitlines())
    conf = cfgmod.build_sim_config(cfgmod.parse_config_text(text))
    assert conf.params.p == pytest.approx(2 * 1.5 / 20)
    assert conf.k_grid == (1, 3)
    for fmt in ("ini", "json"):
        dumped = cfgmod.dump_config(cfgmod.sim_config_sections(conf), fmt)
        again = cfgmod.build_sim_config(cfgmod.parse_config_text(dumped, fmt))
        assert again == conf


def test_unknown_sim_key_rejected():
    with pytest.raises(InvalidParameterError) as exc:
        cfgmod.build_sim_config({"params": {"p": 0.1, "rho": 0.1, "theta": 1, "q": 0}, "sim": {"minors": 5}})
    assert exc.value.field == "minors"


def test_presets():
    for name in cfgmod.PRESET_NAMES:
        preset = cfgmod.make_preset(name)
        assert len(set(preset.keys())) == len(preset.points)
    assert len(cfgmod.make_preset("single-adv").points) == 10
    assert len(cfgmod.make_preset("single-c").points) == 13
    par = cfgmod.make_preset("parallel-adv").points[0]
    assert par.chains == 10 and par.params.p * par.params.delta == pytest.approx(20.0)
    assert cfgmod.make_preset("single-adv-nakamoto").points[0].params.theta == 1.0
    assert cfgmod.make_preset("single-c-heavy").points[0].miners == 1000
    with pytest.raises(KeyError):
        cfgmod.make_preset("double-adv")


# analyze / threshold


def test_analyze_desk_example(capsys):
    code, out, _ = run(["analyze", "--p", "0.5", "--rho", "0", "--delta", "1", "--q", "0.5", "--theta", "2"], capsys)
    assert code == 0
    assert out.startswith("# schema: ironclad-analyze v1\n")
    row = _rows(out)[0]
    assert float(row["alpha"]) == pytest.approx(87 / 256, rel=1e-12)
    assert float(row["A"]) == pytest.approx(29 / 64, rel=1e-12)
    assert float(row["R"]) == pytest.approx(1.8125, rel=1e-12)


def test_analyze_q_zero_json(capsys):
    code, out, _ = run(["analyze", "--p-per-delta", "0.5", "--rho", "0.2", "--delta", "10", "--q", "0", "--theta", "1", "--format", "json"], capsys)
    assert code == 0
    row = json.loads(out)
    ph = 0.8 * 0.05
    assert row["alpha"] == pytest.approx(ph * (1 - ph) ** 20, rel=1e-12)


def test_analyze_missing_theta_is_usage_error(capsys):
    code, _, err = run(["analyze", "--p", "0.1", "--rho", "0.1", "--delta", "5", "--q", "0"], capsys)
    assert code == 2
    assert "theta" in err


def test_analyze_bad_rho_is_usage_error(capsys):
    code, _, err = run(["analyze", "--p", "0.1", "--rho", "1.2", "--delta", "5", "--q", "0", "--theta", "1"], capsys)
    assert code == 2 and "rho" in err


def test_threshold_curves_and_inverse(capsys):
    code, out, _ = run(["threshold", "--c-grid", "1", "--q", "0.02", "--theta", "500"], capsys)
    assert code == 0
    row = _rows(out)[0]
    assert float(row["rho_ironclad"]) == pytest.approx(0.4801549, abs=1e-6)
    assert float(row["rho_nakamoto"]) == pytest.approx(0.381966, abs=1e-6)
    code, out, _ = run(["threshold", "--inverse", "0.25"], capsys)
    assert code == 0 and float(_rows(out)[0]["p_per_delta"]) == pytest.approx(8 / 3)
    code, _, err = run(["threshold", "--inverse", "0.6"], capsys)
    assert code == 2


def test_threshold_default_grid(capsys):
    code, out, _ = run(["threshold", "--curve", "nakamoto"], capsys)
    assert code == 0
    assert len(_rows(out)) == 13


# simulate


SIM_ARGS = ["simulate", "--p-per-delta", "1", "--rho", "0.2", "--delta", "5", "--q", "0.1", "--theta", "10",
            "--miners", "8", "--horizon", "400", "--seed", "3"]


def test_simulate_appends_rows_under_env_dir(tmp_path, capsys):
    assert run(SIM_ARGS + ["--out", "m.csv"], capsys)[0] == 0
    assert run(SIM_ARGS + ["--out", "m.csv"], capsys)[0] == 0
    text = (tmp_path / "m.csv").read_text()
    assert text.count("# schema: ironclad-simulate v1") == 1
    rows = _rows(text)
    assert len(rows) == 2 and rows[0] == rows[1]
    assert list(rows[0]) == list(cli.SIM_COLUMNS)


def test_simulate_dump_config_roundtrip(tmp_path, capsys):
    code, dumped, _ = run(SIM_ARGS + ["--dump-config"], capsys)
    assert code == 0 and dumped.startswith("# schema: ironclad-config v1")
    (tmp_path / "c.ini").write_text(dumped)
    run(["simulate", "--config", "c.ini", "--out", "a.csv"], capsys)
    run(SIM_ARGS + ["--out", "b.csv"], capsys)
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()


def test_simulate_json_config(tmp_path, capsys):
    cfg = {"params": {"p_per_delta": 1, "rho": 0.2, "delta": 5, "q": 0.1, "theta": 10},
           "sim": {"miners": 8, "horizon": 400, "seed": 3}}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    run(["simulate", "--config", "c.json", "--out", "a.csv"], capsys)
    run(SIM_ARGS + ["--out", "b.csv"], capsys)
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()


def test_simulate_trace_and_missing_config(tmp_path, capsys):
    assert run(SIM_ARGS + ["--out", "m.csv", "--trace", "t.csv"], capsys)[0] == 0
    assert (tmp_path / "t.csv").exists()
    code, _, err = run(["simulate", "--config", "nope.ini"], capsys)
    assert code == 3


@pytest.mark.skipif(os.geteuid() == 0, reason="root ignores directory permissions")
def test_unwritable_output_is_io_error(tmp_path, capsys):
    ro = tmp_path / "ro"
    ro.mkdir()
    ro.chmod(0o500)
    try:
        assert run(SIM_ARGS + ["--out", str(ro / "m.csv")], capsys)[0] == 3
    finally:
        ro.chmod(0o700)


def test_output_path_under_a_file_is_io_error(tmp_path, capsys):
    (tmp_path / "blocker").write_text("x")
    code, _, err = run(SIM_ARGS + ["--out", "blocker/m.csv"], capsys)
    assert code == 3 and "cannot write" in err


# sweep


SWEEP = ["sweep", "--preset", "single-adv", "--miners", "6", "--horizon", "300", "--seed", "1"]


def test_sweep_resume_and_job_invariance(tmp_path, capsys):
    assert run(SWEEP + ["--out", "one.csv"], capsys)[0] == 0
    assert run(SWEEP + ["--out", "four.csv", "--jobs", "4"], capsys)[0] == 0
    full = (tmp_path / "one.csv").read_text()
    assert full == (tmp_path / "four.csv").read_text()
    rows = _rows(full)
    assert len(rows) == 10
    assert [r["key"] for r in rows] == cfgmod.make_preset("single-adv", seed=1, miners=6, horizon=300).keys()

    # drop some rows and resume: only the missing ones are recomputed
    lines = full.splitlines(keepends=True)
    (tmp_path / "part.csv").write_text("".join(lines[:5]))
    assert run(SWEEP + ["--out", "part.csv"], capsys)[0] == 0
    assert (tmp_path / "part.csv").read_text() == full


def test_sweep_resume_keeps_existing_rows(tmp_path, capsys):
    run(SWEEP + ["--out", "s.csv"], capsys)
    text = (tmp_path / "s.csv").read_text()
    lines = text.splitlines()
    # tamper with one stored metric; resuming must not recompute it
    first = lines[2].split(",")
    first[-2] = "123"
    lines[2] = ",".join(first)
    (tmp_path / "s.csv").write_text("\n".join(lines) + "\n")
    run(SWEEP + ["--out", "s.csv"], capsys)
    assert "123" in (tmp_path / "s.csv").read_text().splitlines()[2]
    run(SWEEP + ["--out", "s.csv", "--fresh"], capsys)
    assert (tmp_path / "s.csv").read_text() == text


def test_sweep_unknown_preset_and_dump(capsys):
    assert run(["sweep", "--preset", "bogus"], capsys)[0] == 2
    code, out, _ = run(["sweep", "--preset", "single-c", "--dump-config"], capsys)
    assert code == 0
    dumped = json.loads(out)
    assert len(dumped["points"]) == 13
    first = cfgmod.build_sim_config(dumped["points"][0])
    assert first == cfgmod.make_preset("single-c").points[0]


# walk


def test_walk_cli(tmp_path, capsys):
    code, out, _ = run(["walk", "--q", "0", "--q-tilde", "0", "--runs", "20000", "--seed", "2",
                        "--out-hist", "h.csv", "--out-summary", "s.csv"], capsys)
    assert code == 0
    row = _rows(out)[0]
    assert int(row["runs"]) == 20000
    assert float(row["mean"]) == pytest.approx(4.0, abs=0.3)
    assert (tmp_path / "h.csv").read_text().startswith("# schema: ironclad-walk-histogram v1\nlength,count")
    assert (tmp_path / "s.csv").read_text() == out


def test_walk_cli_auto_q_and_dump(tmp_path, capsys):
    from ironclad.analytics import optimal_q_numeric

    code, out, _ = run(["walk", "--q", "auto", "--q-tilde", "0.05", "--theta", "500", "--dump-config"], capsys)
    assert code == 0
    (tmp_path / "w.ini").write_text(out)
    conf = cfgmod.build_walk_config(cfgmod.load_config(tmp_path / "w.ini"))
    assert conf.q == optimal_q_numeric(1e-13, 10**13, 500.0)
    assert conf.q_tilde == 0.05


def test_walk_cli_errors(capsys):
    assert run(["walk", "--q-tilde", "0.1"], capsys)[0] == 2
    assert run(["walk", "--q", "0", "--q-tilde", "2"], capsys)[0] == 2


def test_walk_cli_censoring_warning(capsys):
    code, _, err = run(["walk", "--q", "0", "--q-tilde", "0", "--gamma", "1e-9", "--threshold", "50",
                        "--runs", "500", "--step-cap", "50"], capsys)
    assert code == 0 and "censored" in err


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "ironclad", "threshold", "--inverse", "0.25"], capture_output=True, text=True)
    assert res.returncode == 0 and "2.666" in res.stdout
