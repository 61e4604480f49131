import json
import math

import numpy as np
import pytest

from bilinrs.errors import ConfigError
from bilinrs.sim import (
    CONFIG_KEYS,
    PROFILES,
    RateReport,
    TrialRecord,
    aggregate,
    build_config,
    csv_header,
    emit_report,
    parse_config,
    parse_values,
    read_json,
    run_sweep,
    run_trial,
    trial_streams,
    write_csv,
)

TINY = {"M": 6, "K": 2, "T_dl": 2, "n_iter": 2, "p_dl_db": (0.0, 20.0), "N_path": 2, "N_rays": 4}


def test_profiles():
    paper = build_config({}, "paper")
    assert (paper.scenario.M, paper.scenario.K, paper.T_dl, paper.n_iter) == (64, 5, 8, 300)
    assert paper.p_dl_db == tuple(float(x) for x in range(0, 41, 5))
    desk = build_config({}, "desk")
    assert (desk.scenario.M, desk.scenario.K, desk.T_dl, desk.n_iter) == (16, 3, 4, 50)
    assert set(PROFILES) == {"paper", "desk"}
    with pytest.raises(ConfigError):
        build_config({}, "laptop")


def test_parse_values_and_file(tmp_path):
    text = "# comment\nM = 8\nK=2  # users\np_dl_db = 0, 10\nmethods = bilinear_rs\nfixed_geometry = yes\nprivate_tol = 1e-6\n"
    values = parse_values(text)
    assert values == {"M": 8, "K": 2, "p_dl_db": (0.0, 10.0), "methods": ("bilinear_rs",),
                      "fixed_geometry": True, "private_tol": 1e-6}
    path = tmp_path / "run.cfg"
    path.write_text(text + "T_dl = 4\n")
    cfg = parse_config(path, {"seed": 9})
    assert cfg.scenario.M == 8 and cfg.scenario.seed == 9 and cfg.T_dl == 4
    assert cfg.tolerances.private_tol == 1e-6
    assert "common_u_min" in CONFIG_KEYS


@pytest.mark.parametrize("text, fragment", [
    ("M 8", ":1: expected key=value"),
    ("\nbogus = 1", ":2: unknown key"),
    ("M = eight", "bad value for 'M'"),
    ("fixed_geometry = maybe", "bad value"),
])
def test_parse_errors_name_the_line(tmp_path, text, fragment):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    with pytest.raises(ConfigError, match=fragment):
        parse_config(path)


@pytest.mark.parametrize("values", [
    {"T_dl": 64}, {"T_ch": 2}, {"p_dl_db": ()}, {"n_iter": 0}, {"methods": ("zf",)}, {"K": 0},
])
def test_invariants(values):
    with pytest.raises(ConfigError):
        parse_config(None, values)


def test_streams_are_independent_and_reproducible():
    a = [g.random() for g in trial_streams(1, 3)]
    b = [g.random() for g in trial_streams(1, 3)]
    assert a == b and len(set(a)) == 3
    other = [g.random() for g in trial_streams(1, 4)]
    assert all(x != y for x, y in zip(a, other))
    fixed = [trial_streams(1, t, fixed_geometry=True)[0].random() for t in (0, 5)]
    assert fixed[0] == fixed[1]


def test_run_trial_covers_all_methods():
    cfg = parse_config(None, TINY)
    out = run_trial(cfg, 0)
    assert set(out) == {(m, db) for m in cfg.methods for db in cfg.p_dl_db}
    for (m, db), rec in out.items():
        assert rec is not None and np.isfinite(rec.sum_rate)
        assert len(rec.user_rates) == 2
        if m.startswith("bilinear"):
            assert rec.lb is not None and 0.0 <= rec.alpha_c <= 1.0
        if m.endswith("nors"):
            assert rec.common_rate == 0.0
    # without rate splitting the common fraction is zero, and both methods share the alpha_c = 0 start
    assert out[("bilinear_nors", 0.0)].alpha_c == 0.0


def test_aggregate_by_hand():
    cfg = parse_config(None, {**TINY, "methods": ("bilinear_rs",), "p_dl_db": (0.0,)})
    recs = [TrialRecord(1.0, 0.5, 0.2, 0.1, [0.4, 0.5]), TrialRecord(3.0, 1.5, 0.4, 0.3, [1.2, 1.5]), None]
    report = aggregate(cfg, [{("bilinear_rs", 0.0): r} for r in recs])
    p = report.point("bilinear_rs", 0.0)
    assert p.mean_sum_rate == 2.0 and p.mean_lb == 1.0
    assert p.alpha_c == pytest.approx(0.3) and p.common_rate == pytest.approx(0.2)
    assert p.user_rates == pytest.approx([0.8, 1.0])
    assert p.stderr == pytest.approx(math.sqrt(2.0 / 2))
    assert (p.trials, p.failed) == (2, 1) and report.failed == 1
    assert p.samples == [1.0, 3.0, None]
    with pytest.raises(KeyError):
        report.point("iwmmse_rs", 0.0)


def test_all_failed_point_is_nan():
    cfg = parse_config(None, {**TINY, "methods": ("iwmmse_rs",), "p_dl_db": (0.0,)})
    p = aggregate(cfg, [{("iwmmse_rs", 0.0): None}]).points[0]
    assert math.isnan(p.mean_sum_rate) and p.failed == 1 and p.trials == 0


def test_outputs(tmp_path):
    cfg = parse_config(None, TINY)
    report = run_sweep(cfg)
    paths = emit_report(report, tmp_path / "out")
    names = sorted(p.split("/")[-1] for p in paths)
    assert names == sorted(["rates.csv", "rates.json", "bilinear_rs.dat", "bilinear_rs_lb.dat",
                            "bilinear_nors.dat", "bilinear_nors_lb.dat", "iwmmse_rs.dat", "iwmmse_nors.dat"])
    lines = (tmp_path / "out" / "rates.csv").read_text().splitlines()
    assert lines[0] == "method,P_dl_dB,mean_sum_rate,stderr,mean_lb,alpha_c,common_rate,user_1,user_2"
    assert len(lines) == 1 + 4 * 2
    iw = [ln for ln in lines if ln.startswith("iwmmse_rs")][0].split(",")
    assert iw[4] == "" and iw[5] == ""
    doc = json.loads((tmp_path / "out" / "rates.json").read_text())
    assert {"config", "points", "version", "git", "created"} <= set(doc)
    again = read_json(tmp_path / "out" / "rates.json")
    assert isinstance(again, RateReport)
    assert again.point("bilinear_rs", 20.0).mean_sum_rate == report.point("bilinear_rs", 20.0).mean_sum_rate
    dat = (tmp_path / "out" / "bilinear_rs.dat").read_text().splitlines()
    assert dat[0] == "# P_dl_dB bilinear_rs" and len(dat) == 3
    assert csv_header(3)[-1] == "user_3"


def test_csv_is_reproducible(tmp_path):
    cfg = parse_config(None, {**TINY, "methods": ("bilinear_rs", "iwmmse_nors")})
    write_csv(run_sweep(cfg), tmp_path / "a.csv")
    write_csv(run_sweep(cfg), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_emit_report_reports_unwritable_directory(tmp_path):
    cfg = parse_config(None, {**TINY, "methods": ("iwmmse_nors",), "n_iter": 1})
    blocker = tmp_path / "file"
    blocker.write_text("")
    with pytest.raises(OSError, match="cannot write report"):
        emit_report(run_sweep(cfg), blocker / "sub")
