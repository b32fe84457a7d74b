import math
import subprocess
import sys

import numpy as np
import pytest

from authsim import cli, pla
from authsim.harness import (COLUMNS, ConfigError, ResultRow, ResultTable, load_config, read_csv,
                             run_experiment, sweep_threshold, to_csv, write_csv)
from authsim.harness.config import parse_grid

PLA = """
[experiment]
trials = 3000
seed = 5
[scenario]
M = 2
[pla]
theta = 1.1
"""

AKBA = """
[experiment]
trials = 2000
[scenario]
M = 1
sigma_E = 0.3
[akba]
levels = 4
"""

SKBA = """
[experiment]
trials = 3000
[scenario]
M = 1
[skba]
codebook = lattice
step = 1.0
static_handshake = true
"""


def test_minimal_config_defaults():
    cfg = load_config("[pla]\n")
    assert cfg.scheme == "pla" and cfg.trials == 10_000 and cfg.seed == 0
    assert cfg.scenario.M == 2 and cfg.scenario.alpha == 0.9
    assert cfg.block.theta == 1.0 and cfg.block.t == 3 and cfg.block.variance_mode == "exact"
    assert str(cfg.scenario.schedule) == "BAB"


def test_config_error_names_key():
    with pytest.raises(ConfigError) as exc:
        load_config("[scenario]\nalpha = 1.5\n[pla]\n")
    assert any("alpha" in e for e in exc.value.errors)


@pytest.mark.parametrize("text,needle", [
    ("[pla]\n[skba]\n", "exactly one"),
    ("[scenario]\nM = 2\n", "required"),
    ("[pla]\nbogus = 1\n", "pla.bogus"),
    ("[extra]\n[pla]\n", "extra"),
    ("[experiment]\ntrials = 0\n[pla]\n", "experiment.trials"),
    ("[pla]\ntheta = -1\n", "pla.theta"),
    ("[akba]\nhash = nope\n", "akba.hash"),
    ("[scenario]\nschedule = AAB\n[pla]\n", "scenario.schedule"),
    ("[pla]\n[sweep]\nparam = theta\n", "sweep.grid"),
    ("[pla]\n[sweep]\nparam = levels\ngrid = 1:2:2\n", "sweep.param"),
    ("[pla]\n[sweep]\nparam = theta\ngrid = 1:2\n", "sweep.grid"),
    ("[skba]\ncodebook = lattice\nattacks = 3\n", "skba.attacks"),
    ("not an ini", "syntax"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError) as exc:
        load_config(text)
    assert any(needle in e for e in exc.value.errors), exc.value.errors


def test_config_collects_every_error():
    with pytest.raises(ConfigError) as exc:
        load_config("[scenario]\nalpha = 2\nbeta1 = -1\n[pla]\nt = 1\n")
    assert len(exc.value.errors) == 3


def test_parse_grid():
    assert parse_grid("0:1:3") == (0.0, 0.5, 1.0)
    with pytest.raises(ValueError):
        parse_grid("0:1:0")


def test_with_value_rederives_schedule():
    cfg = load_config(PLA).with_value("t", 5)
    assert str(cfg.scenario.schedule) == "BABAB"
    with pytest.raises(ConfigError):
        load_config(PLA).with_value("alpha", 3.0)


# --- CSV ------------------------------------------------------------------------

def test_csv_empty_and_round_trip(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(ResultTable(), path)
    assert path.read_text() == ",".join(COLUMNS) + "\n"
    rows = [ResultRow(0.5, 0.1, 0.05, 0.2, 0.3, 0.2, 0.4, 0.12, None, 100, 7),
            ResultRow(1.0, 1 / 3, 0.2, 0.5, 0.0, 0.0, 0.01, None, 0.001, 100, 7)]
    write_csv(ResultTable("theta", rows), path)
    back = read_csv(path)
    for a, b in zip(rows, back.rows):
        for c in COLUMNS:
            va, vb = getattr(a, c), getattr(b, c)
            assert (va is None and vb is None) or float(vb) == pytest.approx(va, rel=1e-9)
    text = path.read_text().splitlines()[2]
    assert text.startswith("1,0.3333333333,")


def test_csv_locale_independent(tmp_path, monkeypatch):
    import locale
    for loc in ("de_DE.UTF-8", "fr_FR.UTF-8"):
        try:
            locale.setlocale(locale.LC_NUMERIC, loc)
            break
        except locale.Error:
            continue
    try:
        text = to_csv(ResultTable(rows=[ResultRow(0.5, 0.25, 0.1, 0.4, 0.5, 0.4, 0.6, None, None, 4, 1)]))
    finally:
        locale.setlocale(locale.LC_NUMERIC, "C")
    assert "0.25" in text and "0,25" not in text


# --- runner ------------------------------------------------------------------------

def check_table(table):
    for r in table.rows:
        for p, lo, hi in ((r.fa, r.fa_lo, r.fa_hi), (r.md, r.md_lo, r.md_hi)):
            assert 0.0 <= lo <= p <= hi <= 1.0


def test_run_pla_and_analytic():
    table = run_experiment(load_config(PLA))
    check_table(table)
    (row,) = table.rows
    assert row.fa_analytic == pytest.approx(pla.fa_probability(1.1, 4))
    assert abs(row.fa - row.fa_analytic) < 3 * math.sqrt(row.fa_analytic * (1 - row.fa_analytic) / 3000) + 1e-9
    assert row.md_analytic is not None


def test_run_akba_and_skba():
    a = run_experiment(load_config(AKBA))
    check_table(a)
    assert a.rows[0].fa == 0.0 and a.rows[0].fa_analytic == 0.0 and a.rows[0].md_analytic is None
    s = run_experiment(load_config(SKBA))
    check_table(s)
    assert s.rows[0].fa_analytic is not None


def test_threshold_sweep_monotone_and_single_point():
    cfg = load_config(PLA)
    grid = list(np.linspace(0.2, 3.0, 12))
    t = sweep_threshold(cfg, grid)
    fa = [r.fa for r in t.rows]
    md = [r.md for r in t.rows]
    assert fa == sorted(fa, reverse=True) and md == sorted(md)
    single = sweep_threshold(cfg, [1.1])
    assert to_csv(single) == to_csv(run_experiment(cfg))
    with pytest.raises(ValueError):
        sweep_threshold(cfg, [2.0, 1.0])


def test_scenario_sweep():
    cfg = load_config(PLA + "[sweep]\nparam = alpha\ngrid = 0.5:0.9:3\n")
    t = run_experiment(cfg)
    assert t.param_name == "alpha" and [r.param for r in t.rows] == [0.5, 0.7, 0.9]


def test_trials_one():
    t = run_experiment(load_config(PLA).with_overrides(trials=1))
    r = t.rows[0]
    assert r.trials == 1
    assert r.fa_hi - r.fa_lo > 0.75  # a single trial says almost nothing


def test_numerical_failure_row():
    cfg = load_config("[experiment]\ntrials=10\n[scenario]\nalpha = 1.0\nsigma_A = 0.0\n[pla]\n")
    t = run_experiment(cfg)
    assert t.failed and t.rows[0].fa is None
    assert "fa_analytic" in to_csv(t).splitlines()[0]


def test_determinism_across_workers():
    cfg = load_config(SKBA)
    assert to_csv(run_experiment(cfg, workers=1)) == to_csv(run_experiment(cfg, workers=2))


# --- CLI ---------------------------------------------------------------------------

def test_cli_run_stdout(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text(PLA)
    assert cli.main(["run", str(cfg), "--trials", "500", "--seed", "3"]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out[0] == ",".join(COLUMNS)
    assert out[1].endswith(",500,3")


def test_cli_sweep_to_file(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(PLA)
    out = tmp_path / "o.csv"
    assert cli.main(["sweep", str(cfg), "--param", "theta", "--grid", "0.5:2:4", "--out", str(out)]) == 0
    assert len(read_csv(out).rows) == 4


def test_cli_exit_codes(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[scenario]\nalpha = 7\n[pla]\n")
    assert cli.main(["run", str(bad)]) == 2
    assert cli.main(["run", str(tmp_path / "missing.ini")]) == 2
    deg = tmp_path / "deg.ini"
    deg.write_text("[experiment]\ntrials=10\n[scenario]\nalpha = 1.0\nsigma_A = 0.0\n[pla]\n")
    assert cli.main(["run", str(deg)]) == 3
    ok = tmp_path / "ok.ini"
    ok.write_text(PLA)
    assert cli.main(["sweep", str(ok), "--param", "nope", "--grid", "0:1:2"]) == 2


def test_console_entry_point(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text(PLA)
    res = subprocess.run([sys.executable, "-m", "authsim", "run", str(cfg), "--trials", "200"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("param,fa,")
