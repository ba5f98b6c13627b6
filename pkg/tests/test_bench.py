import textwrap

import pytest

from wavesurrogate import bench
from wavesurrogate.bench import ExperimentConfig, ResultRow, load_config, read_csv, speedup_percent, speedup_report
from wavesurrogate.cli import main

CONFIG = textwrap.dedent("""\
    [sweep]
    kind = k_sweep
    geometry = perturbed_annulus
    p = 2
    q = 3
    m = 20
    k = 2, 4   # two wave numbers
    M = 3

    [conv]
    kind = convergence
    geometry = quarter_annulus
    m = 12, 20
    k = 4
    sampling = helmholtz
    modes = standard

    [audit]
    kind = row_audit
    m = 256
    M = 10
""")


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.ini"
    path.write_text(CONFIG)
    return path


def test_load_config(config_file):
    cfgs = load_config(config_file)
    assert [c.name for c in cfgs] == ["sweep", "conv", "audit"]
    sweep = cfgs[0]
    assert sweep.kind == "k_sweep" and sweep.k == [2.0, 4.0] and sweep.M == 3
    assert sweep.surrogate_config().q == 3
    assert cfgs[1].modes == ("standard",)
    assert cfgs[2].cells() == [(256, 0.0)]


@pytest.mark.parametrize("body,msg", [
    ("kind = k_sweep\nm = 16\nk =\n", "empty k"),
    ("kind = k_sweep\nm =\nk = 1\n", "empty m"),
    ("kind = dance\nm = 16\nk = 1\n", "unknown kind"),
    ("kind = k_sweep\nm = 16\nk = 1\ncolour = red\n", "unknown keys"),
    ("kind = k_sweep\nm = 16\nk = 1\nrepeat = 0\n", "repeat"),
])
def test_invalid_configs(tmp_path, body, msg):
    path = tmp_path / "bad.ini"
    path.write_text("[x]\n" + body)
    with pytest.raises(ValueError, match=msg):
        load_config(path)


def test_k_sweep_cell_count():
    cfg = ExperimentConfig(name="ks", kind="k_sweep", geometry="perturbed_annulus", m=[256], k=[4, 8, 16, 32],
                           q=5, M=5)
    assert len(cfg.cells()) * len(cfg.modes) == 8


def test_speedup_examples():
    assert speedup_percent(1.0, 1.0) == 0.0
    assert speedup_percent(2.0, 1.0) == 100.0
    row = dict(experiment="e", m=8, p=2, q=3, k=1.0, M=0, H=0.0, dofs=64, solve_seconds=0.0, L2_rel=0.0,
               H1semi_rel=0.0, Hnorm_rel=0.0, consistency_Hnorm_rel=0.0, quadrature_row_fraction=1.0,
               residual=0.0)
    rows = [ResultRow(mode="standard", assembly_seconds=3.0, **row),
            ResultRow(mode="surrogate", assembly_seconds=1.0, **row)]
    assert speedup_report(rows) == {("e", 8, 1.0): 200.0}
    with pytest.raises(ValueError):
        speedup_report(rows[1:])


def test_slope():
    assert bench.slope([0.1, 0.05, 0.025], [1e-2, 2.5e-3, 6.25e-4]) == pytest.approx(2.0)


def test_run_writes_csv_and_summary(config_file, tmp_path):
    cfgs = load_config(config_file)
    rows, summary, ok = bench.run(cfgs, tmp_path / "out", threads=1)
    assert ok
    assert len(rows) == 4 + 2 + 1
    text = (tmp_path / "out" / "results.csv").read_text()
    assert text.startswith("#schema=1\n")
    assert text.splitlines()[1].split(",") == bench.COLUMNS
    back = read_csv(tmp_path / "out" / "results.csv")
    assert [r.L2_rel for r in back] == [r.L2_rel for r in rows]
    assert all(r.finite() for r in back)
    sur = [r for r in rows if r.experiment == "sweep" and r.mode == "surrogate"]
    assert all(0 < r.consistency_Hnorm_rel < 1 for r in sur)
    assert any("Hnorm slope" in line for line in summary)
    assert any("consistency max/min" in line for line in summary)
    assert (tmp_path / "out" / "summary.txt").read_text().strip()


def test_standard_errors_are_deterministic():
    cfg = ExperimentConfig(name="d", kind="convergence", m=[14], k=[3.0], modes=("standard",))
    a, _ = bench.run_cell(cfg, 14, 3.0)
    b, _ = bench.run_cell(cfg, 14, 3.0)
    for col in ("L2_rel", "H1semi_rel", "Hnorm_rel", "residual"):
        assert getattr(a[0], col) == getattr(b[0], col)


def test_failed_cell_is_recorded(tmp_path):
    # a zero residual tolerance cannot be met: the solver error lands in the row
    cfg = ExperimentConfig(name="f", kind="convergence", m=[10], k=[2.0], solver_tol=0.0)
    rows, summary, ok = bench.run([cfg], tmp_path, threads=1)
    assert not ok
    assert all("SolverError" in r.error for r in rows)
    assert any("FAILED" in line for line in summary)
    assert len(read_csv(tmp_path / "results.csv")) == 2


def test_read_csv_rejects_missing_schema(tmp_path):
    path = tmp_path / "r.csv"
    path.write_text("experiment,m\n")
    with pytest.raises(ValueError):
        read_csv(path)


def test_cli_audit(config_file, capsys):
    assert main(["audit", str(config_file)]) == 0
    out = capsys.readouterr().out
    assert "[audit] m=256 p=2 M=10: total=65536" in out
    assert "noncardinal=2032" in out


def test_cli_run(config_file, tmp_path, capsys):
    assert main(["run", str(config_file), "--out", str(tmp_path / "cli"), "--threads", "2"]) == 0
    assert "[sweep]" in capsys.readouterr().out
    assert (tmp_path / "cli" / "results.csv").exists()


def test_cli_bad_config(tmp_path, capsys):
    assert main(["audit", str(tmp_path / "missing.ini")]) == 2
    assert "error" in capsys.readouterr().err


def test_threads_env(monkeypatch):
    monkeypatch.setenv(bench.THREADS_ENV, "3")
    assert bench.default_threads() == 3
    monkeypatch.delenv(bench.THREADS_ENV)
    assert bench.default_threads() == 1
