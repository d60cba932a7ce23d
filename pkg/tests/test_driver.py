"""Driver: configuration, run outputs, determinism, post-processing, CLI."""

import json
import os

import numpy as np
import pytest

from rtdg.cli import main as cli_main
from rtdg.driver import (RunConfig, converge, cut, load_config, meshdump,
                         load_checkpoint, run)


def test_config_defaults_match_reference_settings():
    cfg = RunConfig()
    assert cfg.dt == 1e-3
    assert cfg.t_final == 0.1
    assert cfg.si_tol == 1e-12
    assert cfg.order_1d == 8
    assert (cfg.n_polar, cfg.n_azimuthal) == (8, 8)
    assert cfg.tau is None  # resolved per problem smoothness
    from rtdg.problems import catalog
    assert cfg.resolved_tau(catalog("ex1-1d")) == 0.1
    assert cfg.resolved_tau(catalog("ex7-1d")) == 0.01


def test_config_file_and_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("""
[problem]
name = ex1-1d

[discretization]
degree = 2
dt = 2e-3

[mesh]
n = 12
mode = moving

[mmpde]
tau = 0.05

[output]
directory = out
seed = 7
""")
    cfg = load_config(str(path), overrides=["mesh.n=24",
                                            "output.dump_metric=true"])
    assert cfg.problem == "ex1-1d"
    assert cfg.degree == 2 and cfg.dt == 2e-3
    assert cfg.n == 24 and cfg.mesh_mode == "moving"
    assert cfg.tau == 0.05 and cfg.dump_metric and cfg.seed == 7
    with pytest.raises(ValueError):
        load_config(str(path), overrides=["mesh.bogus=1"])
    bad = tmp_path / "bad.cfg"
    bad.write_text("[nosuch]\nkey = 1\n")
    with pytest.raises(ValueError):
        load_config(str(bad))


def test_fixed_mode_skips_mesh_movement(tmp_path):
    cfg = RunConfig(problem="ex1-1d", degree=1, n=10, t_final=5e-3,
                    outdir=str(tmp_path / "fx"))
    manifest = run(cfg)
    for d in manifest.diagnostics:
        assert "mmpde_substeps" not in d
    # trajectory rows are all identical for a fixed mesh
    rows = (tmp_path / "fx" / "mesh_trajectory.csv").read_text().splitlines()
    assert rows[0].startswith("t,x_1,")
    first = rows[1].split(",")[1:]
    last = rows[-1].split(",")[1:]
    assert first == last


def test_run_outputs_and_manifest(tmp_path):
    cfg = RunConfig(problem="ex1-1d", degree=2, n=10, t_final=5e-3,
                    mesh_mode="moving", init_adapt=1,
                    outdir=str(tmp_path / "mv"), checkpoint_every=2,
                    dump_metric=True, trace_energy=True)
    manifest = run(cfg)
    out = tmp_path / "mv"
    assert (out / "manifest.json").exists()
    data = json.loads((out / "manifest.json").read_text())
    assert data["config"]["problem"] == "ex1-1d"
    assert data["global_norms"]["L1"] > 0
    names = set(data["files"])
    assert "errors.csv" in names
    assert "errors_by_direction.csv" in names
    assert "mesh_trajectory.csv" in names
    assert "energy_trace.csv" in names
    assert any(n.startswith("metric_") for n in names)
    assert any(n.startswith("checkpoint_") and n.endswith(".vtk")
               for n in names)
    for d in data["diagnostics"]:
        assert d["si_iters"] <= 10
        assert d["min_measure"] > 0


def test_sequential_reruns_bit_identical(tmp_path):
    hashes = []
    for tag in ("a", "b"):
        cfg = RunConfig(problem="ex7-1d", degree=1, n=16, t_final=4e-3,
                        mesh_mode="moving", init_adapt=2,
                        outdir=str(tmp_path / tag))
        manifest = run(cfg)
        hashes.append(manifest.files)
    assert hashes[0] == hashes[1]


def test_converge_ladder_rows_and_slopes(tmp_path):
    cfg = RunConfig(problem="ex1-1d", t_final=5e-3,
                    outdir=str(tmp_path / "lad"))
    rows, slopes, failures = converge(cfg, degrees=[1], ns=[10, 20, 40],
                                      modes=["fixed"],
                                      csv_path=str(tmp_path / "l.csv"))
    assert not failures
    assert len(rows) == 3
    assert 1.7 < slopes[(1, "fixed", "L1")] < 2.3
    header = (tmp_path / "l.csv").read_text().splitlines()[0]
    assert header == ("problem,degree,mesh_mode,N,L1,L2,Linf,"
                      "order_L1,order_L2,cpu_seconds")
    assert np.isnan(rows[0]["order_L1"])
    assert rows[1]["order_L1"] == pytest.approx(
        np.log2(rows[0]["L1"] / rows[1]["L1"]), rel=1e-12)


def test_cut_constant_field(tmp_path):
    cfg = RunConfig(problem="freestream-2d", degree=1, n=4, t_final=2e-3,
                    outdir=str(tmp_path / "fs"), checkpoint_every=2)
    run(cfg)
    path = cut(str(tmp_path / "fs"), axis="y", value=0.495, direction=0,
               npoints=64)
    rows = np.loadtxt(path, delimiter=",", skiprows=1)
    assert np.abs(rows[:, 1] - 2.0).max() < 1e-9   # constant intensity
    assert np.abs(rows[:, 3] - 2.0).max() < 1e-12  # exact column
    # slope cut y = 0.8 x
    path2 = cut(str(tmp_path / "fs"), slope=0.8, direction=0, npoints=32)
    rows2 = np.loadtxt(path2, delimiter=",", skiprows=1)
    assert rows2.shape[0] == 32
    assert np.abs(rows2[:, 1] - 2.0).max() < 1e-9


def test_cut_outside_domain_rejected(tmp_path):
    cfg = RunConfig(problem="freestream-2d", degree=1, n=4, t_final=1e-3,
                    outdir=str(tmp_path / "fs2"), checkpoint_every=1)
    run(cfg)
    with pytest.raises(ValueError):
        cut(str(tmp_path / "fs2"), axis="y", value=1.7)


def test_meshdump_and_checkpoint_roundtrip(tmp_path):
    cfg = RunConfig(problem="ex1-1d", degree=2, n=8, t_final=2e-3,
                    outdir=str(tmp_path / "ck"), checkpoint_every=1)
    run(cfg)
    field, quad = load_checkpoint(str(tmp_path / "ck"), step=1)
    assert field.time == pytest.approx(1e-3)
    assert quad.count == 8
    path = meshdump(str(tmp_path / "ck"), step=2)
    assert os.path.exists(path)


def test_cli_run_and_cut(tmp_path, capsys):
    out = str(tmp_path / "cli")
    rc = cli_main(["run",
                   "--override", "problem.name=freestream-1d",
                   "--override", "mesh.n=8",
                   "--override", "discretization.t_final=0.002",
                   "--override", f"output.directory={out}"])
    assert rc == 0
    captured = capsys.readouterr().out
    assert "global norms" in captured
    rc = cli_main(["meshdump", "--run", out])
    assert rc == 0
    rc = cli_main(["cut", "--run", out, "--direction", "2"])
    assert rc == 0


def test_unknown_mesh_mode_rejected(tmp_path):
    cfg = RunConfig(problem="ex1-1d", mesh_mode="wobbly", n=4,
                    t_final=1e-3, outdir=str(tmp_path / "x"))
    with pytest.raises(ValueError):
        run(cfg)


def test_custom_problem_from_config(tmp_path):
    ic = tmp_path / "ic.csv"
    ic.write_text("x,value\n0.0,2.0\n1.0,2.0\n")
    bc = tmp_path / "bc.csv"
    bc.write_text("t,side,value\n0.0,0,2.0\n1.0,0,2.0\n0.0,1,2.0\n1.0,1,2.0\n")
    cfgf = tmp_path / "custom.cfg"
    cfgf.write_text(f"""
[problem]
name = custom
dim = 1
domain = 0 1
sigma_t = 2.0
sigma_s = 1.0
q = 2.0
ic_csv = {ic}
bc_csv = {bc}

[mesh]
n = 8

[discretization]
degree = 1
t_final = 0.003

[output]
directory = {tmp_path}/out
""")
    cfg = load_config(str(cfgf))
    manifest = run(cfg)
    # constant-equilibrium data: the solution stays at 2 (free-stream)
    field, _ = load_checkpoint(str(tmp_path / "out"))
    assert np.abs(field.coeffs[:, :, 0] - 2.0).max() < 1e-9
    assert np.abs(field.coeffs[:, :, 1:]).max() < 1e-9
