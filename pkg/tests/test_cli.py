import json
from pathlib import Path

import numpy as np

from oflux import fieldio
from oflux.cli import main
from oflux.reports import canonical_json, config_hash
from oflux.synth import taylor_green

from conftest import TWO_PI, channel_domain


def _read_all_bytes(directory):
    out = {}
    for p in sorted(Path(directory).rglob("*")):
        if p.is_file():
            out[str(p.relative_to(directory))] = p.read_bytes()
    return out


def test_gen_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["gen", "--kind", "fractional", "--alpha", "0.4", "--seed", "7", "--grid", "64x64"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert _read_all_bytes(a) == _read_all_bytes(b)


def test_gen_taylor_green_matches_oracle(tmp_path):
    out = tmp_path / "tg"
    assert main(["gen", "--kind", "taylor-green", "--nu", "0.01", "--t", "0.5",
                 "--grid", "64x64", "--out", str(out)]) == 0
    snap = fieldio.read_snapshot(out / "field.oflx")
    oracle = taylor_green(snap.grid, 0.5, 0.01)
    assert np.array_equal(snap.velocity, oracle.velocity)
    assert snap.pressure is not None


def test_gen_invalid_alpha_exit_code(tmp_path, capsys):
    code = main(["gen", "--kind", "fractional", "--alpha", "1.4", "--grid", "64x64",
                 "--out", str(tmp_path)])
    assert code == 3
    assert "alpha" in capsys.readouterr().err


def test_gen_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kind": "taylor-green", "bogus": 1}))
    code = main(["gen", "--config", str(cfg), "--out", str(tmp_path / "o")])
    assert code == 3
    assert "gen.bogus" in capsys.readouterr().err


def test_config_roundtrip_bytes(tmp_path):
    # parse -> canonical serialize is byte-stable
    cfg = {"kind": "fractional", "alpha": 0.4, "seed": 7, "grid": "64x64"}
    text = canonical_json(cfg)
    again = canonical_json(json.loads(text))
    assert text == again
    out = tmp_path / "o"
    main(["gen", "--config", _write(tmp_path, cfg), "--out", str(out)])
    echoed = json.loads((out / "config.json").read_text())
    assert config_hash(echoed) == json.loads((out / "manifest.json").read_text())["config_sha256"]


def _write(tmp_path, cfg):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    return str(p)


def test_diagnose_smooth_field(tmp_path):
    gen_out = tmp_path / "g"
    main(["gen", "--kind", "fractional", "--alpha", "0.5", "--cutoff", "2", "--seed", "3",
          "--grid", "128x128", "--out", str(gen_out)])
    diag_out = tmp_path / "d"
    code = main(["diagnose", "--in", str(gen_out / "field.oflx"), "--out", str(diag_out)])
    assert code == 0
    summary = json.loads((diag_out / "summary.json").read_text())
    flux_fit = next(f for f in summary["fits"] if f["quantity"] == "flux")
    assert flux_fit["slope"] >= 1.8
    assert (diag_out / "scaling.csv").exists()


def test_diagnose_zero_field(tmp_path):
    from oflux.grids import Snapshot, make_grid

    g = make_grid((64, 64), (TWO_PI, TWO_PI))
    z = Snapshot(g, np.zeros((2, *g.dims)))
    fieldio.write_snapshot(tmp_path / "z.oflx", z)
    code = main(["diagnose", "--in", str(tmp_path / "z.oflx"), "--out", str(tmp_path / "dz")])
    assert code == 0
    summary = json.loads((tmp_path / "dz" / "summary.json").read_text())
    assert summary["verdict"].startswith("degenerate")


def test_diagnose_under_resolved_ladder(tmp_path, capsys):
    gen_out = tmp_path / "g"
    main(["gen", "--kind", "fractional", "--alpha", "0.5", "--seed", "1",
          "--grid", "64x64", "--out", str(gen_out)])
    code = main(["diagnose", "--in", str(gen_out / "field.oflx"),
                 "--out", str(tmp_path / "d"), "--epsilons", "0.4,0.3,0.2,0.01"])
    assert code == 3
    assert "admissible ladder" in capsys.readouterr().err


def test_boundary_command_steady_and_leak(tmp_path):
    dom = channel_domain(128, 129)
    _, y = dom.grid.meshes()
    prof = np.sin(np.pi * y) ** 2
    from oflux.grids import Snapshot, Trajectory

    u = np.stack([np.broadcast_to(prof, dom.grid.dims).copy(), np.zeros(dom.grid.dims)])
    p = np.zeros(dom.grid.dims)
    traj = Trajectory(tuple(Snapshot(dom.grid, u, p, 0.1 * i) for i in range(3)), 0.1)
    tdir = tmp_path / "steady"
    fieldio.write_trajectory(tdir, traj)
    code = main(["boundary", "--in", str(tdir), "--out", str(tmp_path / "bs")])
    assert code == 0
    verdict = json.loads((tmp_path / "bs" / "verdict.json").read_text())
    assert verdict["verdict"]["exit_code"] == 0

    d = dom.distance_field()
    sgn = dom.normal_sign_field()
    leak = np.where(d < 0.3, 0.1 * sgn, 0.0)
    u2 = np.stack([np.broadcast_to(prof, dom.grid.dims).copy(), leak])
    p2 = np.ones(dom.grid.dims)
    traj2 = Trajectory(tuple(Snapshot(dom.grid, u2, p2, 0.1 * i) for i in range(3)), 0.1)
    tdir2 = tmp_path / "leak"
    fieldio.write_trajectory(tdir2, traj2)
    code2 = main(["boundary", "--in", str(tdir2), "--out", str(tmp_path / "bl")])
    assert code2 == 3


def test_sweep_reproducible_bytes(tmp_path):
    cfg = {
        "geometry": "periodic",
        "grid": "64x64",
        "initial": {"kind": "taylor-green", "nu": 0.01},
        "nus": [1e-2, 3e-3],
        "dt": 0.01,
        "t_end": 0.1,
        "t_star": 0.1,
        "snapshot_stride": 5,
    }
    outs = []
    for tag in ("s1", "s2"):
        out = tmp_path / tag
        assert main(["sweep", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
        outs.append(_read_all_bytes(out))
    assert outs[0] == outs[1]
    names = set(outs[0])
    assert "dissipation.csv" in names and "verdict.json" in names
    assert any(n.startswith("series_nu") for n in names)


def test_report_command(tmp_path, capsys):
    gen_out = tmp_path / "g"
    main(["gen", "--kind", "taylor-green", "--grid", "64x64", "--out", str(gen_out)])
    code = main(["report", "--in", str(gen_out)])
    assert code == 0
    assert "oflux" in capsys.readouterr().out


def test_report_detects_tampered_config(tmp_path):
    gen_out = tmp_path / "g"
    main(["gen", "--kind", "taylor-green", "--grid", "64x64", "--out", str(gen_out)])
    cfg_path = gen_out / "config.json"
    payload = json.loads(cfg_path.read_text())
    payload["t"] = 9.9
    cfg_path.write_text(canonical_json(payload))
    assert main(["report", "--in", str(gen_out)]) == 3


def test_output_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("OFLUX_OUTPUT_DIR", str(tmp_path / "envout"))
    code = main(["gen", "--kind", "taylor-green", "--grid", "64x64"])
    assert code == 0
    assert (tmp_path / "envout" / "field.oflx").exists()


def test_diagnose_trajectory_runs_dr_sweep(tmp_path):
    from oflux.grids import Snapshot, Trajectory, make_grid
    from oflux.pressure import solve_pressure_periodic
    from oflux.synth import fractional_field

    g = make_grid((64, 64), (TWO_PI, TWO_PI))
    f = fractional_field(0.6, None, 2, g)
    p = solve_pressure_periodic(f).pressure
    traj = Trajectory(tuple(Snapshot(g, f.velocity, p, 0.1 * i) for i in range(3)), 0.1)
    tdir = tmp_path / "traj"
    fieldio.write_trajectory(tdir, traj)
    out = tmp_path / "diag"
    code = main(["diagnose", "--in", str(tdir), "--out", str(out)])
    assert code in (0, 2)
    summary = json.loads((out / "summary.json").read_text())
    assert "dr_sweep" in summary
    assert (out / "dr_sweep.csv").exists()
