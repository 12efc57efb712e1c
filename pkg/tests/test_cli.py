import json
import sys

import numpy as np
import pytest

from lpr.cli import main
from lpr.io import read_lprf, read_lprf_complex, write_png


def _write_cfg(tmp_path, name="cfg.json", **over):
    cfg = {
        "modality": "cdp",
        "shape": [32, 32],
        "model": {"n_masks": 2, "mask_seed": 11},
        "ground_truth": {"kind": "phantom", "seed": 7},
        "snr_db": [15.0],
        "noise_seed": 5,
        "algorithms": [{"name": "ap", "max_iters": 30}],
        "timing": "none",
    }
    cfg.update(over)
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def test_missing_config_exits_2(tmp_path, capsys):
    rc = main(["bench", "--config", str(tmp_path / "nope.json"),
               "--out", str(tmp_path / "o")])
    assert rc == 2
    assert "config" in capsys.readouterr().err


def test_malformed_config_exits_2(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{oops")
    assert main(["bench", "--config", str(p), "--out", str(tmp_path / "o")]) == 2


def test_unknown_algorithm_exits_2(tmp_path):
    cfg = _write_cfg(tmp_path, algorithms=[{"name": "lifting"}])
    assert main(["bench", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_bad_tile_argument_exits_2(tmp_path):
    cfg = _write_cfg(tmp_path)
    with pytest.raises(SystemExit) as e:
        main(["bench", "--config", cfg, "--out", str(tmp_path / "o"),
              "--tile", "512"])
    assert e.value.code == 2


def test_simulate_writes_stacks(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, snr_db=[10.0, 20.0])
    out = tmp_path / "sim"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
    clean = read_lprf(out / "measurements.lprf")
    assert clean.shape == (2, 32, 32)
    assert (clean >= 0).all()
    noisy = read_lprf(out / "measurements_snr10.lprf")
    assert noisy.shape == (2, 32, 32)
    assert not np.allclose(noisy, clean)
    truth = read_lprf_complex(out / "truth.lprf")
    assert truth.shape == (1, 32, 32)
    manifest = json.loads((out / "manifest.json").read_text())
    assert "noise_seeds" in manifest


def test_seed_override_changes_noise(tmp_path):
    cfg = _write_cfg(tmp_path)
    a, b, c = (tmp_path / x for x in "abc")
    main(["simulate", "--config", cfg, "--out", str(a)])
    main(["simulate", "--config", cfg, "--out", str(b), "--seed", "99"])
    main(["simulate", "--config", cfg, "--out", str(c), "--seed", "99"])
    na = read_lprf(a / "measurements_snr15.lprf")
    nb = read_lprf(b / "measurements_snr15.lprf")
    nc = read_lprf(c / "measurements_snr15.lprf")
    assert not np.allclose(na, nb)
    assert np.array_equal(nb, nc)


def test_reconstruct_from_simulated_stack(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, algorithms=[
        {"name": "lpr", "outer_max": 5, "warmstart_iters": 5,
         "schedule": {"kind": "constant", "scale": 2.0}}])
    sim = tmp_path / "sim"
    main(["simulate", "--config", cfg, "--out", str(sim)])
    out = tmp_path / "rec"
    rc = main(["reconstruct", "--config", cfg, "--out", str(out),
               "--measurements", str(sim / "measurements_snr15.lprf")])
    assert rc == 0
    rec = read_lprf_complex(out / "recon.lprf")
    assert rec.shape == (1, 32, 32)
    report = json.loads((out / "report.json").read_text())
    assert report["algorithm"] == "lpr"
    assert (out / "recon_amp.png").exists()
    assert (out / "recon_phase.png").exists()


def test_reconstruct_synthesizes_when_no_input(tmp_path):
    cfg = _write_cfg(tmp_path)
    out = tmp_path / "rec"
    assert main(["reconstruct", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "recon.lprf").exists()


def test_reconstruct_solver_failure_exits_3(tmp_path, capsys):
    # an external enhancer that always fails takes the solver down with it
    cfg = _write_cfg(tmp_path, algorithms=[
        {"name": "lpr", "outer_max": 2, "warmstart_iters": 2,
         "enhancer": {"kind": "external", "command": "/bin/false"}}])
    rc = main(["reconstruct", "--config", cfg, "--out", str(tmp_path / "o")])
    assert rc == 3
    assert "solver failed" in capsys.readouterr().err


def test_reconstruct_unknown_algorithm_label_exits_2(tmp_path):
    cfg = _write_cfg(tmp_path)
    rc = main(["reconstruct", "--config", cfg, "--out", str(tmp_path / "o"),
               "--algorithm", "wf9000"])
    assert rc == 2


def test_bench_writes_csv(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, snr_db=[10.0, 15.0])
    out = tmp_path / "bench"
    assert main(["bench", "--config", cfg, "--out", str(out)]) == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0] == "algorithm,snr_db,psnr_db,ssim,wall_seconds,iterations,converged,status"
    assert len(lines) == 3


def test_bench_threads_flag(tmp_path):
    cfg = _write_cfg(tmp_path, snr_db=[10.0, 15.0])
    out = tmp_path / "bench"
    assert main(["bench", "--config", cfg, "--out", str(out),
                 "--threads", "2"]) == 0
    assert (out / "results.csv").exists()


def test_bench_tile_runs_streamed(tmp_path):
    cfg = _write_cfg(tmp_path, shape=[64, 64], channels=2,
                     model={"n_masks": 2, "mask_seed": 11},
                     algorithms=[{"name": "lpr", "outer_max": 2,
                                  "inner_ap_iters": 1, "warmstart_iters": 2}])
    out = tmp_path / "tiled"
    assert main(["bench", "--config", cfg, "--out", str(out),
                 "--tile", "32x32"]) == 0
    info = json.loads((out / "tiled_run.json").read_text())
    assert info["channels"] == 2
    assert (out / "recon_c1.lprf").exists()


def test_metrics_subcommand(tmp_path, capsys):
    rng = np.random.default_rng(0)
    a = rng.random((32, 32))
    pa, pb = tmp_path / "a.png", tmp_path / "b.png"
    write_png(pa, a, bits=16)
    write_png(pb, np.clip(a + 0.05, 0, 1), bits=16)
    assert main(["metrics", str(pa), str(pb)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"psnr_db", "ssim"}
    assert 10 < out["psnr_db"] < 40


def test_metrics_shape_mismatch_exits_2(tmp_path, capsys):
    pa, pb = tmp_path / "a.png", tmp_path / "b.png"
    write_png(pa, np.ones((16, 16)))
    write_png(pb, np.ones((32, 32)))
    assert main(["metrics", str(pa), str(pb)]) == 2


def test_bridge_test_ok_and_failing(tmp_path, capsys):
    script = tmp_path / "echo.py"
    script.write_text(
        "import sys, pathlib, shutil\n"
        "d = pathlib.Path(sys.argv[1])\n"
        "shutil.copy(d / 'in.lprf', d / 'out.lprf')\n")
    rc = main(["denoise-bridge-test", "--cmd", f"{sys.executable} {script}",
               "--size", "24"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["ok"] is True and out["shape"] == [24, 24]
    rc = main(["denoise-bridge-test", "--cmd", "/bin/false", "--size", "16"])
    assert rc == 2
