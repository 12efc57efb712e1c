import json

import numpy as np
import pytest

from lpr.bench import (CSV_HEADER, BenchRow, ConfigError, ExperimentConfig,
                       build_model, enhance_complex_tiled, estimate_peak_bytes,
                       load_ground_truth, run_experiment, score, synthesize,
                       tiled_run, write_rows_csv, _lpr_tiled)
from lpr.denoise import ChannelPolicy, Enhancer, enhance_complex
from lpr.field import NoiseSpec, add_wgn
from lpr.io import read_lprf, read_lprf_complex
from lpr.metrics import PSNR_CAP_DB
from lpr.models import CdiModel, CdpModel, FpmModel, forward_intensity
from lpr.phantom import make_complex_phantom, make_phantom


def _cfg(**over):
    base = {
        "modality": "cdp",
        "shape": [32, 32],
        "model": {"n_masks": 2, "mask_seed": 11},
        "ground_truth": {"kind": "phantom", "seed": 7},
        "snr_db": [15.0],
        "noise_seed": 5,
        "algorithms": [{"name": "ap", "max_iters": 30}],
        "timing": "none",
    }
    base.update(over)
    return ExperimentConfig.from_dict(base)


# ---------------------------------------------------------------------------
# config handling


def test_config_round_trip(tmp_path):
    cfg = _cfg()
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg.to_dict()))
    again = ExperimentConfig.from_json(p)
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("mutate", [
    {"modality": "holography"},
    {"timing": "cpu"},
    {"snr_db": []},
    {"algorithms": []},
    {"algorithms": [{"name": "gerchberg"}]},
    {"shape": [32]},
    {"channels": 0},
])
def test_config_validation_rejects(mutate):
    with pytest.raises(ConfigError):
        _cfg(**mutate)


def test_config_rejects_unknown_and_missing_keys(tmp_path):
    with pytest.raises(ConfigError, match="unknown config keys"):
        ExperimentConfig.from_dict({**_cfg().to_dict(), "gpu": True})
    with pytest.raises(ConfigError, match="missing config keys"):
        ExperimentConfig.from_dict({"modality": "cdp"})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="valid JSON"):
        ExperimentConfig.from_json(bad)
    with pytest.raises(ConfigError, match="cannot read"):
        ExperimentConfig.from_json(tmp_path / "missing.json")


def test_build_model_per_modality():
    assert isinstance(build_model(_cfg()), CdpModel)
    cdi = _cfg(modality="cdi", model={"oversample": 2.0, "real_nonneg": True})
    m = build_model(cdi)
    assert isinstance(m, CdiModel) and m.real_nonneg
    fpm = _cfg(modality="fpm", shape=[64, 64],
               model={"lr_shape": [16, 16], "grid": 5})
    assert isinstance(build_model(fpm), FpmModel)
    with pytest.raises(ConfigError, match="unknown cdp model keys"):
        build_model(_cfg(model={"n_masks": 2, "sparsity": 0.5}))


def test_ground_truth_kinds(tmp_path):
    t1 = load_ground_truth(_cfg())
    assert t1.shape == (32, 32) and np.iscomplexobj(t1)
    t2 = load_ground_truth(_cfg(ground_truth={"kind": "complex_phantom",
                                              "seed": 7}))
    assert np.abs(np.angle(t2)).max() > 0.1
    from lpr.io import write_png, write_lprf_complex
    png = tmp_path / "t.png"
    write_png(png, make_phantom(32, seed=1))
    t3 = load_ground_truth(_cfg(ground_truth={"kind": "png", "path": str(png)}))
    assert t3.shape == (32, 32)
    lf = tmp_path / "t.lprf"
    write_lprf_complex(lf, make_complex_phantom(32)[None])
    t4 = load_ground_truth(_cfg(ground_truth={"kind": "lprf", "path": str(lf)}))
    assert np.iscomplexobj(t4)
    with pytest.raises(ConfigError):
        load_ground_truth(_cfg(ground_truth={"kind": "oracle"}))


def test_channel_offsets_ground_truth_seed():
    a = load_ground_truth(_cfg(), channel=0)
    b = load_ground_truth(_cfg(), channel=1)
    assert not np.allclose(a, b)


# ---------------------------------------------------------------------------
# scoring


def test_score_perfect_reconstruction():
    truth = make_complex_phantom(32, seed=7)
    s = score(truth.copy(), truth)
    assert s["psnr_db"] == PSNR_CAP_DB
    assert s["ssim"] == pytest.approx(1.0, abs=1e-9)
    assert s["phase_rmse"] < 1e-9
    # a global phase factor costs (almost) nothing
    rotated = score(np.exp(1j * 0.4) * truth, truth)
    assert rotated["psnr_db"] > 300
    assert rotated["phase_rmse"] < 1e-9


def test_score_group_search_finds_conjugate_flip_twin():
    truth = make_phantom(32, seed=7).astype(complex)
    twin = np.roll(np.conj(truth[::-1, ::-1]), (2, -1), axis=(0, 1))
    plain = score(twin, truth, cdi_group=False)
    grouped = score(twin, truth, cdi_group=True, translation_radius=2)
    assert grouped["psnr_db"] > plain["psnr_db"] + 10
    assert grouped["psnr_db"] > 200


def test_score_shape_mismatch():
    with pytest.raises(ValueError):
        score(np.ones((8, 8), complex), np.ones((4, 4), complex))


# ---------------------------------------------------------------------------
# experiment driver


def test_run_experiment_row_order_and_artifacts(tmp_path):
    cfg = _cfg(snr_db=[20.0, 10.0],
               algorithms=[{"name": "ap", "max_iters": 30},
                           {"name": "lpr", "outer_max": 5,
                            "warmstart_iters": 5,
                            "schedule": {"kind": "constant", "scale": 2.0}}])
    out = tmp_path / "run"
    rows = run_experiment(cfg, out_dir=out)
    assert [(r.algorithm, r.snr_db) for r in rows] == [
        ("ap", 10.0), ("ap", 20.0), ("lpr", 10.0), ("lpr", 20.0)]
    assert all(r.status == "ok" for r in rows)
    assert all(r.wall_seconds == 0.0 for r in rows)  # timing "none"
    csv_text = (out / "results.csv").read_text()
    assert csv_text.splitlines()[0] == CSV_HEADER
    assert len(csv_text.splitlines()) == 5
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config"]["modality"] == "cdp"
    assert (out / "truth_amp.png").exists()
    assert (out / "recon_ap_snr10_amp.png").exists()
    assert (out / "recon_lpr_snr20_phase.png").exists()


def test_run_experiment_survives_failing_cell(tmp_path):
    cfg = _cfg(algorithms=[
        {"name": "lpr", "outer_max": 2, "warmstart_iters": 2,
         "enhancer": {"kind": "external", "command": "/bin/false"}},
        {"name": "ap", "max_iters": 10},
    ])
    rows = run_experiment(cfg)
    assert rows[0].status.startswith("error:")
    assert not np.isfinite(rows[0].psnr_db)
    assert rows[1].status == "ok"


def test_run_experiment_deterministic_with_timing_off(tmp_path):
    cfg = _cfg(snr_db=[10.0, 15.0])
    a = tmp_path / "a"
    b = tmp_path / "b"
    run_experiment(cfg, out_dir=a)
    run_experiment(cfg, out_dir=b)
    assert (a / "results.csv").read_bytes() == (b / "results.csv").read_bytes()


def test_run_experiment_threads_match_serial(tmp_path):
    cfg = _cfg(snr_db=[10.0, 20.0],
               algorithms=[{"name": "ap", "max_iters": 20},
                           {"name": "lpr", "outer_max": 3,
                            "warmstart_iters": 4}])
    rows1 = run_experiment(cfg, threads=1)
    rows2 = run_experiment(cfg, threads=3)
    assert [r.to_csv() for r in rows1] == [r.to_csv() for r in rows2]


def test_bench_row_formatting():
    row = BenchRow("ap", 10.0, 23.4567891, 0.87654321, 1.23456, 300, True)
    assert row.to_csv() == "ap,10,23.4568,0.876543,1.2346,300,true,ok"
    nan_row = BenchRow("wf", 15.0, float("nan"), float("nan"), 0.0, 0, False,
                       status="error:BridgeError")
    assert nan_row.to_csv() == "wf,15,nan,nan,0.0000,0,false,error:BridgeError"


def test_write_rows_csv_header(tmp_path):
    p = tmp_path / "r.csv"
    write_rows_csv([BenchRow("ap", 10, 1, 1, 0, 1, True)], p)
    assert p.read_text().splitlines()[0] == (
        "algorithm,snr_db,psnr_db,ssim,wall_seconds,iterations,converged,status")


# ---------------------------------------------------------------------------
# tiling


def test_tiled_enhance_matches_untiled_interior():
    rng = np.random.default_rng(3)
    v = (make_phantom(128, seed=7) + 0.1 * rng.standard_normal((128, 128))) \
        * np.exp(1j * 0.2 * rng.standard_normal((128, 128)))
    e = Enhancer(kind="tv", strength=0.08)
    pol = ChannelPolicy()
    full = enhance_complex(v, e, pol)
    tiled = enhance_complex_tiled(v, e, pol, (64, 64), overlap=16)
    # compare away from tile seams and image borders
    diff = np.abs(full - tiled)
    interior = np.zeros((128, 128), dtype=bool)
    for y0 in (0, 64):
        for x0 in (0, 64):
            interior[y0 + 20:y0 + 44, x0 + 20:x0 + 44] = True
    scale = np.abs(full).max()
    assert diff[interior].max() < 1e-3 * scale


def test_tiled_enhance_validates_tile_size():
    with pytest.raises(ValueError):
        enhance_complex_tiled(np.ones((64, 64), complex),
                              Enhancer(kind="tv", strength=0.1),
                              ChannelPolicy(), (16, 16), overlap=16)


def test_peak_bytes_estimate_orders():
    untiled = estimate_peak_bytes((1024, 1024), 5, channels=3, tiled=False)
    tiled = estimate_peak_bytes((1024, 1024), 5, channels=3, tiled=True)
    assert tiled < untiled
    assert untiled > 3 * 5 * 1024 * 1024 * 8  # at least the measurement stacks


def test_tiled_run_matches_independent_channels(tmp_path):
    cfg = _cfg(shape=[64, 64], channels=2,
               model={"n_masks": 3, "mask_seed": 11},
               snr_db=[10.0],
               algorithms=[{"name": "lpr", "outer_max": 3,
                            "inner_ap_iters": 2, "warmstart_iters": 4,
                            "schedule": {"kind": "constant", "scale": 2.0}}])
    out = tmp_path / "tiled"
    info = tiled_run(cfg, out, (32, 32), overlap=8)
    assert info["peak_bytes_tiled_estimate"] < info["peak_bytes_untiled_estimate"]
    spec = cfg.algorithms[0]
    model = build_model(cfg)
    for c in range(2):
        I = read_lprf(out / f"meas_c{c}.lprf")
        v_indep, _, _ = _lpr_tiled(I, model, spec, (32, 32), overlap=8)
        v_streamed = read_lprf_complex(out / f"recon_c{c}.lprf")[0]
        assert np.max(np.abs(v_streamed - v_indep)) < 1e-6  # float32 file round trip


def test_tiled_run_rejects_other_modalities(tmp_path):
    cfg = _cfg(modality="cdi", model={})
    with pytest.raises(ConfigError):
        tiled_run(cfg, tmp_path / "x", (16, 16))
