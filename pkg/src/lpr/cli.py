"""Command-line front end.

Subcommands:
  simulate              ground truth + measurement stacks from a JSON config
  reconstruct           run one configured algorithm on a measurement stack
  bench                 full algorithm x SNR sweep with CSV/PNG artifacts
  metrics               PSNR/SSIM between two images
  denoise-bridge-test   round-trip a test plane through an external enhancer

Exit codes: 0 success, 2 bad config or arguments, 3 solver failure
(reconstruct only: an exception or a non-finite output field).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import io as lio
from .bench import (ConfigError, ExperimentConfig, build_model,
                    noise_seed_for, run_experiment, synthesize, tiled_run,
                    _run_ap, _run_lpr, _run_wf)
from .denoise import BridgeError, external_bridge
from .field import NoiseSpec, add_wgn
from .metrics import psnr, ssim

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_SOLVER = 3


def _parse_tile(text):
    try:
        h, w = text.lower().split("x")
        return int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lpr", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", required=True, help="experiment JSON")
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config noise seed")

    sp = sub.add_parser("simulate", help="write ground truth and measurements")
    common(sp)

    sp = sub.add_parser("reconstruct", help="reconstruct one measurement stack")
    common(sp)
    sp.add_argument("--measurements", default=None,
                    help="input stack; defaults to fresh synthesis at the "
                         "first configured SNR")
    sp.add_argument("--algorithm", default=None,
                    help="name/label of the config algorithm entry to run")

    sp = sub.add_parser("bench", help="run the full benchmark grid")
    common(sp)
    sp.add_argument("--threads", type=int, default=None,
                    help="worker threads across grid cells")
    sp.add_argument("--tile", type=_parse_tile, default=None, metavar="HxW",
                    help="streamed multi-channel run with tiled enhancement")

    sp = sub.add_parser("metrics", help="score two images")
    sp.add_argument("reference")
    sp.add_argument("test")
    sp.add_argument("--peak", type=float, default=None)

    sp = sub.add_parser("denoise-bridge-test",
                        help="validate an external enhancer command")
    sp.add_argument("--cmd", required=True, help="command invoked as '<cmd> <dir>'")
    sp.add_argument("--size", type=int, default=64)
    sp.add_argument("--sigma", type=float, default=0.1)
    sp.add_argument("--timeout", type=float, default=30.0)
    return p


def _load_config(path, seed=None) -> ExperimentConfig:
    cfg = ExperimentConfig.from_json(path)
    if seed is not None:
        cfg.noise_seed = int(seed)
    return cfg


def _load_image(path) -> np.ndarray:
    if str(path).endswith(".lprf"):
        stack = lio.read_lprf(path)
        return stack[0]
    return lio.read_png(path)


def cmd_simulate(args) -> int:
    cfg = _load_config(args.config, args.seed)
    os.makedirs(args.out, exist_ok=True)
    truth, model, clean = synthesize(cfg)
    lio.write_lprf_complex(os.path.join(args.out, "truth.lprf"), truth[None])
    lio.write_png(os.path.join(args.out, "truth_amp.png"), np.abs(truth))
    lio.write_png(os.path.join(args.out, "truth_phase.png"), np.angle(truth),
                  lo=-np.pi, hi=np.pi)
    lio.write_lprf(os.path.join(args.out, "measurements.lprf"), clean)
    for i, snr in enumerate(cfg.snr_db):
        planes = add_wgn(clean, NoiseSpec(snr, seed=noise_seed_for(cfg, i)))
        lio.write_lprf(os.path.join(args.out, f"measurements_snr{snr:g}.lprf"),
                       planes)
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        json.dump({"config": cfg.to_dict(),
                   "noise_seeds": {("%g" % s): noise_seed_for(cfg, i)
                                   for i, s in enumerate(cfg.snr_db)}},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote simulation artifacts to {args.out}")
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    cfg = _load_config(args.config, args.seed)
    spec = None
    if args.algorithm is None:
        spec = cfg.algorithms[0]
    else:
        for i, s in enumerate(cfg.algorithms):
            if s.get("label", s["name"]) == args.algorithm:
                spec = s
                break
        if spec is None:
            raise ConfigError(f"no algorithm {args.algorithm!r} in config")
    model = build_model(cfg)
    if args.measurements is not None:
        I = lio.read_lprf(args.measurements)
    else:
        truth, model, clean = synthesize(cfg)
        I = add_wgn(clean, NoiseSpec(cfg.snr_db[0], seed=noise_seed_for(cfg, 0)))

    os.makedirs(args.out, exist_ok=True)
    try:
        if spec["name"] == "ap":
            u, iters, conv = _run_ap(spec, I, model)
        elif spec["name"] == "lpr":
            u, iters, conv = _run_lpr(spec, I, model)
        else:
            u, iters, conv = _run_wf(spec, I, model)
        if not np.all(np.isfinite(u)):
            raise FloatingPointError("reconstruction is not finite")
    except Exception as exc:  # noqa: BLE001
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    lio.write_lprf_complex(os.path.join(args.out, "recon.lprf"), u[None])
    lio.write_png(os.path.join(args.out, "recon_amp.png"), np.abs(u))
    lio.write_png(os.path.join(args.out, "recon_phase.png"), np.angle(u),
                  lo=-np.pi, hi=np.pi)
    report = {"algorithm": spec.get("label", spec["name"]),
              "iterations": int(iters), "converged": bool(conv)}
    with open(os.path.join(args.out, "report.json"), "w") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(json.dumps(report))
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _load_config(args.config, args.seed)
    if args.tile is not None:
        info = tiled_run(cfg, args.out, args.tile,
                         progress=lambda d: print(json.dumps(d)))
        print(json.dumps({k: info[k] for k in
                          ("wall_seconds", "peak_bytes_untiled_estimate",
                           "peak_bytes_tiled_estimate")}))
        return EXIT_OK
    rows = run_experiment(cfg, out_dir=args.out, threads=args.threads,
                          progress=lambda r: print(r.to_csv()))
    n_bad = sum(1 for r in rows if r.status != "ok")
    print(f"wrote {len(rows)} rows to {os.path.join(args.out, 'results.csv')}"
          + (f" ({n_bad} failed cells)" if n_bad else ""))
    return EXIT_OK


def cmd_metrics(args) -> int:
    ref = _load_image(args.reference)
    test = _load_image(args.test)
    if ref.shape != test.shape:
        raise ConfigError(f"shape mismatch {ref.shape} vs {test.shape}")
    out = {"psnr_db": float(psnr(ref, test, peak=args.peak)),
           "ssim": float(ssim(ref, test, peak=args.peak))}
    print(json.dumps(out))
    return EXIT_OK


def cmd_bridge_test(args) -> int:
    rng = np.random.default_rng(0)
    n = args.size
    plane = np.linspace(0, 1, n * n).reshape(n, n)
    plane = plane + args.sigma * rng.standard_normal((n, n))
    try:
        out = external_bridge(plane, args.cmd, args.sigma,
                              timeout_s=args.timeout)
    except BridgeError as exc:
        print(f"bridge failed: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rms_in = float(np.sqrt(np.mean((plane - np.linspace(0, 1, n * n)
                                    .reshape(n, n)) ** 2)))
    rms_out = float(np.sqrt(np.mean((out - np.linspace(0, 1, n * n)
                                     .reshape(n, n)) ** 2)))
    print(json.dumps({"ok": True, "shape": list(out.shape),
                      "rms_err_in": rms_in, "rms_err_out": rms_out}))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "reconstruct": cmd_reconstruct,
        "bench": cmd_bench,
        "metrics": cmd_metrics,
        "denoise-bridge-test": cmd_bridge_test,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
