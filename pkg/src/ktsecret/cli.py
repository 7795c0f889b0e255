"""Command-line front end: phantom generation, masking, reconstruction,
evaluation, quantification and an end-to-end pipeline.

All tensors are exchanged via the KTSR container (see container.py); masks
and weights carry JSON sidecars. Every subcommand is deterministic given its
--seed. KTSECRET_THREADS caps the worker threads used by the pipeline's
acceleration sweep.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import jsonschema

from . import cs as cs_mod
from . import kinetics
from .container import load_params, load_tensor, save_params, save_tensor
from .encoding import KtData, SamplingMask, adjoint, make_radial_mask
from .net import NetConfig
from .phantom import PhantomSpec, PhantomTruth, corrupt, synthesize
from .recon import (
    ModlConfig,
    SecretConfig,
    modl_forward,
    modl_train,
    secret_infer,
    secret_train,
)

METRICS_HEADER = ["method", "accel", "phantom_id", "frame", "psnr", "ssim", "nrmse"]

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["seed", "phantom", "mask", "method", "output_dir"],
    "properties": {
        "seed": {"type": "integer"},
        "phantom": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "h": {"type": "integer"},
                "w": {"type": "integer"},
                "t": {"type": "integer"},
                "dt": {"type": "number"},
                "n_tissue_regions": {"type": "integer"},
                "ktrans_range": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "vp_range": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "noise_sigma": {"type": "number"},
                "seed": {"type": "integer"},
            },
        },
        "mask": {
            "type": "object",
            "additionalProperties": False,
            "required": ["accel", "seed"],
            "properties": {
                "accel": {
                    "anyOf": [
                        {"type": "number"},
                        {"type": "array", "items": {"type": "number"}, "minItems": 1},
                    ]
                },
                "seed": {"type": "integer"},
            },
        },
        "method": {"enum": ["zf", "cs", "modl", "secret"]},
        "method_params": {"type": "object"},
        "output_dir": {"type": "string"},
    },
}


def worker_count() -> int:
    cap = os.environ.get("KTSECRET_THREADS")
    if cap:
        return max(1, int(cap))
    return max(1, os.cpu_count() or 1)


def write_pgm(path, image: np.ndarray, lo: float | None = None, hi: float | None = None) -> None:
    """8-bit binary PGM; values clipped to [lo, hi] (default min/max)."""
    img = np.abs(np.asarray(image, dtype=float))
    lo = img.min() if lo is None else lo
    hi = img.max() if hi is None else hi
    span = hi - lo if hi > lo else 1.0
    pix = np.clip((img - lo) / span * 255.0, 0, 255).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode())
        f.write(pix.tobytes())


def save_mask(path, mask: SamplingMask, seed: int) -> None:
    save_tensor(path, mask.bits.astype(np.float64))
    Path(str(path) + ".json").write_text(json.dumps({"accel": mask.accel_nominal, "seed": seed}))


def load_mask(path) -> SamplingMask:
    bits = load_tensor(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    return SamplingMask(bits=bits.astype(np.uint8), accel_nominal=float(meta["accel"]))


def load_ktdata(data_path, mask_path) -> KtData:
    return KtData(samples=load_tensor(data_path), mask=load_mask(mask_path))


def save_phantom(out_dir: Path, spec: PhantomSpec, truth: PhantomTruth) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    save_tensor(out_dir / "ref_images.ktsr", truth.ref_images)
    save_tensor(out_dir / "ktrans.ktsr", truth.ktrans_map)
    save_tensor(out_dir / "vp.ktsr", truth.vp_map)
    save_tensor(out_dir / "aif.ktsr", truth.aif)
    save_tensor(out_dir / "aif_signal.ktsr", truth.aif_signal)
    save_tensor(out_dir / "labels.ktsr", truth.region_labels.astype(np.float64))
    (out_dir / "spec.json").write_text(json.dumps(spec.__dict__, indent=2))


def load_phantom(out_dir: Path) -> PhantomTruth:
    spec = json.loads((out_dir / "spec.json").read_text())
    return PhantomTruth(
        ref_images=load_tensor(out_dir / "ref_images.ktsr"),
        ktrans_map=load_tensor(out_dir / "ktrans.ktsr"),
        vp_map=load_tensor(out_dir / "vp.ktsr"),
        aif=load_tensor(out_dir / "aif.ktsr"),
        aif_signal=load_tensor(out_dir / "aif_signal.ktsr"),
        region_labels=load_tensor(out_dir / "labels.ktsr").astype(np.int64),
        dt=float(spec["dt"]),
    )


def append_metrics(csv_path: Path, method: str, accel: float, phantom_id: str,
                   report: kinetics.MetricsReport) -> None:
    new = not csv_path.exists()
    with open(csv_path, "a", newline="") as f:
        writer = csv.writer(f)
        if new:
            writer.writerow(METRICS_HEADER)
        for i in range(len(report.psnr_frames)):
            writer.writerow([method, accel, phantom_id, i,
                             report.psnr_frames[i], report.ssim_frames[i], report.nrmse_frames[i]])
        writer.writerow([method, accel, phantom_id, "mean", report.psnr, report.ssim, report.nrmse])


def write_trainlog(path, log) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "train_loss", "val_loss", "seconds"])
        for i, (tr, va, se) in enumerate(zip(log.train_loss, log.val_loss, log.seconds)):
            writer.writerow([i, tr, va, se])


def _load_dataset(data_dir: Path, supervised: bool):
    samples = []
    for sub in sorted(p for p in Path(data_dir).iterdir() if p.is_dir()):
        d_u = load_ktdata(sub / "data.ktsr", sub / "mask.ktsr")
        if supervised:
            samples.append((d_u, load_tensor(sub / "target.ktsr")))
        else:
            samples.append(d_u)
    if not samples:
        raise FileNotFoundError(f"no sample directories under {data_dir}")
    return samples


# ---------------------------------------------------------------- subcommands

def cmd_phantom(args) -> int:
    spec = PhantomSpec(h=args.h, w=args.w, t=args.t, dt=args.dt,
                       n_tissue_regions=args.regions,
                       ktrans_range=tuple(args.ktrans_range),
                       vp_range=tuple(args.vp_range),
                       noise_sigma=args.noise, seed=args.seed)
    save_phantom(Path(args.out), spec, synthesize(spec))
    return 0


def cmd_mask(args) -> int:
    mask = make_radial_mask(args.t, args.h, args.w, args.accel, args.seed)
    save_mask(args.out, mask, args.seed)
    print(f"achieved acceleration: {mask.achieved_accel:.3f}")
    return 0


def cmd_corrupt(args) -> int:
    truth = load_phantom(Path(args.phantom))
    mask = load_mask(args.mask)
    d_u = corrupt(truth, mask, args.noise, args.seed)
    save_tensor(args.out, d_u.samples)
    return 0


def cmd_recon_zf(args) -> int:
    d_u = load_ktdata(args.data, args.mask)
    save_tensor(args.out, adjoint(d_u))
    return 0


def cmd_recon_cs(args) -> int:
    d_u = load_ktdata(args.data, args.mask)
    cfg = cs_mod.CsConfig(lambda1=args.l1, lambda2=args.l2, max_iters=args.iters, tol=args.tol)
    s, log = cs_mod.cs_reconstruct(d_u, cfg)
    save_tensor(args.out, s)
    with open(Path(args.out).with_suffix(".convergence.csv"), "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["iteration", "objective"])
        writer.writerows(enumerate(log.objective))
    if log.line_search_failed:
        print("warning: line search stalled; returned best iterate", file=sys.stderr)
    return 0


def cmd_train_secret(args) -> int:
    dataset = _load_dataset(args.data_dir, supervised=False)
    frames = dataset[0].samples.shape[0]
    net_cfg = NetConfig(frames=frames)
    cfg = SecretConfig(epochs=args.epochs, lr=args.lr, batch=args.batch, seed=args.seed)
    params, log = secret_train(dataset, cfg, net_cfg)
    save_params(args.weights, params, net_cfg)
    write_trainlog(Path(str(args.weights) + ".trainlog.csv"), log)
    return 0


def cmd_train_modl(args) -> int:
    dataset = _load_dataset(args.data_dir, supervised=True)
    frames = dataset[0][0].samples.shape[0]
    net_cfg = NetConfig(frames=frames)
    cfg = ModlConfig(K=args.K, lam=getattr(args, "lambda"), epochs=args.epochs,
                     lr=args.lr, seed=args.seed)
    params, log = modl_train(dataset, cfg, net_cfg)
    save_params(args.weights, params, net_cfg)
    write_trainlog(Path(str(args.weights) + ".trainlog.csv"), log)
    return 0


def cmd_recon_nn(args) -> int:
    d_u = load_ktdata(args.data, args.mask)
    params, net_cfg = load_params(args.weights)
    t0 = time.perf_counter()
    if args.K > 0:
        cfg = ModlConfig(K=args.K, lam=getattr(args, "lambda"))
        s = modl_forward(adjoint(d_u), d_u, params, cfg, net_cfg)
    else:
        s = secret_infer(d_u, params, net_cfg)
    print(f"inference wall time: {time.perf_counter() - t0:.3f} s")
    save_tensor(args.out, s)
    return 0


def cmd_evaluate(args) -> int:
    recon = load_tensor(args.recon)
    ref = load_tensor(args.ref)
    report = kinetics.evaluate_series(recon, ref)
    append_metrics(Path(args.out), args.method, args.accel, args.phantom_id, report)
    print(f"psnr={report.psnr:.3f} dB  ssim={report.ssim:.4f}  nrmse={report.nrmse:.4f}")
    return 0


def cmd_quantify(args) -> int:
    series = load_tensor(args.recon)
    aif = load_tensor(args.aif)
    roi = load_tensor(args.roi) > 0.5
    pmap = kinetics.patlak_fit(series, aif, args.dt, roi)
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    save_tensor(str(prefix) + ".ktrans.ktsr", pmap.ktrans)
    save_tensor(str(prefix) + ".vp.ktsr", pmap.vp)
    save_tensor(str(prefix) + ".r2.ktsr", pmap.fit_r2)
    write_pgm(str(prefix) + ".ktrans.pgm", np.nan_to_num(pmap.ktrans))
    return 0


def cmd_profile(args) -> int:
    series_list = [load_tensor(p) for p in args.inputs]
    shapes = {s.shape for s in series_list}
    if len(shapes) != 1:
        raise ValueError("all input series must share one shape")
    t, h, w = series_list[0].shape
    if not 0 <= args.row < h:
        raise ValueError(f"row {args.row} out of range [0,{h})")
    # x-t strips: rows are the image row over time, one panel per input
    strips = [np.abs(s[:, args.row, :]).T for s in series_list]  # [W, T] each
    gap = np.full((w, 2), np.max([s.max() for s in strips]))
    panel = np.hstack(sum(([s, gap] for s in strips[:-1]), []) + [strips[-1]])
    prefix = Path(args.out_prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    write_pgm(str(prefix) + ".pgm", panel)
    with open(str(prefix) + ".csv", "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["input", "frame", "x", "magnitude"])
        for idx, s in enumerate(series_list):
            for fr in range(t):
                for x in range(w):
                    writer.writerow([idx, fr, x, abs(s[fr, args.row, x])])
    return 0


# ------------------------------------------------------------------- pipeline

def _reconstruct(method: str, d_u: KtData, truth: PhantomTruth, params_cfg: dict, seed: int):
    if method == "zf":
        return adjoint(d_u), None
    if method == "cs":
        cfg = cs_mod.CsConfig(
            lambda1=params_cfg.get("l1", 1e-3), lambda2=params_cfg.get("l2", 5e-3),
            max_iters=params_cfg.get("iters", 100), tol=params_cfg.get("tol", 1e-6))
        return cs_mod.cs_reconstruct(d_u, cfg)
    net_cfg = NetConfig(frames=d_u.samples.shape[0])
    if method == "secret":
        if "weights" in params_cfg:
            params, net_cfg = load_params(params_cfg["weights"])
        else:
            cfg = SecretConfig(epochs=params_cfg.get("epochs", 30),
                               lr=params_cfg.get("lr", 1e-4), seed=seed)
            params, _ = secret_train([d_u], cfg, net_cfg)
        return secret_infer(d_u, params, net_cfg), None
    if method == "modl":
        mcfg = ModlConfig(K=params_cfg.get("K", 1), lam=params_cfg.get("lambda", 0.05),
                          epochs=params_cfg.get("epochs", 10),
                          lr=params_cfg.get("lr", 1e-4), seed=seed)
        if "weights" in params_cfg:
            params, net_cfg = load_params(params_cfg["weights"])
        else:
            params, _ = modl_train([(d_u, truth.ref_images)], mcfg, net_cfg)
        return modl_forward(adjoint(d_u), d_u, params, mcfg, net_cfg), None
    raise ValueError(f"unknown method {method!r}")


def run_pipeline(config: dict) -> int:
    jsonschema.validate(config, RUN_CONFIG_SCHEMA)
    out_dir = Path(config["output_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = config["seed"]
    spec = PhantomSpec(**{k: tuple(v) if isinstance(v, list) else v
                          for k, v in config["phantom"].items()})
    truth = synthesize(spec)
    save_phantom(out_dir / "phantom", spec, truth)
    method = config["method"]
    params_cfg = config.get("method_params", {})
    accels = config["mask"]["accel"]
    if not isinstance(accels, list):
        accels = [accels]

    def run_one(accel):
        sub = out_dir / f"R{accel:g}"
        sub.mkdir(exist_ok=True)
        mask = make_radial_mask(spec.t, spec.h, spec.w, accel, config["mask"]["seed"])
        save_mask(sub / "mask.ktsr", mask, config["mask"]["seed"])
        d_u = corrupt(truth, mask, spec.noise_sigma, seed)
        save_tensor(sub / "data.ktsr", d_u.samples)
        recon, cs_log = _reconstruct(method, d_u, truth, params_cfg, seed)
        save_tensor(sub / "recon.ktsr", recon)
        zf = adjoint(d_u)
        save_tensor(sub / "recon_zf.ktsr", zf)
        if cs_log is not None:
            with open(sub / "convergence.csv", "w", newline="") as f:
                writer = csv.writer(f)
                writer.writerow(["iteration", "objective"])
                writer.writerows(enumerate(cs_log.objective))
        report = kinetics.evaluate_series(recon, truth.ref_images)
        # figure-style panel: reference / zero-filled / method / |error| x 5
        mid = spec.t // 2
        err = 5.0 * np.abs(np.abs(recon[mid]) - np.abs(truth.ref_images[mid]))
        panel = np.hstack([np.abs(truth.ref_images[mid]), np.abs(zf[mid]), np.abs(recon[mid]), err])
        write_pgm(sub / "panel.pgm", panel, lo=0.0, hi=1.0)
        pmap = kinetics.patlak_fit(recon, truth.aif_signal, spec.dt, truth.tissue_roi)
        save_tensor(sub / "ktrans_map.ktsr", pmap.ktrans)
        save_tensor(sub / "vp_map.ktsr", pmap.vp)
        hi = max(truth.ktrans_map.max(), 1e-9)
        write_pgm(sub / "ktrans_panel.pgm",
                  np.hstack([truth.ktrans_map, np.nan_to_num(pmap.ktrans)]), lo=0.0, hi=hi)
        return accel, report

    with ThreadPoolExecutor(max_workers=min(worker_count(), len(accels))) as pool:
        results = list(pool.map(run_one, accels))
    metrics_path = out_dir / "metrics.csv"
    if metrics_path.exists():
        metrics_path.unlink()
    for accel, report in results:
        append_metrics(metrics_path, method, accel, f"phantom{spec.seed}", report)
    return 0


def cmd_pipeline(args) -> int:
    config = json.loads(Path(args.config).read_text())
    if args.seed is not None:
        config["seed"] = args.seed
    return run_pipeline(config)


# ------------------------------------------------------------------ arg setup

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ktsecret",
                                     description="Dynamic (k,t)-space reconstruction toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("phantom", help="generate a synthetic dynamic phantom")
    p.add_argument("--out", required=True)
    p.add_argument("--h", type=int, default=64)
    p.add_argument("--w", type=int, default=64)
    p.add_argument("--t", type=int, default=16)
    p.add_argument("--dt", type=float, default=2.0)
    p.add_argument("--regions", type=int, default=3)
    p.add_argument("--ktrans-range", type=float, nargs=2, default=[0.1, 0.6])
    p.add_argument("--vp-range", type=float, nargs=2, default=[0.02, 0.15])
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("mask", help="generate a golden-angle radial (k,t) mask")
    p.add_argument("--out", required=True)
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--h", type=int, required=True)
    p.add_argument("--w", type=int, required=True)
    p.add_argument("--accel", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("corrupt", help="undersample phantom k-space with noise")
    p.add_argument("--phantom", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_corrupt)

    p = sub.add_parser("recon-zf", help="zero-filled reconstruction")
    p.add_argument("--data", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_recon_zf)

    p = sub.add_parser("recon-cs", help="compressed-sensing reconstruction")
    p.add_argument("--data", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--l1", type=float, default=1e-3)
    p.add_argument("--l2", type=float, default=5e-3)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_recon_cs)

    p = sub.add_parser("train-secret", help="self-supervised training (no references)")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--batch", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_secret)

    p = sub.add_parser("train-modl", help="supervised unrolled training")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--K", type=int, default=1)
    p.add_argument("--lambda", type=float, default=0.05)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_modl)

    p = sub.add_parser("recon-nn", help="network inference (SECRET or unrolled)")
    p.add_argument("--data", required=True)
    p.add_argument("--mask", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--K", type=int, default=0, help="0 = single-pass SECRET inference")
    p.add_argument("--lambda", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_recon_nn)

    p = sub.add_parser("evaluate", help="PSNR/SSIM/NRMSE against a reference")
    p.add_argument("--recon", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--method", default="unknown")
    p.add_argument("--accel", type=float, default=0.0)
    p.add_argument("--phantom-id", default="0")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("quantify", help="Patlak parameter maps")
    p.add_argument("--recon", required=True)
    p.add_argument("--aif", required=True)
    p.add_argument("--roi", required=True)
    p.add_argument("--dt", type=float, required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_quantify)

    p = sub.add_parser("profile", help="x-t profile strips for visual comparison")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--row", type=int, required=True)
    p.add_argument("--out-prefix", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("pipeline", help="phantom -> mask -> recon -> evaluate -> quantify")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_pipeline)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # pragma: no cover - thin error shim
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
