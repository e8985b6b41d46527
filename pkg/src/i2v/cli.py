"""Command-line entry point: train, denoise, eval, pd, noisegen, hist, sweep.

Every invocation resolves its configuration (defaults, then a JSON config
file, then key=value overrides), prints the resolved form, runs, and writes
a manifest JSON next to its outputs. All randomness flows from one seed.
"""

from __future__ import annotations

import argparse
import csv
import difflib
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import backend
from .data_noise import (
    NoiseModel,
    add_correlated_noise,
    box_kernel,
    identity_kernel,
    load_png,
    make_dataset,
    make_synthetic_clean,
    save_png,
)
from .inference import (
    InferenceConfig,
    baseline_apbsn,
    blend_i2vb,
    ne_denoise,
    pr3,
    r3,
    sweep_pr3,
)
from .losses import LossWeights
from .metrics import noise_histogram, noise_map_per_stride, psnr, ssim
from .networks import load_checkpoint
from .pd import ShuffleOrder, pd_forward, pd_inverse, random_order
from .tensor import load_t32, save_t32
from .training import TrainConfig, create_networks, train

CONFIG_ENV = "I2V_CONFIG"

_CONFIG_KEYS = (
    "lr0",
    "milestones",
    "decay",
    "batch",
    "patch",
    "epochs",
    "patches_per_image",
    "seed",
    "crop",
    "rotate",
    "mirror",
    "bsn_base",
    "ne_width",
    "checkpoint_every",
    "lambda_s",
    "lambda_r",
    "lambda_ov",
    "lambda_np",
    "p1",
    "p2",
    "r3_repetitions",
    "r3_probability",
)


def _coerce(value, template):
    if isinstance(template, bool):
        if str(value).lower() in ("1", "true", "yes", "on"):
            return True
        if str(value).lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {value!r}")
    if isinstance(template, int):
        return int(value)
    if isinstance(template, float):
        return float(value)
    if isinstance(template, (tuple, list)):
        return [int(v) for v in str(value).split(",") if v != ""]
    return value


def resolve_train_config(config_path, overrides, seed=None):
    """defaults <- JSON file <- key=value overrides; unknown keys rejected
    with a closest-match suggestion."""
    base = TrainConfig()
    values = base.to_json_dict()
    flat = {**{k: v for k, v in values.items() if k not in ("weights",)}, **values["weights"]}
    del flat["milestones"]
    flat["milestones"] = list(base.milestones)
    infer_base = InferenceConfig()
    flat["p1"] = infer_base.p1
    flat["p2"] = infer_base.p2
    flat["r3_repetitions"] = infer_base.r3_repetitions
    flat["r3_probability"] = infer_base.r3_probability

    def apply(key, raw, source):
        if key not in _CONFIG_KEYS:
            hint = difflib.get_close_matches(key, _CONFIG_KEYS, n=1)
            suffix = f"; did you mean {hint[0]!r}?" if hint else ""
            raise ValueError(f"unknown config key {key!r} from {source}{suffix}")
        flat[key] = _coerce(raw, flat[key]) if not isinstance(raw, (bool, int, float, list)) else raw

    path = config_path or os.environ.get(CONFIG_ENV)
    if path:
        with open(path) as fh:
            for key, raw in json.load(fh).items():
                apply(key, raw, path)
    for item in overrides or []:
        if "=" not in item:
            raise ValueError(f"overrides take the form key=value; got {item!r}")
        key, raw = item.split("=", 1)
        apply(key, _coerce(raw, flat.get(key, raw)) if key in flat else raw, "command line")
    if seed is not None:
        flat["seed"] = seed
    weights = LossWeights(
        lambda_s=flat.pop("lambda_s"),
        lambda_r=flat.pop("lambda_r"),
        lambda_ov=flat.pop("lambda_ov"),
        lambda_np=flat.pop("lambda_np"),
    )
    infer = InferenceConfig(
        p1=flat.pop("p1"),
        p2=flat.pop("p2"),
        r3_repetitions=flat.pop("r3_repetitions"),
        r3_probability=flat.pop("r3_probability"),
        seed=flat["seed"],
    )
    flat["milestones"] = tuple(flat["milestones"])
    return TrainConfig(weights=weights, **flat), infer


def _print_config(cfg_dict, extra=None):
    merged = dict(cfg_dict)
    if extra:
        merged.update(extra)
    print("resolved config: " + json.dumps(merged, sort_keys=True))


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out_dir, command, cfg_dict, seed, checkpoint=None):
    os.makedirs(out_dir, exist_ok=True)
    manifest = {"command": command, "config": cfg_dict, "seed": seed, "kernels": backend.active_name()}
    if checkpoint:
        manifest["checkpoint_sha256"] = _sha256(checkpoint)
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)


def _load_image_any(path):
    if path.endswith(".t32"):
        return load_t32(path)
    return load_png(path).noisy


def _save_image_any(tensor, path):
    if path.endswith(".t32"):
        save_t32(path, tensor)
    else:
        save_png(tensor, path)


# -- subcommand bodies ------------------------------------------------------------


def cmd_train(args):
    cfg, _ = resolve_train_config(args.config, args.set, args.seed)
    _print_config(cfg.to_json_dict(), {"data": args.data, "out": args.out})
    dataset = make_dataset(args.data, with_clean=False, log=lambda msg: print(f"note: {msg}"))
    rng = np.random.default_rng(cfg.seed)
    f, h = create_networks(cfg, rng)
    train(f, h, dataset, cfg, out_dir=args.out, log_every=args.log_every)
    ckpt = os.path.join(args.out, "checkpoint.i2vc")
    _write_manifest(args.out, "train", cfg.to_json_dict(), cfg.seed, checkpoint=ckpt)
    print(f"checkpoint: {ckpt}")
    return 0


_SCHEMES = ("baseline", "ne", "blend", "r3", "pr3")


def _denoise_one(scheme, f, h, record, infer_cfg, seed):
    rng = np.random.default_rng(seed)
    x = record.noisy
    if scheme == "baseline":
        return baseline_apbsn(f, x)
    if scheme == "ne":
        return ne_denoise(h, x)
    if scheme == "blend":
        return blend_i2vb(f, h, x)
    if scheme == "r3":
        return r3(f, x, infer_cfg.r3_probability, infer_cfg.r3_repetitions, rng)
    return pr3(f, h, x, infer_cfg, rng)


def cmd_denoise(args):
    infer_cfg = InferenceConfig(
        p1=args.p1, p2=args.p2, r3_repetitions=args.t, r3_probability=args.p, seed=args.seed
    )
    cfg_dict = asdict(infer_cfg)
    cfg_dict.update({"scheme": args.scheme, "checkpoint": args.checkpoint, "jobs": args.jobs})
    _print_config(cfg_dict, {"in": getattr(args, "in"), "out": args.out})
    f, h = load_checkpoint(args.checkpoint)
    dataset = make_dataset(getattr(args, "in"), with_clean=True, log=lambda msg: print(f"note: {msg}"))
    os.makedirs(args.out, exist_ok=True)

    def work(item):
        index, record = item
        out = _denoise_one(args.scheme, f, h, record, infer_cfg, args.seed + index)
        return record, out

    items = list(enumerate(dataset))
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(work, items))
    else:
        results = [work(item) for item in items]

    rows = []
    for record, out in sorted(results, key=lambda pair: pair[0].id):
        save_png(out, os.path.join(args.out, f"{record.id}.png"))
        if record.clean is not None:
            rows.append([record.id, f"{psnr(out, record.clean):.4f}", f"{ssim(out, record.clean):.6f}", "n/a", "n/a"])
    if rows:
        with open(os.path.join(args.out, "metrics.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "psnr", "ssim", "lpips", "dists"])
            writer.writerows(rows)
    _write_manifest(args.out, "denoise", cfg_dict, args.seed, checkpoint=args.checkpoint)
    print(f"wrote {len(results)} images to {args.out}" + (f" ({len(rows)} scored)" if rows else ""))
    return 0


def cmd_eval(args):
    cfg_dict = {"denoised": args.denoised, "clean": args.clean, "jobs": args.jobs}
    _print_config(cfg_dict)
    den = make_dataset(args.denoised, with_clean=False)

    def clean_path_for(record_id):
        direct = os.path.join(args.clean, record_id + ".clean.png")
        if os.path.exists(direct):
            return direct
        return os.path.join(args.clean, record_id + ".png")

    def work(record):
        ref = load_png(clean_path_for(record.id)).noisy
        return [record.id, f"{psnr(record.noisy, ref):.4f}", f"{ssim(record.noisy, ref):.6f}", "n/a", "n/a"]

    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(work, den))
    else:
        rows = [work(record) for record in den]
    rows.sort(key=lambda r: r[0])
    out_path = args.out or os.path.join(args.denoised, "eval.csv")
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "psnr", "ssim", "lpips", "dists"])
        writer.writerows(rows)
    mean_psnr = float(np.mean([float(r[1]) for r in rows]))
    mean_ssim = float(np.mean([float(r[2]) for r in rows]))
    print(f"{len(rows)} images: mean psnr {mean_psnr:.4f} dB, mean ssim {mean_ssim:.6f} -> {out_path}")
    return 0


def cmd_pd(args):
    cfg_dict = {"stride": args.stride, "seed": args.seed, "direction": args.direction}
    _print_config(cfg_dict, {"in": getattr(args, "in"), "out": args.out})
    x = _load_image_any(getattr(args, "in"))
    if args.seed < 0:
        order = ShuffleOrder.identity(args.stride)
    else:
        order = random_order(args.stride, np.random.default_rng(args.seed))
    if args.direction == "forward":
        out = pd_forward(x, order)
    else:
        out = pd_inverse(x, order.transpose())
    _save_image_any(out, args.out)
    print(f"{args.direction} stride {args.stride} -> {args.out}")
    return 0


_KERNELS = {"identity": identity_kernel, "box3": lambda: box_kernel(3), "box5": lambda: box_kernel(5)}


def cmd_noisegen(args):
    cfg_dict = {
        "sigma": args.sigma,
        "kernel": args.kernel,
        "gamma": args.gamma,
        "seed": args.seed,
        "synth": args.synth,
        "size": args.size,
    }
    _print_config(cfg_dict, {"clean": args.clean, "out": args.out})
    rng = np.random.default_rng(args.seed)
    if args.synth:
        os.makedirs(args.clean, exist_ok=True)
        h, w = (int(v) for v in args.size.split("x"))
        for i in range(args.synth):
            save_png(make_synthetic_clean(h, w, rng), os.path.join(args.clean, f"synth{i:03d}.png"))
        print(f"synthesized {args.synth} clean images in {args.clean}")
    model = NoiseModel(sigma=args.sigma, kernel=_KERNELS[args.kernel](), gamma=args.gamma)
    records = make_dataset(args.clean, with_clean=False)
    os.makedirs(args.out, exist_ok=True)
    for record in records:
        noisy = add_correlated_noise(record.noisy, model, rng)
        save_png(noisy, os.path.join(args.out, f"{record.id}.png"))
        save_png(record.noisy, os.path.join(args.out, f"{record.id}.clean.png"))
    _write_manifest(args.out, "noisegen", cfg_dict, args.seed)
    print(f"wrote {len(records)} noisy/clean pairs to {args.out}")
    return 0


def cmd_hist(args):
    strides = [int(s) for s in args.strides.split(",")]
    cfg_dict = {"strides": strides, "bins": args.bins, "range_max": args.range_max}
    _print_config(cfg_dict, {"checkpoint": args.checkpoint, "image": args.image, "out": args.out})
    f, h = load_checkpoint(args.checkpoint)
    x = _load_image_any(args.image)
    maps = noise_map_per_stride(f, h, x, strides, out_dir=args.out)
    for name, tensor in maps.items():
        edges, counts = noise_histogram(tensor, args.bins, args.range_max)
        with open(os.path.join(args.out, f"hist_{name}.csv"), "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin_low", "bin_high", "count"])
            for i, count in enumerate(counts):
                writer.writerow([f"{edges[i]:.6f}", f"{edges[i + 1]:.6f}", int(count)])
    _write_manifest(args.out, "hist", cfg_dict, 0, checkpoint=args.checkpoint)
    print(f"wrote {len(maps)} noise maps and histograms to {args.out}")
    return 0


def cmd_sweep(args):
    p1_grid = [float(v) for v in args.p1_grid.split(",")]
    p2_grid = [float(v) for v in args.p2_grid.split(",")]
    cfg_dict = {"p1_grid": p1_grid, "p2_grid": p2_grid, "seed": args.seed}
    _print_config(cfg_dict, {"checkpoint": args.checkpoint, "data": args.data, "out": args.out})
    f, h = load_checkpoint(args.checkpoint)
    dataset = make_dataset(args.data, with_clean=True, log=lambda msg: print(f"note: {msg}"))
    rows = sweep_pr3(f, h, dataset, p1_grid, p2_grid, seed=args.seed)
    os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p1", "p2", "psnr", "ssim"])
        for row in rows:
            writer.writerow([row["p1"], row["p2"], f"{row['psnr']:.4f}", f"{row['ssim']:.6f}"])
    print(f"wrote {len(rows)} grid points to {args.out}")
    return 0


# -- parser -----------------------------------------------------------------------


def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="i2v", description="Self-supervised blind denoiser toolkit")
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("train", formatter_class=fmt, help="train f and h on a directory of noisy images")
    p.add_argument("--data", required=True, help="directory of noisy PNG images")
    p.add_argument("--out", required=True, help="run directory for checkpoint and logs")
    p.add_argument("--config", default=None, help=f"JSON config (default: ${CONFIG_ENV})")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
    p.add_argument("--seed", type=int, default=None, help="seed override")
    p.add_argument("--log-every", type=int, default=50, help="steps between progress lines")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("denoise", formatter_class=fmt, help="denoise a directory with a trained checkpoint")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint file")
    p.add_argument("--in", required=True, help="directory of noisy PNG images")
    p.add_argument("--out", required=True, help="output directory for denoised PNGs")
    p.add_argument("--scheme", choices=_SCHEMES, default="pr3", help="denoising scheme")
    p.add_argument("--p1", type=float, default=0.4, help="replacement probability, first stage")
    p.add_argument("--p2", type=float, default=0.4, help="replacement probability, second stage")
    p.add_argument("--t", type=int, default=8, help="repetitions for the r3 scheme")
    p.add_argument("--p", type=float, default=0.16, help="replacement probability for r3")
    p.add_argument("--seed", type=int, default=0, help="mask seed")
    p.add_argument("--jobs", type=int, default=1, help="parallel image workers")
    p.set_defaults(fn=cmd_denoise)

    p = sub.add_parser("eval", formatter_class=fmt, help="score a denoised directory against clean references")
    p.add_argument("--denoised", required=True, help="directory of denoised PNG images")
    p.add_argument("--clean", required=True, help="directory of clean references")
    p.add_argument("--out", default=None, help="metrics CSV path (default: <denoised>/eval.csv)")
    p.add_argument("--jobs", type=int, default=1, help="parallel image workers")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("pd", formatter_class=fmt, help="apply pixel-shuffle downsampling to one image")
    p.add_argument("--in", required=True, help="input PNG or T32")
    p.add_argument("--out", required=True, help="output PNG or T32")
    p.add_argument("--stride", type=int, default=2, help="downsampling stride")
    p.add_argument("--seed", type=int, default=-1, help="order seed; negative = identity order")
    p.add_argument("--direction", choices=("forward", "inverse"), default="forward", help="shuffle direction")
    p.set_defaults(fn=cmd_pd)

    p = sub.add_parser("noisegen", formatter_class=fmt, help="make noisy/clean training pairs")
    p.add_argument("--clean", required=True, help="directory of clean PNG images")
    p.add_argument("--out", required=True, help="output directory for noisy/clean pairs")
    p.add_argument("--sigma", type=float, default=0.1, help="noise std on the [0,1] range")
    p.add_argument("--kernel", choices=sorted(_KERNELS), default="box3", help="smoothing kernel")
    p.add_argument("--gamma", type=float, default=0.0, help="signal-dependence strength")
    p.add_argument("--seed", type=int, default=0, help="noise seed")
    p.add_argument("--synth", type=int, default=0, help="synthesize this many clean images first")
    p.add_argument("--size", default="128x128", help="HxW for synthesized images")
    p.set_defaults(fn=cmd_noisegen)

    p = sub.add_parser("hist", formatter_class=fmt, help="export noise maps and magnitude histograms")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint file")
    p.add_argument("--image", required=True, help="input PNG or T32")
    p.add_argument("--strides", default="1,2,3,4,5", help="comma-separated shuffle strides")
    p.add_argument("--bins", type=int, default=50, help="histogram bin count")
    p.add_argument("--range-max", type=float, default=0.5, help="histogram magnitude range")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(fn=cmd_hist)

    p = sub.add_parser("sweep", formatter_class=fmt, help="grid-sweep pr3 probabilities over a dataset")
    p.add_argument("--checkpoint", required=True, help="trained checkpoint file")
    p.add_argument("--data", required=True, help="directory with noisy + .clean.png pairs")
    p.add_argument("--p1-grid", default="0.2,0.4,0.6", help="comma-separated first-stage probabilities")
    p.add_argument("--p2-grid", default="0.2,0.4,0.6", help="comma-separated second-stage probabilities")
    p.add_argument("--seed", type=int, default=0, help="mask seed")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(fn=cmd_sweep)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
