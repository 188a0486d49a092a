"""Command-line entry point: ``urcn simulate | train | evaluate``.

Exit codes: 0 success, 2 argument error, 3 numerical failure, 4 I/O error.
Every command writes ``manifest.json`` into its output directory echoing the
fully resolved configuration. Values from ``--config`` (a JSON object keyed
by option name) apply only where the matching flag was not given.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from . import container
from . import metrics as mt
from . import solvers
from ._backend import BACKEND
from .errors import ManifestMismatchError, TrainingError, TuningError
from .nets import FAMILIES, build_network, network_from_manifest
from .simulation import SPLITS, Dataset, build_dataset, simulate_split
from .training import CURVE_HEADER, AdamConfig, LossConfig, load_checkpoint, save_checkpoint, train

EXIT_OK, EXIT_ARGS, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

METRICS_HEADER = ("acceleration", "sample", "method", "mse", "psnr_db", "ssim")
AGGREGATE_HEADER = ("acceleration", "method", "n", "mse", "psnr_db", "ssim")
ESP_HEADER = ("acceleration", "sample", "method", "radius", "relative_error")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _parser(suppress=False):
    """Argument parser; ``suppress=True`` drops defaults to detect explicit flags."""

    def opt(p, *flags, default=None, **kw):
        p.add_argument(*flags, default=argparse.SUPPRESS if suppress else default, **kw)

    root = argparse.ArgumentParser(prog="urcn", description="Unrolled reconstruction networks.")
    root.add_argument("--version", action="version", version=f"urcn {__version__}")
    sub = root.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate train/val/test datasets")
    opt(sim, "--modality", choices=("mri", "ct"), default="mri")
    opt(sim, "--size", type=int, default=None, help="image side (default 64 for MRI, 128 for CT)")
    opt(sim, "--accel", type=float, default=4.0, help="MRI acceleration factor R")
    opt(sim, "--center-fraction", type=float, default=0.04)
    opt(sim, "--n-views", type=int, default=90, help="CT projection views")
    opt(sim, "--n-train", type=int, default=300)
    opt(sim, "--n-val", type=int, default=30)
    opt(sim, "--n-test", type=int, default=30)
    opt(sim, "--noise-sigma", type=float, default=0.0)
    opt(sim, "--phantom", choices=("random_ellipses", "shepp_logan"), default="random_ellipses")
    opt(sim, "--seed", type=int, default=0)
    opt(sim, "--out", default="data")

    tr = sub.add_parser("train", help="train an unrolled network")
    opt(tr, "--data", default="data", help="directory holding train.urcn and val.urcn")
    opt(tr, "--family", choices=sorted(FAMILIES), default="pdhg")
    opt(tr, "--state", choices=("I", "II", "III", "I_star"), default="I")
    opt(tr, "--n-stages", type=int, default=None)
    opt(tr, "--L", type=int, default=1, help="ADMM transform branches")
    opt(tr, "--epochs", type=int, default=10)
    opt(tr, "--lr", type=float, default=1e-3)
    opt(tr, "--batch-size", type=int, default=4)
    opt(tr, "--clip-norm", type=float, default=10.0)
    opt(tr, "--gamma", type=float, default=0.01, help="ISTA symmetry weight")
    opt(tr, "--seed", type=int, default=0)
    opt(tr, "--out", default="run")

    ev = sub.add_parser("evaluate", help="score a checkpoint against baselines")
    opt(ev, "--checkpoint", default="run/checkpoint.urcn")
    opt(ev, "--data", default="data")
    opt(ev, "--split", choices=SPLITS, default="test")
    opt(ev, "--sweep-accel", default=None, help="comma-separated R values (MRI)")
    opt(ev, "--solver-iters", type=int, default=100)
    opt(ev, "--lam", type=float, default=1e-3, help="Haar l1 weight for the classical baseline")
    opt(ev, "--n-images", type=int, default=4, help="samples exported as PGM")
    opt(ev, "--out", default="eval")

    for p in (sim, tr, ev):
        p.add_argument("--force", action="store_true", help="overwrite existing outputs")
        p.add_argument("--config", default=None, help="JSON file of option defaults")
    return root


def resolve_args(argv):
    """Parse ``argv`` and merge an optional JSON config under explicit flags."""
    args = _parser().parse_args(argv)
    explicit = set(vars(_parser(suppress=True).parse_args(argv)))
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise CliError(f"cannot read config {args.config}: {exc}", EXIT_IO) from exc
        except json.JSONDecodeError as exc:
            raise CliError(f"config {args.config} is not valid JSON: {exc}", EXIT_ARGS) from exc
        if not isinstance(cfg, dict):
            raise CliError("config file must hold a JSON object", EXIT_ARGS)
        for key, value in cfg.items():
            dest = key.replace("-", "_")
            if dest in ("command", "config", "force"):
                continue
            if not hasattr(args, dest):
                raise CliError(f"unknown config key {key!r} for {args.command}", EXIT_ARGS)
            if dest not in explicit:
                setattr(args, dest, value)
    return args


def _prepare_out(path, outputs, force):
    existing = [o for o in outputs if os.path.exists(os.path.join(path, o))]
    if existing and not force:
        raise CliError(f"{os.path.join(path, existing[0])} exists; pass --force to overwrite", EXIT_IO)
    os.makedirs(path, exist_ok=True)


def _write_manifest(path, args, extra=None):
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in ("force",)}
    doc = {"urcn_version": __version__, "kernel_backend": BACKEND, "config": cfg, **(extra or {})}
    with open(os.path.join(path, "manifest.json"), "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _load_split(data, split):
    path = os.path.join(data, f"{split}.urcn")
    if not os.path.exists(path):
        raise CliError(f"dataset file {path} not found", EXIT_IO)
    return Dataset.load(path)


# -- commands ---------------------------------------------------------------------

def cmd_simulate(args):
    if min(args.n_train, args.n_val, args.n_test) < 0:
        raise CliError("sample counts must be >= 0", EXIT_ARGS)
    if args.size is None:
        args.size = 64 if args.modality == "mri" else 128
    _prepare_out(args.out, [f"{s}.urcn" for s in SPLITS] + ["manifest.json"], args.force)
    kwargs = {"size": args.size, "noise_sigma": args.noise_sigma, "phantom": args.phantom}
    if args.modality == "mri":
        kwargs.update(acceleration=args.accel, center_fraction=args.center_fraction)
    else:
        kwargs.update(n_views=args.n_views)
    paths = build_dataset(args.out, args.n_train, args.n_val, args.n_test, args.modality, args.seed, **kwargs)
    _write_manifest(args.out, args, {"files": {k: os.path.basename(v) for k, v in paths.items()}})
    print(f"wrote {', '.join(sorted(paths.values()))}")


def cmd_train(args):
    train_set = _load_split(args.data, "train")
    val_path = os.path.join(args.data, "val.urcn")
    val_set = Dataset.load(val_path) if os.path.exists(val_path) else None
    if len(train_set) == 0:
        raise CliError("training split is empty", EXIT_ARGS)
    if args.family != "pdhg" and args.state == "I_star":
        raise CliError("state I_star exists only for the pdhg family", EXIT_ARGS)
    options = {"L": args.L} if args.family == "admm" else {}
    net = build_network(args.family, args.state, args.n_stages, train_set.channels, args.seed, **options)
    args.n_stages = net.n_stages
    _prepare_out(args.out, ["checkpoint.urcn", "final.urcn", "loss.csv", "manifest.json"], args.force)
    loss_cfg = LossConfig.for_network(net, gamma=args.gamma)
    adam_cfg = AdamConfig(lr=args.lr, batch_size=args.batch_size, clip_norm=args.clip_norm)
    extra = {"network": net.manifest(), "loss": loss_cfg.kind, "gradient_clip_norm": args.clip_norm,
             "dataset": train_set.attrs}
    try:
        result = train(net, train_set, val_set, loss_cfg, adam_cfg, args.epochs, args.seed,
                       callback=lambda e, tl, vl: print(f"epoch {e:4d}  train {tl:.6g}  val {vl:.6g}"))
    except TrainingError as exc:
        save_checkpoint(os.path.join(args.out, "checkpoint.urcn"), net, exc.checkpoint, {"status": "diverged"})
        mt.write_csv(os.path.join(args.out, "loss.csv"), CURVE_HEADER,
                     [{"epoch": e, "train_loss": tl, "val_loss": vl} for e, tl, _, vl in exc.curve])
        _write_manifest(args.out, args, {**extra, "status": "diverged", "error": str(exc)})
        raise CliError(str(exc), EXIT_NUMERIC) from exc
    meta = {"best_epoch": result.best_epoch, "best_val": result.best_val}
    save_checkpoint(os.path.join(args.out, "checkpoint.urcn"), net, result.checkpoint, meta)
    save_checkpoint(os.path.join(args.out, "final.urcn"), net, result.final_state, {"epochs": args.epochs})
    mt.write_csv(os.path.join(args.out, "loss.csv"), CURVE_HEADER, result.curve_rows())
    _write_manifest(args.out, args, {**extra, **meta, "status": "ok"})
    print(f"best epoch {result.best_epoch}, validation loss {result.best_val:.6g}")


def load_network(path, channels=None):
    """Rebuild a network from a checkpoint; raises ManifestMismatchError on any inconsistency."""
    if not os.path.exists(path):
        raise CliError(f"checkpoint {path} not found", EXIT_IO)
    state, attrs = load_checkpoint(path)
    manifest = attrs.get("network")
    if manifest is None:
        raise ManifestMismatchError(f"{path} carries no network manifest")
    net = network_from_manifest(manifest)
    if net.parameter_count() != manifest["parameter_count"]:
        raise ManifestMismatchError("manifest parameter count does not match the rebuilt network")
    try:
        net.params.load_state_dict(state, strict=True)
    except (KeyError, ValueError) as exc:
        raise ManifestMismatchError(f"checkpoint parameters do not fit the manifest: {exc}") from exc
    if channels is not None and net.channels != channels:
        raise ManifestMismatchError(f"network expects {net.channels} channel(s), data has {channels}")
    return net


def _classical(family, A, f, cfg, n_iters):
    if family == "pdhg":
        return solvers.pdhg_solve(A, f, cfg, n_iters=n_iters).m
    if family == "admm":
        return solvers.admm_solve(A, f, cfg, n_iters=n_iters).m
    return solvers.ista_solve(A, f, cfg, n_iters=n_iters).m


def reconstruct_all(net, ds, cfg, n_iters):
    """``{method: (N, H, W, C) array}`` for the network and the baselines."""
    recs = {"network": [], "zero_filled": [], f"classical_{net.family}": []}
    if ds.modality == "ct":
        recs["fbp"] = []
    for i in range(len(ds)):
        A, f, _ = ds.batch([i])
        recs["network"].append(net(A, f).data[0])
        recs["zero_filled"].append(solvers.zero_filled(A, f)[0])
        recs[f"classical_{net.family}"].append(_classical(net.family, A, f, cfg, n_iters)[0])
        if ds.modality == "ct":
            recs["fbp"].append(solvers.fbp_reconstruct(A, f)[0])
    return {k: np.array(v).reshape((len(ds),) + ds.m_ref.shape[1:]) for k, v in recs.items()}


def cmd_evaluate(args):
    ds = _load_split(args.data, args.split)
    net = load_network(args.checkpoint, ds.channels)
    _prepare_out(args.out, ["metrics.csv", "aggregate.csv", "esp.csv", "manifest.json"], args.force)
    if args.sweep_accel:
        if ds.modality != "mri":
            raise CliError("--sweep-accel applies to MRI datasets only", EXIT_ARGS)
        try:
            accels = [float(r) for r in args.sweep_accel.split(",") if r.strip()]
        except ValueError as exc:
            raise CliError(f"bad --sweep-accel list {args.sweep_accel!r}", EXIT_ARGS) from exc
        a = ds.attrs
        sets = [(r, simulate_split("mri", len(ds), a["seed"], a["size"], r, noise_sigma=a["noise_sigma"],
                                   phantom=a["phantom"], center_fraction=a["center_fraction"]))
                for r in accels]
    else:
        sets = [(ds.attrs.get("acceleration", ds.attrs.get("n_views")), ds)]
    cfg = solvers.SparsityConfig("haar_wavelet", lam=args.lam)
    rows, agg_rows, esp_rows = [], [], []
    img_dir = os.path.join(args.out, "images")
    for accel, d in sets:
        recs = reconstruct_all(net, d, cfg, args.solver_iters)
        for method, images in recs.items():
            reports = [mt.evaluate_image(images[i], d.m_ref[i]) for i in range(len(d))]
            for i, rep in enumerate(reports):
                rows.append({"acceleration": accel, "sample": i, "method": method, **rep.row()})
                esp_rows += [{"acceleration": accel, "sample": i, "method": method, "radius": r,
                              "relative_error": v} for r, v in rep.esp]
            agg_rows.append({"acceleration": accel, "method": method, "n": len(reports),
                             **{k: mt.aggregate([r.row()[k] for r in reports]) for k in ("mse", "psnr_db", "ssim")}})
        n_img = min(args.n_images, len(d))
        if n_img:
            os.makedirs(img_dir, exist_ok=True)
        for i in range(n_img):
            tag = f"R{accel:g}_" if args.sweep_accel else ""
            container.write_pgm(os.path.join(img_dir, f"{tag}sample{i:03d}_reference.pgm"), d.m_ref[i])
            for method, images in recs.items():
                container.write_pgm(os.path.join(img_dir, f"{tag}sample{i:03d}_{method}.pgm"), images[i])
    mt.write_csv(os.path.join(args.out, "metrics.csv"), METRICS_HEADER, rows)
    mt.write_csv(os.path.join(args.out, "aggregate.csv"), AGGREGATE_HEADER, agg_rows)
    mt.write_csv(os.path.join(args.out, "esp.csv"), ESP_HEADER, esp_rows)
    _write_manifest(args.out, args, {"network": net.manifest(), "dataset": ds.attrs})
    for r in agg_rows:
        print(f"R={r['acceleration']}  {r['method']:<16s} PSNR {r['psnr_db']:.2f} dB  SSIM {r['ssim']:.4f}")


COMMANDS = {"simulate": cmd_simulate, "train": cmd_train, "evaluate": cmd_evaluate}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = resolve_args(argv)
        COMMANDS[args.command](args)
    except SystemExit as exc:  # argparse usage errors
        return int(exc.code or 0)
    except CliError as exc:
        print(f"urcn: error: {exc}", file=sys.stderr)
        return exc.code
    except (TrainingError, TuningError, FloatingPointError) as exc:
        print(f"urcn: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"urcn: error: {exc}", file=sys.stderr)
        return EXIT_ARGS
    except OSError as exc:
        print(f"urcn: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
