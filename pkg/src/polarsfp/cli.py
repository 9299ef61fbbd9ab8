"""Command-line interface.

Verbs: render, fit, reconstruct, train, infer, eval, export-png.
Exit codes: 0 success, 1 usage error, 2 data/config/IO error. Diagnostics go
to stderr; results go to files or stdout.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dataio, evalcli, synth
from .errors import PolarSfpError
from .fresnel import Mode
from .polcore import fit_stack


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _add_common(p):
    p.add_argument("--config", help="key=value config file; CLI flags override it")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.add_argument("--eta", type=float, help="refractive index (default 1.5)")
    p.add_argument("--mode", choices=["diffuse", "specular"], help="reflection mode")
    p.add_argument("--out", help="output file or directory")


def build_parser():
    parser = _Parser(prog="polarsfp", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("render", help="render a synthetic dataset")
    _add_common(p)
    p.add_argument("--n-scenes", type=int, dest="n_scenes")
    p.add_argument("--height", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--noise-sigma", type=float, dest="noise_sigma")

    p = sub.add_parser("fit", help="fit the polarization sinusoid of one sample")
    _add_common(p)
    p.add_argument("--sample", required=True, help="sample directory")

    p = sub.add_parser("reconstruct", help="reconstruct normals for one sample")
    _add_common(p)
    p.add_argument("--sample", required=True)
    p.add_argument("--method", choices=["physics", "net"])
    p.add_argument("--policy", help="oracle | convexity | fixed:<i>")
    p.add_argument("--checkpoint")

    p = sub.add_parser("train", help="train the U-Net on a dataset")
    _add_common(p)
    p.add_argument("--dataset", help="dataset root (or set dataset= in --config)")
    p.add_argument("--split", help="object_id<TAB>train|test file; default: all train")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--depth", type=int)
    p.add_argument("--base-width", type=int, dest="base_width")
    p.add_argument("--l2-factor", type=float, dest="l2_factor")

    p = sub.add_parser("infer", help="predict normals with a trained checkpoint")
    _add_common(p)
    p.add_argument("--sample", required=True)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("eval", help="MAE report over a dataset's test objects")
    _add_common(p)
    p.add_argument("--dataset", help="dataset root (or set dataset= in --config)")
    p.add_argument("--method", choices=["physics", "net"])
    p.add_argument("--policy")
    p.add_argument("--checkpoint")
    p.add_argument("--split")

    p = sub.add_parser("export-png", help="export a sample's normals as 8-bit PNG")
    _add_common(p)
    p.add_argument("--sample", required=True)

    return parser


def _settings(args):
    """Merge config file and CLI flags; CLI wins."""
    cfg = evalcli.RunConfig()
    if getattr(args, "config", None):
        cfg = evalcli.RunConfig.from_file(args.config)
    for key in evalcli.KNOWN_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg.values[key] = value
    return cfg


def _policy_parts(cfg):
    policy = str(cfg.get("policy", "convexity"))
    if policy.startswith("fixed:"):
        return "fixed", int(policy.split(":", 1)[1])
    if policy == "fixed":
        return "fixed", int(cfg.get("fixed_index", 0))
    return policy, 0


def _predictor(cfg):
    method = str(cfg.get("method", "physics"))
    if method == "net":
        checkpoint = cfg.get("checkpoint")
        if not checkpoint:
            raise PolarSfpError("method 'net' needs --checkpoint")
        return evalcli.net_predictor(checkpoint)
    policy, fixed_index = _policy_parts(cfg)
    mode = Mode(str(cfg.get("mode", "diffuse")))
    return evalcli.physics_predictor(
        eta=float(cfg.get("eta", 1.5)), mode=mode, policy=policy, fixed_index=fixed_index)


def _load_sample_arg(path):
    p = Path(path)
    if not p.is_dir():
        raise PolarSfpError(f"sample directory not found: {p}")
    return dataio.load_sample(p)


def run(args) -> int:
    cfg = _settings(args)
    out = cfg.get("out")

    if args.verb == "render":
        if out is None:
            raise PolarSfpError("render needs --out")
        config = synth.RenderConfig(
            height=int(cfg.get("height", 128)),
            width=int(cfg.get("width", 128)),
            noise_sigma=float(cfg.get("noise_sigma", 0.0)),
            seed=int(cfg.get("seed", 0)),
        )
        synth.make_dataset(
            int(cfg.get("n_scenes", 8)), config, out,
            seed=int(cfg.get("seed", 0)), eta=float(cfg.get("eta", 1.5)),
            mode=Mode(str(cfg.get("mode", "diffuse"))),
        )
        print(f"wrote dataset to {out}", file=sys.stderr)
        return 0

    if args.verb == "fit":
        sample = _load_sample_arg(args.sample)
        pmap = fit_stack(sample.stack, sample.mask)
        out_dir = Path(out or args.sample)
        out_dir.mkdir(parents=True, exist_ok=True)
        dataio.write_raster(pmap.phi, out_dir / "phi.psfp")
        dataio.write_raster(pmap.rho, out_dir / "rho.psfp")
        dataio.write_raster(pmap.intensity, out_dir / "intensity.psfp")
        dataio.write_raster(pmap.valid.astype(np.float64), out_dir / "valid.psfp")
        print(f"wrote polarization maps to {out_dir}", file=sys.stderr)
        return 0

    if args.verb == "reconstruct" or args.verb == "infer":
        sample = _load_sample_arg(args.sample)
        if args.verb == "infer":
            cfg.values.setdefault("method", "net")
        pred = _predictor(cfg)(sample)
        out_dir = Path(out or args.sample)
        out_dir.mkdir(parents=True, exist_ok=True)
        dataio.write_raster(pred.vectors, out_dir / "normals_pred.psfp")
        print(f"wrote normals_pred.psfp to {out_dir}", file=sys.stderr)
        return 0

    if args.verb == "train":
        from .tinynet import UNetConfig, train as train_net

        if cfg.get("dataset") is None:
            raise PolarSfpError("train needs --dataset (flag or config file)")
        root = Path(str(cfg.get("dataset")))
        if not root.is_dir():
            raise PolarSfpError(f"dataset not found: {root}")
        if cfg.get("split"):
            spec = dataio.read_split_file(cfg.get("split"))
            keep = spec.train_objects
        else:
            keep = None
        patches = []
        for object_id, condition, view, directory in dataio.iter_sample_dirs(root):
            if keep is not None and object_id not in keep:
                continue
            sample = dataio.load_sample(directory, object_id, condition, view)
            patches.extend(dataio.extract_patches(
                sample, side=int(cfg.get("patch_side", 64)),
                min_fg=float(cfg.get("min_fg", 0.05))))
        config = UNetConfig(
            depth=int(cfg.get("depth", 3)),
            base_width=int(cfg.get("base_width", 8)),
            l2_factor=float(cfg.get("l2_factor", 1e-4)),
            seed=int(cfg.get("seed", 0)),
        )
        params, history = train_net(
            config, patches,
            epochs=int(cfg.get("epochs", 5)),
            batch_size=int(cfg.get("batch_size", 32)),
            val_fraction=float(cfg.get("val_fraction", 0.2)),
            seed=int(cfg.get("seed", 0)),
            learning_rate=float(cfg.get("learning_rate", 1e-4)),
            log=lambda msg: print(msg, file=sys.stderr),
        )
        ckpt = Path(out or "checkpoint.psfp")
        ckpt.parent.mkdir(parents=True, exist_ok=True)
        dataio.save_checkpoint(
            ckpt, {name: p.values for name, p in params.items()},
            config={
                "depth": config.depth, "base_width": config.base_width,
                "in_channels": config.in_channels, "out_channels": config.out_channels,
                "l2_factor": config.l2_factor, "seed": config.seed,
            })
        with open(str(ckpt) + ".history.csv", "w") as f:
            f.write(evalcli.history_csv(history))
        print(f"wrote checkpoint {ckpt}", file=sys.stderr)
        return 0

    if args.verb == "eval":
        if cfg.get("dataset") is None:
            raise PolarSfpError("eval needs --dataset (flag or config file)")
        root = Path(str(cfg.get("dataset")))
        if not root.is_dir():
            raise PolarSfpError(f"dataset not found: {root}")
        objects = None
        if cfg.get("split"):
            objects = dataio.read_split_file(cfg.get("split")).test_objects
        report = evalcli.evaluate(root, _predictor(cfg), objects=objects)
        text = evalcli.format_report(report)
        sys.stdout.write(text)
        if out:
            out_dir = Path(out)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "report.txt").write_text(text)
            (out_dir / "report.csv").write_text(evalcli.report_csv(report))
            print(f"wrote report to {out_dir}", file=sys.stderr)
        return 0

    if args.verb == "export-png":
        sample = _load_sample_arg(args.sample)
        target = Path(out or (Path(args.sample) / "normals.png"))
        if target.is_dir():
            target = target / "normals.png"
        dataio.write_normal_png(sample.normals, target)
        print(f"wrote {target}", file=sys.stderr)
        return 0

    raise PolarSfpError(f"unhandled verb {args.verb}")  # pragma: no cover


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return run(args)
    except (PolarSfpError, OSError, ValueError, KeyError) as exc:
        print(f"polarsfp {args.verb}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
