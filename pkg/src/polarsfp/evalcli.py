"""Mean-Angular-Error metric, per-object reporting, and run configuration."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import dataio
from .errors import DataError, DimensionMismatch, EmptyMask
from .fresnel import Material, Mode
from .polcore import Mask, NormalMap
from .sfp_physics import ConvexityPrior, FixedBranch, Oracle, reconstruct_physics


def angular_error_degrees(pred: NormalMap, truth: NormalMap, mask: Mask):
    """Per-pixel angle between prediction and truth over the mask.

    Both fields are normalized defensively; zero-length predictions count as
    90 degrees. Returns (angles over mask, zero_pred_count).
    """
    if pred.vectors.shape != truth.vectors.shape or pred.vectors.shape[:2] != mask.bits.shape:
        raise DimensionMismatch("mae: shapes disagree")
    if not np.any(mask.bits):
        raise EmptyMask("mae over an empty mask")
    p = pred.vectors[mask.bits]
    t = truth.vectors[mask.bits]
    pn = np.linalg.norm(p, axis=1)
    tn = np.linalg.norm(t, axis=1)
    zero_pred = pn == 0
    p = p / np.where(zero_pred, 1.0, pn)[:, None]
    t = t / np.where(tn == 0, 1.0, tn)[:, None]
    dots = np.clip((p * t).sum(axis=1), -1.0, 1.0)
    angles = np.degrees(np.arccos(dots))
    angles[zero_pred] = 90.0
    return angles, int(np.count_nonzero(zero_pred))


def mae(pred: NormalMap, truth: NormalMap, mask: Mask) -> float:
    """Mean over the mask of arccos(<p, n>), in degrees."""
    angles, _ = angular_error_degrees(pred, truth, mask)
    return float(angles.mean())


@dataclass
class MaeReport:
    # (object_id, condition, view, mae_degrees, pixel_count) per sample
    per_sample: list
    per_object: dict      # object_id -> (pixel-weighted mae, sample-mean mae, pixels)
    whole_set: float      # pixel-weighted over every masked pixel
    whole_set_pixels: int
    zero_pred_pixels: int = 0

    def recombined_whole_set(self):
        """Pixel-weighted recombination of the per-sample rows."""
        total = sum(m * n for _, _, _, m, n in self.per_sample)
        count = sum(n for *_, n in self.per_sample)
        return total / count


def build_report(rows, zero_pred=0) -> MaeReport:
    """rows: (object_id, condition, view, mae_degrees, pixels)."""
    per_object = {}
    by_obj = {}
    for obj, cond, view, m, n in rows:
        by_obj.setdefault(obj, []).append((m, n))
    for obj, entries in sorted(by_obj.items()):
        pixels = sum(n for _, n in entries)
        px_weighted = sum(m * n for m, n in entries) / pixels
        sample_mean = sum(m for m, _ in entries) / len(entries)
        per_object[obj] = (px_weighted, sample_mean, pixels)
    total_px = sum(n for *_, n in rows)
    whole = sum(m * n for _, _, _, m, n in rows) / total_px
    return MaeReport(
        per_sample=list(rows),
        per_object=per_object,
        whole_set=whole,
        whole_set_pixels=total_px,
        zero_pred_pixels=zero_pred,
    )


def format_report(report: MaeReport) -> str:
    """Plain-text table, objects as rows plus a Whole Set row."""
    lines = [
        "MAE report (degrees; whole-set and per-object mae_px are pixel-weighted)",
        f"{'object':<20}{'mae_px':>10}{'mae_sample':>12}{'pixels':>10}",
    ]
    for obj, (px_weighted, sample_mean, pixels) in report.per_object.items():
        lines.append(f"{obj:<20}{px_weighted:>10.4f}{sample_mean:>12.4f}{pixels:>10}")
    lines.append(
        f"{'Whole Set':<20}{report.whole_set:>10.4f}{'':>12}{report.whole_set_pixels:>10}")
    return "\n".join(lines) + "\n"


def report_csv(report: MaeReport) -> str:
    lines = ["object,condition,view,mae_deg,pixels"]
    for obj, cond, view, m, n in report.per_sample:
        lines.append(f"{obj},{cond},{view},{m:.6f},{n}")
    return "\n".join(lines) + "\n"


def history_csv(history) -> str:
    lines = ["epoch,train_loss,val_loss"]
    for epoch, train_loss, val_loss in history:
        lines.append(f"{epoch},{train_loss:.6f},{val_loss:.6f}")
    return "\n".join(lines) + "\n"


def physics_predictor(eta=1.5, mode=Mode.DIFFUSE, policy="convexity", fixed_index=0):
    """A sample -> NormalMap predictor running the classical pipeline."""
    material = Material(eta=eta, mode=mode)

    def predict(sample: dataio.SampleRecord) -> NormalMap:
        if policy == "oracle":
            pol = Oracle(reference=sample.normals)
        elif policy == "convexity":
            rr, cc = np.nonzero(sample.mask.bits)
            pol = ConvexityPrior(center=(float(rr.mean()), float(cc.mean())))
        elif policy == "fixed":
            pol = FixedBranch(index=fixed_index)
        else:
            raise ValueError(f"unknown policy {policy!r}")
        return reconstruct_physics(sample.stack, sample.mask, material, pol).normal_map

    return predict


def net_predictor(checkpoint_path):
    """A sample -> NormalMap predictor running a trained U-Net checkpoint."""
    from .tinynet import Tensor, UNetConfig, infer_normals

    arrays, cfg = dataio.load_checkpoint(checkpoint_path)
    if cfg is None:
        raise DataError(f"{checkpoint_path}: missing .cfg sidecar")
    config = UNetConfig(
        depth=int(cfg["depth"]), base_width=int(cfg["base_width"]),
        in_channels=int(cfg["in_channels"]), out_channels=int(cfg["out_channels"]),
        l2_factor=float(cfg["l2_factor"]), seed=int(cfg["seed"]),
    )
    params = {name: Tensor(a, requires_grad=False) for name, a in arrays.items()}

    def predict(sample: dataio.SampleRecord) -> NormalMap:
        vec = infer_normals(config, params, sample.stack.intensities, sample.mask.bits)
        return NormalMap(vec, Mask(sample.mask.bits.copy()))

    return predict


def evaluate(dataset_root, predictor, objects=None) -> MaeReport:
    """Run the predictor over every (selected) sample under the dataset root."""
    rows = []
    zero_pred = 0
    for object_id, condition, view, directory in dataio.iter_sample_dirs(dataset_root):
        if objects is not None and object_id not in objects:
            continue
        sample = dataio.load_sample(directory, object_id, condition, view)
        pred = predictor(sample)
        angles, zp = angular_error_degrees(pred, sample.normals, sample.mask)
        rows.append((object_id, condition, view, float(angles.mean()), int(angles.size)))
        zero_pred += zp
    if not rows:
        raise DataError(f"no samples found under {dataset_root}")
    return build_report(rows, zero_pred)


# --- run configuration -----------------------------------------------------

KNOWN_KEYS = {
    "dataset", "out", "seed", "eta", "mode", "method", "policy", "fixed_index",
    "split", "checkpoint", "epochs", "batch_size", "learning_rate",
    "depth", "base_width", "l2_factor", "val_fraction",
    "height", "width", "noise_sigma", "n_scenes", "patch_side", "min_fg",
}


@dataclass
class RunConfig:
    """Flat key=value settings; unknown keys are rejected, CLI flags override."""

    values: dict = field(default_factory=dict)

    def set(self, key, value):
        if key not in KNOWN_KEYS:
            raise DataError(f"unknown config key {key!r}")
        self.values[key] = value

    def get(self, key, default=None):
        return self.values.get(key, default)

    @classmethod
    def from_file(cls, path):
        cfg = cls()
        with open(path) as f:
            for line_no, line in enumerate(f, 1):
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DataError(f"{path}:{line_no}: expected key=value")
                key, value = line.split("=", 1)
                cfg.set(key.strip(), value.strip())
        return cfg
