"""Rollout evaluation on the test split and comparison-table assembly.

Each evaluation produces one metrics row (position error at the reporting
horizons, angular error and log-perplexity where the method provides them)
plus per-timestep curves with interquartile bands. Errors are Euclidean
pixel distances; the squared flavor the training loss optimizes is reported
alongside under the *_mean_sq columns. Values at a horizon H come in two
forms: the error at timestep H-1 (pos_at_H) and the average over the first
H steps (pos_mean_H).
"""

import csv
from pathlib import Path

import numpy as np

from . import models
from .autodiff import ParameterSet, no_grad
from .baselines import FIT_WINDOW, StateVector, polyfit_extrapolate, state_mlp_rollout
from .checkpoint import load_checkpoint
from .dataset import fmt_float, load_manifest, load_split_arrays, read_truth
from .metrics import gaussian_nll_values, log_perplexity, pixel_errors, timestep_error_stats
from .training import batch_rollout, predicted_positions

IMAGE_METHODS = set(models.VARIANTS)
ROW_PREFIX = ["method", "case", "checkpoint"]


def params_from_checkpoint(ckpt):
    vcfg = models.VariantConfig(
        variant=ckpt.variant_config["variant"],
        resolution=ckpt.variant_config["resolution"],
        t0=ckpt.variant_config["t0"],
        state_channels=ckpt.variant_config["state_channels"],
        encoder_channels=tuple(ckpt.variant_config["encoder_channels"]),
        transition_hidden=ckpt.variant_config["transition_hidden"],
        lam_sig=ckpt.variant_config["lam_sig"],
        alpha_sig=ckpt.variant_config["alpha_sig"])
    params = ParameterSet()
    for name, arr in ckpt.params.items():
        params.add(name, arr)
    return params, vcfg


def evaluate_model(ckpt_path, dataset_dir, horizon=None, split="test",
                   batch_size=16, expect_variant=None):
    """Roll a trained checkpoint over a split and collect its predictions."""
    ckpt = load_checkpoint(ckpt_path)
    if ckpt.variant not in IMAGE_METHODS:
        raise ValueError(f"checkpoint variant {ckpt.variant!r} is not an image model")
    if expect_variant is not None and ckpt.variant != expect_variant:
        raise ValueError(f"checkpoint holds variant {ckpt.variant!r}, "
                         f"expected {expect_variant!r}")
    params, vcfg = params_from_checkpoint(ckpt)
    manifest = load_manifest(dataset_dir)
    if manifest["resolution"] != vcfg.resolution:
        raise ValueError(f"dataset resolution {manifest['resolution']} does not match "
                         f"the checkpoint's {vcfg.resolution}")
    if manifest["t0"] != vcfg.t0:
        raise ValueError("dataset context length does not match the checkpoint")
    horizon = horizon or manifest["eval_horizon"]
    if horizon > manifest["eval_horizon"]:
        raise ValueError("evaluation horizon exceeds the stored frames")
    anchor = ckpt.meta.get("anchor_index") if vcfg.variant == "anchored" else None
    data = load_split_arrays(dataset_dir, split, vcfg.t0, horizon,
                             manifest=manifest, final_index=anchor)
    if data["positions"].shape[0] == 0:
        raise ValueError(f"split {split!r} is empty")

    n = data["contexts"].shape[0]
    mus, beliefs, omegas = [], [], []
    with no_grad():
        for lo in range(0, n, batch_size):
            hi = min(lo + batch_size, n)
            finals = data.get("finals")
            preds, _ = batch_rollout(params, vcfg, data["contexts"][lo:hi], horizon,
                                     None if finals is None else finals[lo:hi])
            mus.append(predicted_positions(preds))
            if vcfg.is_gaussian:
                beliefs.append(np.stack(
                    [np.stack([p.belief.lam1.data, p.belief.lam2.data,
                               p.belief.theta.data], axis=-1) for p in preds], axis=1))
            if vcfg.has_angular:
                omegas.append(np.stack([p.omega.data for p in preds], axis=1))
    mu = np.concatenate(mus)
    result = {
        "method": ckpt.variant,
        "checkpoint": str(ckpt_path),
        "case": manifest["case"],
        "positions": mu,
        "gt_positions": data["positions"][:, :horizon],
        "errors": pixel_errors(mu, data["positions"][:, :horizon]),
    }
    if vcfg.is_gaussian:
        bel = np.concatenate(beliefs)
        result["nll"] = gaussian_nll_values(result["gt_positions"], mu,
                                            bel[..., 0], bel[..., 1], bel[..., 2])
    if vcfg.has_angular:
        om = np.concatenate(omegas)
        result["ang_errors"] = np.linalg.norm(om - data["omegas"][:, :horizon], axis=-1)
    return result


def evaluate_polyfit(degree, dataset_dir, horizon=None, split="test"):
    """Least-squares baseline: fit the first observed positions, extrapolate."""
    manifest = load_manifest(dataset_dir)
    horizon = horizon or manifest["eval_horizon"]
    t0 = manifest["t0"]
    root = Path(dataset_dir)
    preds, gts = [], []
    for entry in manifest["splits"][split]:
        truth = read_truth(root / entry["truth_file"])
        track = truth["px"][t0:t0 + horizon]
        if track.shape[0] < max(horizon, FIT_WINDOW):
            raise ValueError(f"{entry['id']}: not enough frames for the baseline")
        preds.append(polyfit_extrapolate(track[:FIT_WINDOW], degree, horizon))
        gts.append(track)
    preds, gts = np.array(preds), np.array(gts)
    method = "linear" if degree == 1 else "quadratic"
    return {"method": method, "checkpoint": f"polyfit_degree_{degree}",
            "case": manifest["case"], "positions": preds, "gt_positions": gts,
            "errors": pixel_errors(preds, gts)}


def evaluate_state_mlp(ckpt_path, dataset_dir, horizon=None, split="test"):
    """State-input baseline: seed with the first 4 ground-truth states."""
    ckpt = load_checkpoint(ckpt_path)
    if not ckpt.variant.startswith("state_mlp"):
        raise ValueError(f"checkpoint variant {ckpt.variant!r} is not a state MLP")
    with_angular = bool(ckpt.variant_config["with_angular"])
    params = ParameterSet()
    for name, arr in ckpt.params.items():
        params.add(name, arr)
    manifest = load_manifest(dataset_dir)
    horizon = horizon or manifest["eval_horizon"]
    t0 = manifest["t0"]
    root = Path(dataset_dir)
    resolution, half_extent = manifest["resolution"], manifest["half_extent"]
    preds, gts, angs, ang_gts = [], [], [], []
    for entry in manifest["splits"][split]:
        truth = read_truth(root / entry["truth_file"])
        context = [StateVector(screen_px=truth["px"][t0 + k], velocity=truth["v"][t0 + k],
                               bowl_a=entry["a"], bowl_gamma=entry["gamma"],
                               omega=truth["w"][t0 + k],
                               euler=np.asarray(entry["euler"]))
                   for k in range(4)]
        pos, om = state_mlp_rollout(context, params, horizon, resolution,
                                    half_extent, with_angular)
        preds.append(pos)
        gts.append(truth["px"][t0:t0 + horizon])
        if with_angular:
            angs.append(om)
            ang_gts.append(truth["w"][t0:t0 + horizon])
    preds, gts = np.array(preds), np.array(gts)
    out = {"method": ckpt.variant, "checkpoint": str(ckpt_path),
           "case": manifest["case"], "positions": preds, "gt_positions": gts,
           "errors": pixel_errors(preds, gts)}
    if with_angular:
        out["ang_errors"] = np.linalg.norm(np.array(angs) - np.array(ang_gts), axis=-1)
    return out


def metrics_row(result, report_horizons=None):
    """Condense an evaluation into one table row keyed by metric_horizon."""
    errors = result["errors"]
    total = errors.shape[1]
    if report_horizons is None:
        report_horizons = sorted({min(20, total), total})
    row = {"method": result["method"], "case": result["case"],
           "checkpoint": result["checkpoint"]}
    for h in report_horizons:
        if h > total:
            continue
        row[f"pos_at_{h}"] = float(errors[:, h - 1].mean())
        row[f"pos_mean_{h}"] = float(errors[:, :h].mean())
        row[f"pos_mean_sq_{h}"] = float((errors[:, :h] ** 2).mean())
        if "ang_errors" in result:
            row[f"ang_at_{h}"] = float(result["ang_errors"][:, h - 1].mean())
            row[f"ang_mean_sq_{h}"] = float((result["ang_errors"][:, :h] ** 2).mean())
        if "nll" in result:
            row[f"lnppl_{h}"] = log_perplexity(result["nll"][:, :h])
    return row


def write_curves(path, result):
    """Per-timestep mean and interquartile band of the pixel error."""
    curves = timestep_error_stats(result["errors"])
    extra = {}
    if "ang_errors" in result:
        extra["ang"] = timestep_error_stats(result["ang_errors"])
    if "nll" in result:
        extra["nll"] = timestep_error_stats(result["nll"])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        header = ["t", "pos_mean", "pos_p25", "pos_p75"]
        for key in extra:
            header += [f"{key}_mean", f"{key}_p25", f"{key}_p75"]
        writer.writerow(header)
        for t in range(len(curves)):
            row = [t, fmt_float(curves.mean[t]), fmt_float(curves.p25[t]),
                   fmt_float(curves.p75[t])]
            for key, cur in extra.items():
                row += [fmt_float(cur.mean[t]), fmt_float(cur.p25[t]),
                        fmt_float(cur.p75[t])]
            writer.writerow(row)


def _row_columns(rows):
    metric_keys = sorted({k for row in rows for k in row if k not in ROW_PREFIX},
                         key=_metric_sort_key)
    return ROW_PREFIX + metric_keys


def _metric_sort_key(key):
    stem, _, horizon = key.rpartition("_")
    order = {"pos_at": 0, "pos_mean": 1, "pos_mean_sq": 2, "ang_at": 3,
             "ang_mean_sq": 4, "lnppl": 5}
    return (int(horizon) if horizon.isdigit() else 0, order.get(stem, 9), key)


def write_rows_csv(path, rows):
    columns = _row_columns(rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(col)) for col in columns])


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, str):
        return value
    return fmt_float(value)


def read_rows_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        rows = []
        for raw in reader:
            row = {}
            for col, val in zip(columns, raw):
                if val == "":
                    continue
                row[col] = val if col in ROW_PREFIX else float(val)
            rows.append(row)
    return rows


def render_report(rows):
    """Aligned text comparison table; '-' marks metrics a method lacks.

    Columns appear only when some method fills them, so the perplexity
    block vanishes when no probabilistic model is present.
    """
    seen = set()
    for row in rows:
        key = (row["method"], row["case"])
        if key in seen:
            raise ValueError(f"duplicate row for method={key[0]!r} case={key[1]!r}")
        seen.add(key)
    if not rows:
        raise ValueError("no rows to report")
    metric_cols = [c for c in _row_columns(rows)
                   if c not in ROW_PREFIX and not c.startswith("pos_mean_sq")
                   and not c.startswith("ang_mean_sq")]
    headers = ["method", "case", "images"] + metric_cols
    lines = []
    for row in rows:
        images = "yes" if row["method"] in IMAGE_METHODS else "no"
        cells = [row["method"], row["case"], images]
        for col in metric_cols:
            val = row.get(col)
            cells.append("-" if val is None else f"{val:.3f}")
        lines.append(cells)
    widths = [max(len(h), *(len(line[i]) for line in lines))
              for i, h in enumerate(headers)]
    out = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    out.append("  ".join("-" * w for w in widths))
    for line in lines:
        out.append("  ".join(c.ljust(w) for c, w in zip(line, widths)).rstrip())
    return "\n".join(out) + "\n"
