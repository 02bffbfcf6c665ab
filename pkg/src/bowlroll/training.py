"""Minibatch training with validation-driven learning-rate decay and early
stopping. The schedule tracks the validation position error: after
lr_patience epochs without improvement the learning rate divides by 10,
after stop_patience epochs training halts, and the checkpoint that is kept
is the best-validation one, not the last."""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import models
from .autodiff import backward_pass, no_grad
from .baselines import (CONTEXT_STATES, StateVector, init_state_mlp,
                        state_mlp_forward, state_feature_dim, state_output_dim)
from .checkpoint import Checkpoint, save_checkpoint
from .dataset import fmt_float, load_manifest, load_split_arrays, read_truth
from .losses import RolloutTargets, sequence_loss
from .metrics import pixel_errors
from .optim import RMSProp

VARIANT_STREAM = {name: i for i, name in enumerate(models.VARIANTS)}


class TrainingAborted(RuntimeError):
    def __init__(self, message, checkpoint_path):
        super().__init__(message)
        self.checkpoint_path = checkpoint_path


class PatienceSchedule:
    """Counters behind the learning-rate decay and the stopping rule.

    Call start_epoch() before each epoch: it may first divide the learning
    rate (lr_patience epochs since the last improvement or decay) and then
    signal a stop (stop_patience epochs since the last improvement). Record
    each epoch's validation value with observe().
    """

    def __init__(self, learning_rate, lr_patience, stop_patience):
        self.learning_rate = learning_rate
        self.lr_patience = lr_patience
        self.stop_patience = stop_patience
        self.best = np.inf
        self.since_improve = 0
        self.since_improve_or_drop = 0

    def start_epoch(self):
        """-> (lr_dropped, should_stop) for the epoch about to run."""
        dropped = False
        if self.since_improve_or_drop >= self.lr_patience:
            self.learning_rate /= 10.0
            self.since_improve_or_drop = 0
            dropped = True
        stop = self.since_improve >= self.stop_patience
        return dropped, stop

    def observe(self, value):
        if value < self.best:
            self.best = value
            self.since_improve = 0
            self.since_improve_or_drop = 0
            return True
        self.since_improve += 1
        self.since_improve_or_drop += 1
        return False


def batch_rollout(params, vcfg, contexts, horizon, finals=None):
    """Encode a batch of context stacks and roll the latent state forward."""
    final_mu = None
    if vcfg.variant == "anchored":
        h0, final_mu = models.interp_encode(contexts, finals, params, vcfg)
    else:
        h0 = models.encode_frames(contexts, params, vcfg)
    preds = models.rollout(h0, horizon, params, vcfg)
    return preds, final_mu


# -- dihedral augmentation -----------------------------------------------------
# Rotating the scene about z by a quarter turn or mirroring it maps valid
# dynamics to valid dynamics and is exact on the pixel grid, so training can
# multiply its 512 scenes by the 8 square symmetries for free. Frames are
# (..., H, W, 3) with row = y and col = x.

def _frame_op(k_rot, flip):
    def op(frames):
        out = np.rot90(frames, k_rot, axes=(-3, -2)) if k_rot else frames
        if flip:
            out = np.flip(out, axis=-2)
        return np.ascontiguousarray(out)
    return op


def _coord_op(k_rot, flip, w):
    def op(px):
        x, y = px[..., 0].copy(), px[..., 1].copy()
        for _ in range(k_rot):       # matches _frame_op's rot90: (x, y) -> (y, -x)
            x, y = y, w - x
        if flip:                     # mirror in x
            x = w - x
        return np.stack([x, y], axis=-1)
    return op


def _omega_op(k_rot, flip):
    def op(om):
        x, y, z = om[..., 0].copy(), om[..., 1].copy(), om[..., 2].copy()
        for _ in range(k_rot):
            x, y = y, -x
        if flip:                     # omega is a pseudovector under mirrors
            x, y, z = x, -y, -z
        return np.stack([x, y, z], axis=-1)
    return op


DIHEDRAL = [(k, f) for f in (False, True) for k in range(4)]


def apply_dihedral(g, resolution, contexts, positions, omegas=None, finals=None):
    """Transform one sample's frames and targets by group element g (0..7)."""
    k_rot, flip = DIHEDRAL[g]
    if g == 0:
        return contexts, positions, omegas, finals
    fop = _frame_op(k_rot, flip)
    cop = _coord_op(k_rot, flip, resolution)
    out_omega = None if omegas is None else _omega_op(k_rot, flip)(omegas)
    out_final = None if finals is None else fop(finals)
    return fop(contexts), cop(positions), out_omega, out_final


def _augmented_batch(config, train, idx, gs, horizon):
    """Assemble one training batch, per-sample dihedral transforms applied."""
    finals = train.get("finals")
    contexts = train["contexts"][idx]
    positions = train["positions"][idx, :horizon]
    omegas = train["omegas"][idx, :horizon]
    fin = None if finals is None else finals[idx]
    if not config.augment_dihedral or not gs.any():
        return contexts, positions, omegas, fin
    out_c, out_p, out_o = [], [], []
    out_f = None if fin is None else []
    for j, g in enumerate(gs):
        c, p, o, f = apply_dihedral(int(g), config.resolution, contexts[j],
                                    positions[j], omegas[j],
                                    None if fin is None else fin[j])
        out_c.append(c)
        out_p.append(p)
        out_o.append(o)
        if out_f is not None:
            out_f.append(f)
    return (np.stack(out_c), np.stack(out_p), np.stack(out_o),
            None if out_f is None else np.stack(out_f))


def predicted_positions(preds):
    return np.stack([p.mu.data for p in preds], axis=1)


def validation_error(params, vcfg, data, horizon, batch_size):
    """Mean Euclidean pixel error over the split at the given horizon."""
    n = data["contexts"].shape[0]
    errs = []
    with no_grad():
        for lo in range(0, n, batch_size):
            hi = min(lo + batch_size, n)
            finals = data.get("finals")
            preds, _ = batch_rollout(params, vcfg, data["contexts"][lo:hi], horizon,
                                     None if finals is None else finals[lo:hi])
            mu = predicted_positions(preds)
            errs.append(pixel_errors(mu, data["positions"][lo:hi, :horizon]))
    return float(np.concatenate(errs).mean())


@dataclass
class TrainResult:
    checkpoint_path: str
    log_path: str
    epochs_run: int
    best_val: float
    epoch0_val: float
    history: list = field(default_factory=list)


def train_model(config, variant, dataset_dir, out_dir, horizon=None,
                max_epochs=None):
    """Train one predictor variant on a generated dataset.

    Returns a TrainResult; the checkpoint holds the best-validation
    parameters together with the optimizer state at that point.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    horizon = horizon or config.train_horizon
    max_epochs = config.max_epochs if max_epochs is None else max_epochs
    vcfg = config.variant_config(variant)
    manifest = load_manifest(dataset_dir)
    if manifest["resolution"] != config.resolution:
        raise ValueError("dataset resolution does not match the config")
    if horizon > manifest["eval_horizon"]:
        raise ValueError("training horizon exceeds the stored frames")
    anchor = config.t0 + horizon - 1 if variant == "anchored" else None
    train = load_split_arrays(dataset_dir, "train", config.t0, horizon,
                              manifest=manifest, final_index=anchor)
    val = load_split_arrays(dataset_dir, "val", config.t0, horizon,
                            manifest=manifest, final_index=anchor)

    init_rng = np.random.default_rng([config.seed, 100, VARIANT_STREAM[variant]])
    shuffle_rng = np.random.default_rng([config.seed, 101, VARIANT_STREAM[variant]])
    params = models.init_params(vcfg, init_rng, init_std=config.init_std)
    optimizer = RMSProp(params, config.learning_rate)
    schedule = PatienceSchedule(config.learning_rate, config.lr_patience,
                                config.stop_patience)

    ckpt_path = out / f"{variant}.ckpt"
    log_path = out / f"{variant}_train_log.csv"
    history = []
    best_snapshot = (params.copy_data(), optimizer.state_blobs())
    best_epoch = 0
    log_fh = open(log_path, "w", newline="")
    log_writer = csv.writer(log_fh)
    log_writer.writerow(["epoch", "lr", "train_loss", "val_error", "best_val", "event"])

    def log_row(epoch, lr, train_loss, val_err, event):
        history.append({"epoch": epoch, "lr": lr, "train_loss": train_loss,
                        "val_error": val_err, "best_val": schedule.best,
                        "event": event})
        log_writer.writerow([epoch, fmt_float(lr), fmt_float(train_loss),
                             fmt_float(val_err), fmt_float(schedule.best), event])
        log_fh.flush()

    val0 = validation_error(params, vcfg, val, horizon, config.batch_size)
    schedule.observe(val0)
    log_row(0, schedule.learning_rate, float("nan"), val0, "init")

    n_train = train["contexts"].shape[0]
    epochs_run = 0
    abort_message = None
    for epoch in range(1, max_epochs + 1):
        dropped, stop = schedule.start_epoch()
        event = []
        if dropped:
            optimizer.learning_rate = schedule.learning_rate
            event.append("lr_drop")
        if stop:
            event.append("stop")
            log_row(epoch, schedule.learning_rate, float("nan"), float("nan"),
                    "+".join(event))
            break
        order = shuffle_rng.permutation(n_train)
        gs = shuffle_rng.integers(0, 8, size=n_train) if config.augment_dihedral \
            else np.zeros(n_train, dtype=int)
        total_loss = 0.0
        try:
            for lo in range(0, n_train, config.batch_size):
                idx = order[lo:lo + config.batch_size]
                finals = train.get("finals")
                contexts, positions, omegas, fin = _augmented_batch(
                    config, train, idx, gs[lo:lo + config.batch_size], horizon)
                preds, final_mu = batch_rollout(params, vcfg, contexts, horizon, fin)
                targets = RolloutTargets(positions=positions, omegas=omegas)
                report = sequence_loss(preds, targets, vcfg,
                                       lam_reg=config.lam_reg, final_mu=final_mu)
                grads = backward_pass(report.total, params)
                optimizer.step(params, grads)
                total_loss += float(report.total.data) * len(idx)
        except FloatingPointError as exc:
            abort_message = f"aborted at epoch {epoch}: {exc}"
            log_row(epoch, schedule.learning_rate, float("nan"), float("nan"), "abort")
            break
        epochs_run = epoch
        train_loss = total_loss / n_train
        val_err = validation_error(params, vcfg, val, horizon, config.batch_size)
        if schedule.observe(val_err):
            best_snapshot = (params.copy_data(), optimizer.state_blobs())
            best_epoch = epoch
            event.append("best")
        log_row(epoch, schedule.learning_rate, train_loss, val_err,
                "+".join(event) if event else "")

    log_fh.close()
    blobs, (opt_acc, opt_scalars) = best_snapshot
    ckpt = Checkpoint(
        variant=variant,
        variant_config=_vcfg_dict(vcfg),
        params=blobs,
        optimizer={"scalars": opt_scalars, "acc": opt_acc},
        meta={"train_horizon": horizon, "anchor_index": anchor,
              "best_epoch": best_epoch, "best_val": schedule.best,
              "epoch0_val": val0, "epochs_run": epochs_run,
              "seed": config.seed, "case": config.case,
              "resolution": config.resolution,
              "half_extent": config.half_extent},
    )
    save_checkpoint(ckpt_path, ckpt)
    if abort_message is not None:
        raise TrainingAborted(abort_message, str(ckpt_path))
    return TrainResult(checkpoint_path=str(ckpt_path), log_path=str(log_path),
                       epochs_run=epochs_run, best_val=schedule.best,
                       epoch0_val=val0, history=history)


def _vcfg_dict(vcfg):
    return {"variant": vcfg.variant, "resolution": vcfg.resolution, "t0": vcfg.t0,
            "state_channels": vcfg.state_channels,
            "encoder_channels": list(vcfg.encoder_channels),
            "transition_hidden": vcfg.transition_hidden,
            "lam_sig": vcfg.lam_sig, "alpha_sig": vcfg.alpha_sig}


# -- state-input baseline ------------------------------------------------------

def state_windows_from_truth(truth, entry, with_angular):
    """All (context, target-delta) one-step windows of one sequence."""
    n = truth["px"].shape[0]
    feats, deltas = [], []
    for start in range(n - CONTEXT_STATES):
        states = [StateVector(screen_px=truth["px"][k], velocity=truth["v"][k],
                              bowl_a=entry["a"], bowl_gamma=entry["gamma"],
                              omega=truth["w"][k], euler=np.asarray(entry["euler"]))
                  for k in range(start, start + CONTEXT_STATES)]
        feats.append(np.concatenate([s.features(with_angular) for s in states]))
        tgt = truth["v"][start + CONTEXT_STATES] - truth["v"][start + CONTEXT_STATES - 1]
        if with_angular:
            dw = truth["w"][start + CONTEXT_STATES] - truth["w"][start + CONTEXT_STATES - 1]
            tgt = np.concatenate([tgt, dw])
        deltas.append(tgt)
    return np.array(feats), np.array(deltas)


def train_state_mlp(config, dataset_dir, out_dir, with_angular=False,
                    epochs=40, learning_rate=1e-3):
    """Teacher-forced one-step training of the state-input baseline."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    root = Path(dataset_dir)
    manifest = load_manifest(root)
    feats, deltas = [], []
    for entry in manifest["splits"]["train"]:
        truth = read_truth(root / entry["truth_file"])
        f, d = state_windows_from_truth(truth, entry, with_angular)
        feats.append(f)
        deltas.append(d)
    feats = np.concatenate(feats)
    deltas = np.concatenate(deltas)

    name = "state_mlp_av" if with_angular else "state_mlp"
    rng = np.random.default_rng([config.seed, 102, int(with_angular)])
    shuffle_rng = np.random.default_rng([config.seed, 103, int(with_angular)])
    params = init_state_mlp(rng, with_angular, init_std=config.init_std)
    optimizer = RMSProp(params, learning_rate)
    n = feats.shape[0]
    losses = []
    for _ in range(epochs):
        order = shuffle_rng.permutation(n)
        total = 0.0
        for lo in range(0, n, 256):
            idx = order[lo:lo + 256]
            pred = state_mlp_forward(feats[idx], params)
            d = pred - deltas[idx]
            loss = (d * d).sum(axis=1).mean()
            grads = backward_pass(loss, params)
            optimizer.step(params, grads)
            total += float(loss.data) * len(idx)
        losses.append(total / n)
    ckpt_path = out / f"{name}.ckpt"
    opt_acc, opt_scalars = optimizer.state_blobs()
    save_checkpoint(ckpt_path, Checkpoint(
        variant=name,
        variant_config={"with_angular": with_angular,
                        "feature_dim": state_feature_dim(with_angular),
                        "output_dim": state_output_dim(with_angular)},
        params=params.copy_data(),
        optimizer={"scalars": opt_scalars, "acc": opt_acc},
        meta={"epochs": epochs, "final_loss": losses[-1] if losses else None,
              "seed": config.seed},
    ))
    return str(ckpt_path), losses
