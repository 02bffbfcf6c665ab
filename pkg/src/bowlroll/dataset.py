"""Dataset generation and on-disk layout.

A dataset is a directory tree with one subdirectory per sequence holding
raw lossless frame files plus a ground-truth CSV, described by a single
manifest.json. Sequences are sub-windows cut from longer simulations;
training windows start at seeded random offsets while validation and test
always start at offset zero, and the three splits never share a
simulation. Everything is a pure function of (config, seed): regenerating
a dataset reproduces it byte for byte.

Frame files: 16-byte header (magic 'BRF1', then height, width, channels as
little-endian uint32) followed by row-major uint8 intensities, where byte
value = round(255 * intensity). Quantization to the 8-bit grid is the only
loss; decoding returns byte/255 exactly.
"""

import csv
import json
import struct
from pathlib import Path

import numpy as np

from . import render, simulate

FRAME_MAGIC = b"BRF1"
SPLITS = ("train", "val", "test")
TRUTH_COLUMNS = ["t", "q_x", "q_y", "q_z", "px", "py",
                 "v_x", "v_y", "v_z", "w_x", "w_y", "w_z"]


def fmt_float(x):
    """Shortest round-trip decimal form; keeps CSV output deterministic."""
    return repr(float(x))


# -- frame files -------------------------------------------------------------

def write_frame(path, img):
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {img.shape}")
    h, w, c = img.shape
    data = np.round(img * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(FRAME_MAGIC)
        fh.write(struct.pack("<III", h, w, c))
        fh.write(data.tobytes())


def read_frame(path):
    with open(path, "rb") as fh:
        header = fh.read(16)
        if len(header) != 16 or header[:4] != FRAME_MAGIC:
            raise ValueError(f"{path}: not a frame file")
        h, w, c = struct.unpack("<III", header[4:])
        payload = fh.read()
    if len(payload) != h * w * c:
        raise ValueError(f"{path}: truncated frame payload")
    return np.frombuffer(payload, dtype=np.uint8).reshape(h, w, c) / 255.0


# -- ground truth ------------------------------------------------------------

def write_truth(path, trajectory, frame_indices, resolution, half_extent):
    """One CSV row per stored frame; t is the within-sequence frame index."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRUTH_COLUMNS)
        for row_t, idx in enumerate(frame_indices):
            q = trajectory.centers[idx]
            px = simulate.world_to_pixel(trajectory.screen[idx], resolution, half_extent)
            v = trajectory.velocities[idx]
            w = trajectory.omegas[idx]
            writer.writerow([row_t] + [fmt_float(x) for x in
                                       (*q, *px, *v, *w)])


def read_truth(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != TRUTH_COLUMNS:
            raise ValueError(f"{path}: unexpected ground-truth columns {header}")
        rows = [[float(x) for x in row] for row in reader]
    arr = np.array(rows)
    return {
        "t": arr[:, 0],
        "q": arr[:, 1:4],
        "px": arr[:, 4:6],
        "v": arr[:, 6:9],
        "w": arr[:, 9:12],
    }


# -- generation --------------------------------------------------------------

def generate_dataset(config, out_dir):
    """Simulate, render, and write the full three-split dataset tree."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim_cfg = config.sim_config()
    render_cfg = config.render_config()
    counts = {"train": config.train_sequences, "val": config.val_sequences,
              "test": config.test_sequences}
    splits = {}
    for split_idx, split in enumerate(SPLITS):
        n_needed = counts[split]
        per_sim = config.subseq_per_sim if split == "train" else 1
        entries = []
        sim_idx = 0
        while len(entries) < n_needed:
            rng = np.random.default_rng([config.seed, split_idx, sim_idx])
            geometry, state, record = simulate.sample_initial_conditions(
                rng, config.case, sim_cfg)
            span = config.offset_span if split == "train" else 0
            trajectory = simulate.simulate_trajectory(
                state, geometry, sim_cfg, config.sub_len + span, init_record=record)
            sim_name = f"{split}_sim_{sim_idx:04d}"
            for _ in range(per_sim):
                if len(entries) >= n_needed:
                    break
                offset = int(rng.integers(0, span + 1)) if span else 0
                seq_id = f"{split}_{len(entries):04d}"
                entries.append(_write_sequence(
                    out, split, seq_id, sim_name, trajectory, offset,
                    config, render_cfg))
            sim_idx += 1
        splits[split] = entries
    manifest = {
        "format_version": 1,
        "case": config.case,
        "seed": config.seed,
        "resolution": config.resolution,
        "half_extent": config.half_extent,
        "t0": config.t0,
        "eval_horizon": config.eval_horizon,
        "config": config.to_dict(),
        "splits": splits,
    }
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def _write_sequence(out, split, seq_id, sim_name, trajectory, offset,
                    config, render_cfg):
    seq_dir = out / split / seq_id
    seq_dir.mkdir(parents=True, exist_ok=True)
    indices = list(range(offset, offset + config.sub_len))
    frames = render.render_sequence(trajectory, render_cfg, indices, config.rho)
    frame_files = []
    for k, frame in enumerate(frames):
        name = f"frame_{k:04d}.raw"
        write_frame(seq_dir / name, frame)
        frame_files.append(f"{split}/{seq_id}/{name}")
    truth_rel = f"{split}/{seq_id}/truth.csv"
    write_truth(out / truth_rel, trajectory, indices,
                config.resolution, config.half_extent)
    rec = trajectory.init_record
    return {
        "id": seq_id,
        "sim": sim_name,
        "start_offset": offset,
        "frame_files": frame_files,
        "truth_file": truth_rel,
        "a": rec.get("a"),
        "gamma": rec.get("gamma"),
        "theta": rec.get("theta"),
        "phi": rec.get("phi"),
        "euler": rec.get("euler"),
        "v_init": rec.get("v_init"),
    }


def load_manifest(dataset_dir):
    with open(Path(dataset_dir) / "manifest.json") as fh:
        manifest = json.load(fh)
    if manifest.get("format_version") != 1:
        raise ValueError("unsupported dataset format version")
    return manifest


def verify_dataset(dataset_dir):
    """Every referenced file exists and decodes; raises on the first failure."""
    root = Path(dataset_dir)
    manifest = load_manifest(root)
    for split in SPLITS:
        for entry in manifest["splits"][split]:
            for rel in entry["frame_files"]:
                read_frame(root / rel)
            read_truth(root / entry["truth_file"])
    return manifest


# -- batched loading for training and evaluation ------------------------------

def load_split_arrays(dataset_dir, split, t0, horizon, manifest=None,
                      with_frames=True, final_index=None):
    """Stack a split into arrays: contexts, pixel targets, angular targets.

    Targets for step t come from frame t0 + t. final_index, when given,
    additionally loads that absolute frame per sequence (the anchored
    variant's extra input).
    """
    root = Path(dataset_dir)
    manifest = manifest or load_manifest(root)
    entries = manifest["splits"][split]
    contexts, finals, positions, omegas = [], [], [], []
    for entry in entries:
        truth = read_truth(root / entry["truth_file"])
        if t0 + horizon > truth["px"].shape[0]:
            raise ValueError(f"{entry['id']}: horizon {horizon} exceeds stored frames")
        positions.append(truth["px"][t0:t0 + horizon])
        omegas.append(truth["w"][t0:t0 + horizon])
        if with_frames:
            frames = [read_frame(root / entry["frame_files"][k]) for k in range(t0)]
            contexts.append(np.stack(frames))
            if final_index is not None:
                finals.append(read_frame(root / entry["frame_files"][final_index]))
    out = {
        "ids": [e["id"] for e in entries],
        "positions": np.array(positions),
        "omegas": np.array(omegas),
        "entries": entries,
    }
    if with_frames:
        out["contexts"] = np.array(contexts)
        if final_index is not None:
            out["finals"] = np.array(finals)
    return out
