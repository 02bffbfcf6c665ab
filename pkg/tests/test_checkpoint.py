"""Checkpoint container: exact round trips and corruption rejection."""

import numpy as np
import pytest

from bowlroll.checkpoint import (Checkpoint, deserialize_checkpoint, load_checkpoint,
                                 save_checkpoint, serialize_checkpoint)


def sample_checkpoint():
    rng = np.random.default_rng(0)
    params = {"enc.w": rng.normal(size=(3, 3, 2, 4)), "enc.b": rng.normal(size=4),
              "head.w": rng.normal(size=(16, 2))}
    opt = {"scalars": {"learning_rate": 1e-3, "decay": 0.9, "epsilon": 1e-8},
           "acc": {name: np.abs(rng.normal(size=arr.shape))
                   for name, arr in params.items()}}
    return Checkpoint(variant="position",
                      variant_config={"variant": "position", "resolution": 16},
                      params=params, optimizer=opt,
                      meta={"train_horizon": 4, "best_epoch": 2})


def test_round_trip_bytes_identical():
    blob = serialize_checkpoint(sample_checkpoint())
    again = serialize_checkpoint(deserialize_checkpoint(blob))
    assert blob == again


def test_round_trip_preserves_values_and_order():
    ckpt = sample_checkpoint()
    back = deserialize_checkpoint(serialize_checkpoint(ckpt))
    assert list(back.params) == list(ckpt.params)
    for name in ckpt.params:
        assert np.array_equal(back.params[name], ckpt.params[name])
        assert np.array_equal(back.optimizer["acc"][name], ckpt.optimizer["acc"][name])
    assert back.meta == ckpt.meta
    assert back.variant == ckpt.variant


def test_corrupt_header_byte_rejected():
    blob = bytearray(serialize_checkpoint(sample_checkpoint()))
    blob[3] ^= 0x01          # inside the magic
    with pytest.raises(ValueError, match="magic"):
        deserialize_checkpoint(bytes(blob))


def test_corrupt_payload_byte_rejected():
    blob = bytearray(serialize_checkpoint(sample_checkpoint()))
    blob[len(blob) // 2] ^= 0x10
    with pytest.raises(ValueError, match="CRC"):
        deserialize_checkpoint(bytes(blob))


def test_truncation_rejected():
    blob = serialize_checkpoint(sample_checkpoint())
    with pytest.raises(ValueError):
        deserialize_checkpoint(blob[: len(blob) - 9])


def test_no_optimizer_is_allowed():
    ckpt = sample_checkpoint()
    ckpt.optimizer = None
    back = deserialize_checkpoint(serialize_checkpoint(ckpt))
    assert back.optimizer is None


def test_file_round_trip(tmp_path):
    path = tmp_path / "model.ckpt"
    ckpt = sample_checkpoint()
    save_checkpoint(path, ckpt)
    save_checkpoint(tmp_path / "again.ckpt", load_checkpoint(path))
    assert path.read_bytes() == (tmp_path / "again.ckpt").read_bytes()
