"""Experiment configuration: scenario, dataset sizes, model scale, training
hyperparameters. One dataclass feeds every stage so a (config, seed) pair
pins the whole pipeline."""

import json
from dataclasses import asdict, dataclass, replace

from .models import VariantConfig
from .render import RenderConfig
from .simulate import SimulationConfig

CASES = ("bowl", "ellipse", "ellipse_plain")


@dataclass
class ExperimentConfig:
    case: str = "ellipse"
    resolution: int = 64
    train_sequences: int = 512
    val_sequences: int = 110
    test_sequences: int = 110
    subseq_per_sim: int = 4        # training sub-sequences cut from one long run
    offset_span: int = 40          # training start offsets drawn from {0..span}
    t0: int = 4
    train_horizon: int = 20
    eval_horizon: int = 40
    batch_size: int = 16
    learning_rate: float = 1e-3
    lr_patience: int = 25
    stop_patience: int = 50
    max_epochs: int = 400
    seed: int = 0
    state_channels: int = 32
    encoder_channels: tuple = (32, 64, 64)
    transition_hidden: int = 256
    lam_sig: float = 99.99
    alpha_sig: float = 0.01
    lam_reg: float = 0.01
    half_extent: float = 1.1
    init_std: float = 0.01
    augment_dihedral: bool = False   # multiply training scenes by the 8
                                     # square symmetries of the physics
    rho: float = 0.04
    gravity: float = 9.81
    damping: float = 0.1

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"case must be one of {CASES}, got {self.case!r}")
        if self.eval_horizon < self.train_horizon:
            raise ValueError("eval_horizon must be >= train_horizon")
        if min(self.train_sequences, self.val_sequences, self.test_sequences) < 1:
            raise ValueError("every split needs at least one sequence")
        self.encoder_channels = tuple(self.encoder_channels)

    @property
    def sub_len(self):
        """Frames stored per sequence: context plus the evaluation horizon."""
        return self.t0 + self.eval_horizon

    @property
    def ball_textured(self):
        return self.case != "ellipse_plain"

    def sim_config(self):
        return SimulationConfig(rho=self.rho, gravity=self.gravity,
                                damping=self.damping)

    def render_config(self):
        return RenderConfig(resolution=self.resolution, half_extent=self.half_extent,
                            ball_textured=self.ball_textured)

    def variant_config(self, variant):
        return VariantConfig(variant=variant, resolution=self.resolution, t0=self.t0,
                             state_channels=self.state_channels,
                             encoder_channels=self.encoder_channels,
                             transition_hidden=self.transition_hidden,
                             lam_sig=self.lam_sig, alpha_sig=self.alpha_sig)

    def to_dict(self):
        d = asdict(self)
        d["encoder_channels"] = list(self.encoder_channels)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "encoder_channels" in d:
            d["encoder_channels"] = tuple(d["encoder_channels"])
        return cls(**d)

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def desk_config(**overrides):
    """Workstation-scale defaults; the whole pipeline runs on one CPU.

    Values were tuned empirically: independent simulations per sequence,
    batch 8 and dihedral augmentation are what let the scratch-trained
    encoder generalize at this dataset size.
    """
    base = ExperimentConfig(
        resolution=48,
        state_channels=16,
        encoder_channels=(32, 64, 64),
        transition_hidden=64,
        subseq_per_sim=1,
        batch_size=8,
        learning_rate=1e-3,
        lr_patience=40,
        stop_patience=80,
        max_epochs=400,
        augment_dihedral=True,
    )
    return replace(base, **overrides) if overrides else base


def paper_scale_config(**overrides):
    """Full-scale preset: 128 px frames, wide channels, batch 50, lr 1e-5,
    patience 100/200, epoch budget 2000. Expect GPU-class runtimes."""
    base = ExperimentConfig(
        resolution=128,
        train_sequences=3584,
        val_sequences=768,
        test_sequences=768,
        state_channels=512,
        encoder_channels=(64, 128, 256),
        transition_hidden=256,
        batch_size=50,
        learning_rate=1e-5,
        lr_patience=100,
        stop_patience=200,
        max_epochs=2000,
    )
    return replace(base, **overrides) if overrides else base


def smoke_config(**overrides):
    """Tiny end-to-end config for fast functional tests."""
    base = ExperimentConfig(
        resolution=24,
        train_sequences=8,
        val_sequences=4,
        test_sequences=4,
        subseq_per_sim=2,
        offset_span=8,
        train_horizon=6,
        eval_horizon=10,
        batch_size=4,
        state_channels=4,
        encoder_channels=(8,),
        transition_hidden=8,
        max_epochs=3,
        lr_patience=2,
        stop_patience=4,
    )
    return replace(base, **overrides) if overrides else base
