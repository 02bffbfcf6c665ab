"""RMSProp: scale each update by a running average of squared gradients."""

import numpy as np


class RMSProp:
    """acc <- decay*acc + (1-decay)*g^2; param <- param - lr*g/sqrt(acc+eps)."""

    def __init__(self, params, learning_rate, decay=0.9, epsilon=1e-8):
        if learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if not 0.0 <= decay < 1.0:
            raise ValueError("decay must be in [0, 1)")
        self.learning_rate = float(learning_rate)
        self.decay = float(decay)
        self.epsilon = float(epsilon)
        self.acc = {name: np.zeros_like(p.data) for name, p in params.items()}

    def step(self, params, grads):
        """Apply one update in place; rejects non-finite gradients."""
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.data.shape:
                raise ValueError(f"gradient shape mismatch for {name!r}")
            if not np.all(np.isfinite(g)):
                raise FloatingPointError(f"non-finite gradient for {name!r}")
        for name, p in params.items():
            g = grads[name]
            acc = self.acc[name]
            acc *= self.decay
            acc += (1.0 - self.decay) * g * g
            p.data -= self.learning_rate * g / np.sqrt(acc + self.epsilon)

    def state_blobs(self):
        """Accumulators plus scalar settings, for checkpointing."""
        scalars = {"learning_rate": self.learning_rate, "decay": self.decay,
                   "epsilon": self.epsilon}
        return {name: a.copy() for name, a in self.acc.items()}, scalars

    def load_state(self, blobs, scalars):
        self.learning_rate = float(scalars["learning_rate"])
        self.decay = float(scalars["decay"])
        self.epsilon = float(scalars["epsilon"])
        for name in self.acc:
            src = blobs[name]
            if src.shape != self.acc[name].shape:
                raise ValueError(f"accumulator shape mismatch for {name!r}")
            self.acc[name] = src.astype(np.float64).copy()
