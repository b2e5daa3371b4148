"""Adam with bias correction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class NumericError(FloatingPointError):
    pass


@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              learning_rate: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> tuple[dict[str, np.ndarray], AdamState]:
    """Update the blocks named in ``grads`` in place and return ``(params, state)``.

    Blocks absent from ``grads`` are left untouched (that is how frozen
    layers are skipped). Moments start at zero on first sight of a block.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter block {name!r}")
    state.t += 1
    c1 = 1.0 - beta1 ** state.t
    c2 = 1.0 - beta2 ** state.t
    for name, g in grads.items():
        p = params[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / c1
        v_hat = v / c2
        p -= (learning_rate * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)
    return params, state
