"""Adam optimizer with bias correction."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import NetworkWeights


def adam_update(w, g, m, v, t, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
    """One Adam step for a single array. Returns (w_new, m_new, v_new).

    t is the 1-based step count used for bias correction. lr=0 or a zero
    gradient with zero moments leaves w unchanged.
    """
    m_new = beta1 * m + (1.0 - beta1) * g
    v_new = beta2 * v + (1.0 - beta2) * g * g
    m_hat = m_new / (1.0 - beta1**t)
    v_hat = v_new / (1.0 - beta2**t)
    w_new = w - lr * m_hat / (np.sqrt(v_hat) + eps)
    return w_new, m_new, v_new


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(
    weights: NetworkWeights,
    grads: dict,
    state: AdamState,
    lr: float = 1e-3,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
):
    """Apply one Adam step over named parameters, in place.

    grads maps parameter name -> gradient array; missing or None entries are
    treated as zero gradient (the moments still decay).
    """
    state.step += 1
    t = state.step
    for name, p in weights.params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            v = np.zeros_like(p.data)
        p.data, state.m[name], state.v[name] = adam_update(
            p.data, g, m, v, t, lr=lr, beta1=beta1, beta2=beta2, eps=eps
        )
