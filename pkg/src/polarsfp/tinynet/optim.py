"""Adam with bias correction, operating on a {name: Tensor} parameter dict."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params, grads=None) -> AdamState:
    """One Adam update in place on the parameter values.

    ``grads`` defaults to each Tensor's accumulated .grad; missing or None
    gradients are treated as zero (the parameter is left untouched).
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1**state.t
    bias2 = 1.0 - b2**state.t
    for name, p in params.items():
        g = grads[name] if grads is not None else p.grad
        if g is None:
            continue
        if name not in state.m:
            state.m[name] = np.zeros_like(p.values)
            state.v[name] = np.zeros_like(p.values)
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        p.values -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.eps)
    return state
