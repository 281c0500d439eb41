"""AdamW with decoupled weight decay, and parameter EMA tracking."""

from __future__ import annotations

import numpy as np

from .tensor import ContractViolation
from .modules import Params


class AdamW:
    """Decoupled weight decay: the decay term is applied to the parameter
    directly and never folded into the gradient moments."""

    def __init__(self, params: Params, lr: float = 1e-4, betas=(0.9, 0.999),
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = params
        self.lr = float(lr)
        self.beta1, self.beta2 = betas
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.named()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.named()}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name, p in self.params.named():
            g = p.grad
            if g is None:
                g = np.zeros_like(p.data)
            if g.shape != p.data.shape:
                raise ContractViolation(f"gradient shape {g.shape} != param shape {p.data.shape} for {name}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            decay = self.lr * self.weight_decay * p.data if self.weight_decay else 0.0
            p.data = p.data - self.lr * update - decay

    def zero_grad(self) -> None:
        self.params.zero_grad()


class EmaState:
    """Exponential moving average of parameters: shadow <- d*shadow + (1-d)*p."""

    def __init__(self, params: Params, decay: float = 0.999):
        if not (0.0 < decay < 1.0):
            raise ContractViolation(f"EMA decay must be in (0,1), got {decay}")
        self.decay = float(decay)
        self.shadow = {k: t.data.copy() for k, t in params.named()}

    def update(self, params: Params) -> None:
        d = self.decay
        for name, p in params.named():
            s = self.shadow[name]
            if s.shape != p.data.shape:
                raise ContractViolation(f"EMA shape mismatch for {name}")
            s *= d
            s += (1.0 - d) * p.data

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.shadow.items()}
