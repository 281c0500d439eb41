"""Diffusion noise schedule and loss weighting.

The forward process noises a clean frame x0 at step t as
    x_t = sqrt(alpha_bar_t) * x0 + sqrt(1 - alpha_bar_t) * eps,
with alpha_bar_t the cumulative product of (1 - beta_s). Loss terms are
reweighted by the clamped signal-to-noise ratio min(SNR, gamma)/SNR, which
downweights the near-noiseless steps and speeds convergence.
"""

from __future__ import annotations

import numpy as np

from ..nn.tensor import ContractViolation


def noise_schedule(t_diff: int, beta_start: float = 1e-4, beta_end: float = 0.02,
                   kind: str = "linear") -> tuple[np.ndarray, np.ndarray]:
    """Return (betas, alpha_bars) as float64 arrays of length t_diff."""
    if t_diff < 1:
        raise ContractViolation(f"t_diff must be >= 1, got {t_diff}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ContractViolation(f"invalid beta endpoints ({beta_start}, {beta_end})")
    if kind != "linear":
        raise ContractViolation(f"unknown schedule kind {kind!r}")
    if t_diff == 1:
        betas = np.array([beta_start], dtype=np.float64)
    else:
        betas = np.linspace(beta_start, beta_end, t_diff, dtype=np.float64)
    alpha_bars = np.cumprod(1.0 - betas)
    return betas, alpha_bars


def snr(alpha_bars: np.ndarray) -> np.ndarray:
    return alpha_bars / (1.0 - alpha_bars)


def min_snr_weight(alpha_bars: np.ndarray, gamma: float) -> np.ndarray:
    """min(SNR, gamma)/SNR per step: < 1 where SNR >> gamma, exactly 1 elsewhere."""
    s = snr(alpha_bars)
    return np.minimum(s, gamma) / s


def ddim_taus(t_diff: int, steps: int) -> np.ndarray:
    """Ascending subset of diffusion steps to visit; includes 0 and t_diff-1."""
    if steps < 1 or steps > t_diff:
        raise ContractViolation(f"sample steps must be in [1, {t_diff}], got {steps}")
    if steps == 1:
        return np.array([t_diff - 1], dtype=np.int64)
    return np.unique(np.round(np.linspace(0, t_diff - 1, steps)).astype(np.int64))
