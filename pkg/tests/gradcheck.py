"""Central finite-difference oracle for gradient checks.

Independent of the autodiff path: perturbs raw input arrays and re-runs the
forward function. Checks a random subset of coordinates to keep runtime down.
"""

from __future__ import annotations

import numpy as np

from visuoloop.nn import Tensor


def fd_gradcheck(fn, arrays, rng, n_coords=32, dtype=np.float32, h=None, rtol=None):
    """Compare autodiff gradients of scalar fn(*tensors) against central differences.

    fn takes Tensors and returns a scalar Tensor. Returns max relative error.
    """
    if h is None:
        h = 1e-3 if dtype == np.float32 else 1e-5
    if rtol is None:
        rtol = 1e-3 if dtype == np.float32 else 1e-6
    arrays = [np.asarray(a, dtype=dtype) for a in arrays]
    tensors = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    out = fn(*tensors)
    out.backward()
    worst = 0.0
    for ti, (arr, t) in enumerate(zip(arrays, tensors)):
        flat = arr.reshape(-1)
        n = flat.size
        coords = rng.permutation(n)[: min(n_coords, n)]
        grad = t.grad.reshape(-1) if t.grad is not None else np.zeros(n)
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            hi = fn(*[Tensor(a.astype(np.float64)) for a in arrays]).item()
            flat[c] = orig - h
            lo = fn(*[Tensor(a.astype(np.float64)) for a in arrays]).item()
            flat[c] = orig
            fd = (hi - lo) / (2 * h)
            an = float(grad[c])
            rel = abs(fd - an) / max(1.0, abs(fd), abs(an))
            worst = max(worst, rel)
            assert rel < rtol, (
                f"input {ti} coord {c}: fd={fd:.6g} autodiff={an:.6g} rel={rel:.3g} (tol {rtol})"
            )
    return worst
