"""Central finite-difference verification of autodiff gradients."""

from __future__ import annotations

import numpy as np

from ..errors import NumericError
from .tensor import Tensor, no_grad


def grad_check(f, leaves, step: float = 1e-5, rng=None, samples=None) -> float:
    """Compare autodiff grads of scalar f() against central differences.

    f is a zero-argument callable reading the given leaf Tensors; it must
    return a scalar Tensor. Returns the max over checked coordinates of
    |g_ad - g_fd| / max(1, |g_ad|, |g_fd|). When `samples` is set, only that
    many randomly chosen coordinates per leaf are probed, which keeps full
    model checks tractable.
    """
    leaves = list(leaves)
    for leaf in leaves:
        leaf.zero_grad()
    out = f()
    if out.data.shape != ():
        out = out.sum()
    if not np.isfinite(out.data):
        raise NumericError("function value is not finite at the check point")
    out.backward()

    def eval_scalar() -> float:
        with no_grad():
            v = f()
        val = float(v.data if v.data.shape == () else v.data.sum())
        if not np.isfinite(val):
            raise NumericError("non-finite value during finite differencing")
        return val

    worst = 0.0
    for leaf in leaves:
        g_ad = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
        if not np.all(np.isfinite(g_ad)):
            raise NumericError("autodiff gradient is not finite")
        flat = leaf.data.reshape(-1)
        gflat = np.asarray(g_ad).reshape(-1)
        n = flat.size
        if samples is not None and samples < n:
            if rng is None:
                rng = np.random.default_rng(0)
            coords = rng.choice(n, size=samples, replace=False)
        else:
            coords = range(n)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + step
            hi = eval_scalar()
            flat[i] = orig - step
            lo = eval_scalar()
            flat[i] = orig
            g_fd = (hi - lo) / (2.0 * step)
            denom = max(1.0, abs(gflat[i]), abs(g_fd))
            worst = max(worst, abs(gflat[i] - g_fd) / denom)
    return worst
