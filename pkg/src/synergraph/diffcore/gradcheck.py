"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

import numpy as np

from .tensor import NonFiniteValue, backward, no_grad, trace_kinks


def grad_check(f, params, eps=1e-4, max_coords=None, seed=0, stats=None, skip_kinks=True):
    """Max over checked coordinates of |analytic - numeric| / max(1, |numeric|).

    ``params`` is a list of (name, Tensor) pairs or a ParamStore.  With
    ``max_coords`` set, that many coordinates per tensor are drawn at random;
    otherwise every coordinate is perturbed.

    A central difference is meaningless when the +-eps window crosses a ReLU
    kink, so with ``skip_kinks`` such coordinates are detected (the on/off
    pattern of every ReLU-type op differs between the two evaluations) and
    left out.  Pass a dict as ``stats`` to receive checked/skipped counts and
    the worst coordinate.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    items = params.items() if hasattr(params, "items") else list(params)
    for _, t in items:
        t.grad = np.zeros_like(t.data)
    loss = f()
    backward(loss)
    analytic = {name: t.grad.copy() for name, t in items}

    rng = np.random.default_rng(seed)
    worst, worst_at = 0.0, None
    checked = skipped = 0
    for name, t in items:
        flat = t.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        g = analytic[name].reshape(-1)
        for i in coords:
            orig = flat[i]
            with no_grad():
                with trace_kinks() as kp:
                    flat[i] = orig + eps
                    fp = f().item()
                with trace_kinks() as km:
                    flat[i] = orig - eps
                    fm = f().item()
            flat[i] = orig
            if skip_kinks and kp != km:
                skipped += 1
                continue
            numeric = (fp - fm) / (2 * eps)
            if not np.isfinite(numeric):
                raise NonFiniteValue(f"finite difference for {name}[{i}] is not finite")
            err = abs(g[i] - numeric) / max(1.0, abs(numeric))
            checked += 1
            if err > worst or worst_at is None:
                worst, worst_at = max(worst, err), (name, int(i))
    if stats is not None:
        stats.update(checked=checked, skipped_kinks=skipped, worst_at=worst_at)
    return worst
