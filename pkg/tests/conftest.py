"""Shared test helpers."""

import numpy as np

from ginet import tensor as T


def finite_difference_check(params: dict, loss_fn, h: float = 1e-5,
                            rtol: float = 1e-4) -> float:
    """Compare analytic gradients of loss_fn() against central differences.

    `params` maps names to trainable Tensors that loss_fn reads.  Returns the
    worst relative error seen, and raises AssertionError when it exceeds
    `rtol`.  Relative error uses max(|analytic|, |numeric|, 1e-6) as the
    denominator so near-zero gradients are compared absolutely.
    """
    for p in params.values():
        p.zero_grad()
    loss = loss_fn()
    T.backward(loss)
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data))
                for name, p in params.items()}

    worst = 0.0
    worst_at = None
    with T.no_grad():
        for name, p in params.items():
            flat = p.data.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + h
                up = loss_fn().item()
                flat[i] = orig - h
                down = loss_fn().item()
                flat[i] = orig
                numeric = (up - down) / (2.0 * h)
                a = analytic[name].reshape(-1)[i]
                err = abs(a - numeric) / max(abs(a), abs(numeric), 1e-6)
                if err > worst:
                    worst = err
                    worst_at = (name, i)
    assert worst < rtol, f"gradient mismatch at {worst_at}: rel err {worst:.3e}"
    return worst
