"""
Central finite-difference audit of tape gradients.

    errors = check_gradients(fn, {"x": x0, "w": w0})

fn receives a dict of Tensors (same keys) and must return a scalar Tensor.
Inputs are promoted to float64; each entry is perturbed by +/-eps and the
symmetric difference quotient is compared with the analytic gradient.
"""

from __future__ import annotations

from typing import Callable, Dict, Mapping, Optional

import numpy as np

from autodiff.tensor import Tape, Tensor

LossFn = Callable[[Dict[str, Tensor]], Tensor]


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """max |a - n| scaled by the largest magnitude seen on either side."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    diff = float(np.max(np.abs(a - n)))
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(n))), 1e-8)
    return diff / scale


def _loss_value(fn: LossFn, arrays: Mapping[str, np.ndarray], name: str, replacement: np.ndarray) -> float:
    tensors = {k: Tensor(replacement if k == name else v) for k, v in arrays.items()}
    return float(fn(tensors).data)


def analytic_gradients(fn: LossFn, inputs: Mapping[str, np.ndarray]) -> Dict[str, np.ndarray]:
    tensors = {k: Tensor(np.array(v, dtype=np.float64), requires_grad=True) for k, v in inputs.items()}
    with Tape() as tape:
        loss = fn(tensors)
        tape.backward(loss)
    return {
        k: (t.grad if t.grad is not None else np.zeros_like(t.data))
        for k, t in tensors.items()
    }


def check_gradients(
    fn: LossFn,
    inputs: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    max_entries: Optional[int] = 64,
    seed: int = 0,
) -> Dict[str, float]:
    """
    Return the relative error per input. Inputs with more than max_entries
    elements are checked on a seeded random sample of entries.
    """
    arrays = {k: np.array(v, dtype=np.float64) for k, v in inputs.items()}
    analytic = analytic_gradients(fn, arrays)
    rng = np.random.default_rng(seed)

    errors: Dict[str, float] = {}
    for name, arr in arrays.items():
        if max_entries is None or arr.size <= max_entries:
            idx = np.arange(arr.size)
        else:
            idx = np.sort(rng.choice(arr.size, size=max_entries, replace=False))

        numeric = np.empty(idx.size)
        work = arr.copy()
        for j, flat in enumerate(idx):
            orig = work.flat[flat]
            work.flat[flat] = orig + eps
            f_plus = _loss_value(fn, arrays, name, work)
            work.flat[flat] = orig - eps
            f_minus = _loss_value(fn, arrays, name, work)
            work.flat[flat] = orig
            numeric[j] = (f_plus - f_minus) / (2.0 * eps)

        errors[name] = relative_error(analytic[name].ravel()[idx], numeric)
    return errors
