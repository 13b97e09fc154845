"""
Central-difference gradient checking against the tape.
"""

import logging
from typing import Callable, Optional, Sequence

import numpy as np

from src.tensor.tensor import GradTape, Tensor, backward

logger = logging.getLogger(__name__)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    a = np.linalg.norm(analytic)
    n = np.linalg.norm(numeric)
    return float(np.linalg.norm(analytic - numeric) / max(a + n, 1e-6))


def check_gradients(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    h: float = 1e-5,
    n_probe: int = 12,
    rng: Optional[np.random.Generator] = None,
) -> float:
    """
    Compare tape gradients of a scalar fn with central differences.

    Args:
        fn: Function of len(inputs) tensors returning a scalar Tensor
        inputs: Values at which to evaluate
        h: Finite-difference step
        n_probe: Entries probed per input; smaller inputs are probed fully
        rng: Chooses the probed entries

    Returns:
        Worst relative error over all inputs
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    inputs = [np.array(a, dtype=np.float64) for a in inputs]

    with GradTape() as tape:
        leaves = [tape.watch(a) for a in inputs]
        loss = fn(*leaves)
    grads = backward(tape, loss)

    def evaluate(values):
        return fn(*[Tensor(v) for v in values]).item()

    worst = 0.0
    for i, base in enumerate(inputs):
        if base.size == 0:
            continue
        analytic_full = grads[leaves[i].grad_id].data.reshape(-1)
        if base.size <= n_probe:
            probes = np.arange(base.size)
        else:
            probes = np.sort(rng.choice(base.size, size=n_probe, replace=False))
        numeric = np.empty(len(probes))
        for j, flat in enumerate(probes):
            values = [a.copy() for a in inputs]
            values[i].reshape(-1)[flat] += h
            plus = evaluate(values)
            values[i].reshape(-1)[flat] -= 2 * h
            minus = evaluate(values)
            numeric[j] = (plus - minus) / (2 * h)
        err = relative_error(analytic_full[probes], numeric)
        logger.debug(f"[gradcheck] input {i} {base.shape}: rel err {err:.3e}")
        worst = max(worst, err)
    return worst
