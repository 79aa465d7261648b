"""Central-difference verification of analytic gradients."""

import logging

import numpy as np

from eye_purify import exceptions
from eye_purify.autodiff.tensor import Tensor, no_grad


logger = logging.getLogger(__name__)


def _scalar(value):
    value = value.item() if isinstance(value, Tensor) else float(value)
    if not np.isfinite(value):
        raise exceptions.NumericalError("grad_check objective is not finite: {}".format(value))
    return value


def grad_check(f, x, eps=1e-3, indices=None, samples=None, seed=0):
    """Return max |analytic - numeric| / max(|analytic|, |numeric|, 1e-8) over checked elements.

    f maps a Tensor to a scalar Tensor. Checks run in float64. By default
    every element is perturbed; pass indices (flat) or samples (a count drawn
    with the given seed) to check a subset.
    """
    if eps <= 0:
        raise exceptions.ConfigurationError("grad_check eps must be positive, got {}".format(eps))
    base = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)

    leaf = Tensor(base.copy(), requires_grad=True)
    out = f(leaf)
    out.backward()
    _scalar(out)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(base)
    if not np.all(np.isfinite(analytic)):
        raise exceptions.NumericalError("grad_check analytic gradient is not finite")
    analytic = analytic.reshape(-1)

    if indices is None:
        indices = np.arange(base.size)
        if samples is not None and samples < base.size:
            indices = np.sort(np.random.default_rng(seed).choice(base.size, size=samples, replace=False))

    worst = 0.0
    with no_grad():
        for index in indices:
            probe = base.copy().reshape(-1)
            probe[index] += eps
            plus = _scalar(f(Tensor(probe.reshape(base.shape))))
            probe[index] -= 2 * eps
            minus = _scalar(f(Tensor(probe.reshape(base.shape))))
            numeric = (plus - minus) / (2 * eps)
            denom = max(abs(analytic[index]), abs(numeric), 1e-8)
            error = abs(analytic[index] - numeric) / denom
            if error > worst:
                logger.debug("grad_check element %d: analytic %g numeric %g", index, analytic[index], numeric)
                worst = error
    return worst
