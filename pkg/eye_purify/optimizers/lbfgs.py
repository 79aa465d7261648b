"""Projected L-BFGS directly over image pixels.

Directions come from the two-loop recursion over the last `memory`
curvature pairs. Each trial point is clipped to the pixel box and tested
with the Armijo condition at the clipped point, so accepted objective
values never increase.
"""

from collections import deque
import logging
import time

import numpy as np

from eye_purify import exceptions, settings
from eye_purify.autodiff import Tensor


logger = logging.getLogger(__name__)

CURVATURE_EPS = 1e-10


class OptimizeReport(object):
    """One accepted iterate: index, objective, optional per-term breakdown, wall-clock ms."""

    __slots__ = ('iteration', 'objective', 'breakdown', 'ms')

    def __init__(self, iteration, objective, breakdown=None, ms=0.0):
        self.iteration = iteration
        self.objective = objective
        self.breakdown = breakdown
        self.ms = ms

    def as_row(self):
        """iter, total, content, style, tv, ms"""
        if self.breakdown is None:
            content = style = tv = 0.0
        else:
            content, style, tv = self.breakdown.content_total, self.breakdown.style_total, self.breakdown.tv
        return (self.iteration, self.objective, content, style, tv, round(self.ms, 3))

    def __repr__(self):
        return "OptimizeReport(iteration={}, objective={:.6g}, ms={:.1f})".format(
            self.iteration, self.objective, self.ms)


def white_noise_image(height, width, seed=0):
    """I.i.d. uniform pixels in [0, 255]."""
    if height < 1 or width < 1:
        raise exceptions.ShapeError("noise image must be at least 1x1", expected='>= 1', actual=(height, width))
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 255.0, size=(height, width, 3)).astype(settings.DTYPE)


class _Evaluator(object):
    """objective(Tensor) -> loss or (loss, breakdown), evaluated to float64 value and gradient."""

    def __init__(self, objective, shape, dtype):
        self.objective = objective
        self.shape = shape
        self.dtype = dtype
        self.last_good = None

    def __call__(self, x):
        leaf = Tensor(x.reshape(self.shape).astype(self.dtype), requires_grad=True)
        try:
            out = self.objective(leaf)
            loss, breakdown = out if isinstance(out, tuple) else (out, None)
            loss.backward()
        except exceptions.NumericalError as e:
            if e.last_iterate is None:
                e.last_iterate = self.last_good
            raise
        value = float(loss.item())
        grad = np.zeros(x.size) if leaf.grad is None else leaf.grad.reshape(-1).astype(np.float64)
        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            raise exceptions.NumericalError(
                "objective or gradient is not finite", last_iterate=self.last_good,
                diagnostics={'objective': value, 'nonfinite_gradient': int(np.sum(~np.isfinite(grad)))})
        return value, grad, breakdown


def _two_loop(grad, pairs):
    """-H grad from curvature pairs (s, y, 1 / s.y), oldest first."""
    q = grad.copy()
    alphas = []
    for s, y, rho in reversed(pairs):
        alpha = rho * s.dot(q)
        q -= alpha * y
        alphas.append(alpha)
    s, y, _ = pairs[-1]
    q *= s.dot(y) / y.dot(y)
    for (s, y, rho), alpha in zip(pairs, reversed(alphas)):
        beta = rho * y.dot(q)
        q += (alpha - beta) * s
    return -q


def _scaled_gradient_step(grad):
    norm = np.abs(grad).sum()
    return -grad * min(1.0, 1.0 / norm) if norm > 0 else -grad


def projected_lbfgs(objective, init, lower=0.0, upper=255.0, max_iter=None, memory=None,
                    tolerance=None, c1=None, max_backtracks=None, gradient_tolerance=None,
                    dtype=None, log_every=None, callback=None):
    """Minimize objective over images in [lower, upper].

    Returns (final image, reports); reports[0] is the clipped initial
    image and every later report is one accepted step. Stops after
    max_iter steps, when the relative objective change drops below
    tolerance, when the projected gradient vanishes, or when the line
    search finds no decrease.
    """
    max_iter = settings.LBFGS_ITERATIONS if max_iter is None else max_iter
    memory = settings.LBFGS_MEMORY if memory is None else memory
    tolerance = settings.LBFGS_TOLERANCE if tolerance is None else tolerance
    c1 = settings.LBFGS_ARMIJO_C1 if c1 is None else c1
    max_backtracks = settings.LBFGS_MAX_BACKTRACKS if max_backtracks is None else max_backtracks
    gradient_tolerance = settings.LBFGS_GRADIENT_TOLERANCE if gradient_tolerance is None else gradient_tolerance
    log_every = settings.LBFGS_LOG_EVERY if log_every is None else log_every
    if max_iter < 0 or memory < 1:
        raise exceptions.ConfigurationError("L-BFGS needs max_iter >= 0 and memory >= 1")

    init = np.asarray(init.data if isinstance(init, Tensor) else init)
    shape = init.shape
    evaluate = _Evaluator(objective, shape, np.dtype(dtype or settings.LBFGS_DTYPE))
    x = np.clip(init.astype(np.float64).reshape(-1), lower, upper)

    start = time.perf_counter()
    f, g, breakdown = evaluate(x)
    evaluate.last_good = x.reshape(shape).copy()
    reports = [OptimizeReport(0, f, breakdown, (time.perf_counter() - start) * 1000.0)]
    pairs = deque(maxlen=memory)

    for iteration in range(1, max_iter + 1):
        started = time.perf_counter()
        projected_gradient = x - np.clip(x - g, lower, upper)
        if np.max(np.abs(projected_gradient)) <= gradient_tolerance:
            logger.info("L-BFGS converged at iteration %d: projected gradient vanished", iteration - 1)
            break

        direction = _two_loop(g, list(pairs)) if pairs else _scaled_gradient_step(g)
        trial = np.clip(x + direction, lower, upper)
        slope = g.dot(trial - x)
        if slope >= 0 and pairs:
            logger.debug("iteration %d: projected direction is not a descent direction, resetting memory",
                         iteration)
            pairs.clear()
            direction = _scaled_gradient_step(g)
            trial = np.clip(x + direction, lower, upper)
            slope = g.dot(trial - x)
        if slope >= 0:
            logger.info("L-BFGS stopped at iteration %d: no descent direction inside the box", iteration - 1)
            break

        step = 1.0
        accepted = None
        for _ in range(max_backtracks + 1):
            f_new, g_new, breakdown = evaluate(trial)
            if f_new <= f + c1 * slope:
                accepted = trial
                break
            step *= 0.5
            trial = np.clip(x + step * direction, lower, upper)
            slope = g.dot(trial - x)
            if slope >= 0:
                break
        if accepted is None:
            logger.info("L-BFGS stopped at iteration %d: line search found no decrease", iteration - 1)
            break

        s, y = accepted - x, g_new - g
        sy = s.dot(y)
        if sy > CURVATURE_EPS:
            pairs.append((s, y, 1.0 / sy))
        else:
            logger.debug("iteration %d: skipped curvature pair (s.y = %g)", iteration, sy)

        change = abs(f - f_new) / max(abs(f), abs(f_new), 1e-12)
        x, f, g = accepted, f_new, g_new
        evaluate.last_good = x.reshape(shape).copy()
        report = OptimizeReport(iteration, f, breakdown, (time.perf_counter() - started) * 1000.0)
        reports.append(report)
        if callback is not None:
            callback(report)
        if log_every and iteration % log_every == 0:
            logger.info("L-BFGS iteration %d: objective %.6g %s", iteration, f,
                        breakdown if breakdown is not None else '')
        if change < tolerance:
            logger.info("L-BFGS converged at iteration %d: relative change %.3g", iteration, change)
            break

    return x.reshape(shape).astype(init.dtype if init.dtype.kind == 'f' else settings.DTYPE), reports
