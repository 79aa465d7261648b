"""Objective parity between a trained feed-forward network and explicit optimization.

For one content image, the L-BFGS objective curve (from white noise) is
compared with the objective of the network's single forward pass. The
crossover is the first L-BFGS iterate (0 is the initial noise) whose
objective is below the feed-forward value.
"""

import logging

import numpy as np

from eye_purify import exceptions
from eye_purify.autodiff import no_grad
from eye_purify.files import write_csv
from eye_purify.image_io import resize_bilinear
from eye_purify.loss_network import PurificationObjective
from eye_purify.masks import resize_mask
from eye_purify.optimizers.lbfgs import projected_lbfgs, white_noise_image


logger = logging.getLogger(__name__)

PARITY_HEADER = ('iter', 'lbfgs_mean', 'lbfgs_std', 'feedforward_mean', 'feedforward_std')


class ParityCurve(object):

    def __init__(self, name, lbfgs, feedforward):
        self.name = name
        self.lbfgs = list(lbfgs)
        self.feedforward = float(feedforward)

    @property
    def crossover(self):
        """First iterate index below the feed-forward objective, None if L-BFGS never gets there."""
        for index, value in enumerate(self.lbfgs):
            if value < self.feedforward:
                return index
        return None

    def padded(self, length):
        """L-BFGS curve held at its last value out to length entries."""
        values = self.lbfgs[:length]
        return values + [values[-1]] * (length - len(values))


def objective_parity(model, content, content_mask, style, style_mask, loss_config, loss_net,
                     iters, size=None, seed=0, name=None):
    """ParityCurve for one content image, optionally resized to size x size first."""
    if size is not None:
        content = resize_bilinear(content, size, size)
        if content_mask is not None:
            content_mask = resize_mask(content_mask, size, size)
    objective = PurificationObjective(loss_net, loss_config, style, style_mask, content, content_mask)

    feedforward = model.stylize(content)
    if feedforward.shape != content.shape:
        raise exceptions.ConfigurationError(
            "model output {} does not match content {}; use a shape-preserving model".format(
                feedforward.shape, content.shape))
    with no_grad():
        ff_value = objective(feedforward)[0].item()

    init = white_noise_image(content.shape[0], content.shape[1], seed)
    _, reports = projected_lbfgs(objective, init, max_iter=iters, tolerance=0.0, log_every=0)
    curve = ParityCurve(name, [r.objective for r in reports], ff_value)
    logger.info("parity %s: feed-forward %.6g, crossover at iteration %s", name or '', ff_value, curve.crossover)
    return curve


def median_crossover(curves, iters):
    """Median crossover; curves that never cross count as iters + 1."""
    values = [c.crossover if c.crossover is not None else iters + 1 for c in curves]
    return float(np.median(values)) if values else None


def parity_rows(curves, iters):
    """One row per iteration: mean and stddev over images of both objectives."""
    lbfgs = np.array([c.padded(iters + 1) for c in curves], dtype=np.float64)
    ff = np.array([c.feedforward for c in curves], dtype=np.float64)
    rows = []
    for index in range(iters + 1):
        rows.append((index, lbfgs[:, index].mean(), lbfgs[:, index].std(), ff.mean(), ff.std()))
    return rows


def write_parity_csv(path, curves, iters):
    write_csv(path, PARITY_HEADER, parity_rows(curves, iters))


def parity_batch(model, samples, style, style_mask, loss_config, loss_net, iters, size=None, seed=0,
                 csv_path=None):
    """objective_parity over (name, image, mask) samples; returns (curves, median crossover)."""
    curves = []
    for index, (name, image, mask) in enumerate(samples):
        curves.append(objective_parity(model, image, mask, style, style_mask, loss_config, loss_net,
                                       iters, size=size, seed=seed + index, name=name))
    if csv_path is not None:
        write_parity_csv(csv_path, curves, iters)
    median = median_crossover(curves, iters)
    logger.info("objective parity over %d images: median crossover %s", len(curves), median)
    return curves, median
