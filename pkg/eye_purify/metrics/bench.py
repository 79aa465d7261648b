"""Wall-clock comparison of feed-forward inference against explicit optimization."""

import logging
import time

import numpy as np

from eye_purify import constants, exceptions, settings
from eye_purify.files import write_csv
from eye_purify.loss_network import PurificationObjective
from eye_purify.masks import disc_mask
from eye_purify.optimizers.lbfgs import projected_lbfgs, white_noise_image


logger = logging.getLogger(__name__)

FEED_FORWARD = 'feed-forward'


class BenchRow(object):

    __slots__ = ('method', 'resolution', 'seconds', 'speedup')

    def __init__(self, method, resolution, seconds, speedup):
        if not seconds > 0:
            raise exceptions.ConfigurationError("bench seconds must be > 0, got {}".format(seconds))
        self.method, self.resolution, self.seconds, self.speedup = method, resolution, seconds, speedup

    def as_row(self):
        return (self.method, self.resolution, '{:.6f}'.format(self.seconds), '{:.2f}'.format(self.speedup))

    def __repr__(self):
        return "BenchRow({}, {}, {:.4f}s, {:.1f}x)".format(self.method, self.resolution, self.seconds, self.speedup)


def lbfgs_method(iters):
    return 'lbfgs-{}-iters'.format(iters)


def _timed(fn):
    started = time.perf_counter()
    fn()
    return max(time.perf_counter() - started, 1e-9)


def median_seconds(fn, repeats):
    return float(np.median([_timed(fn) for _ in range(max(repeats, 1))]))


def _bench_resolution(model, size, lbfgs_iters, loss_net, loss_config, repeats, seed):
    content = white_noise_image(size, size, seed)
    style = white_noise_image(size, size, seed + 1)
    mask = disc_mask(size, size)
    ff_seconds = median_seconds(lambda: model.stylize(content), repeats)

    objective = PurificationObjective(loss_net, loss_config, style, mask, content, mask)
    init = white_noise_image(size, size, seed + 2)
    lbfgs_seconds = _timed(lambda: projected_lbfgs(objective, init, max_iter=lbfgs_iters, tolerance=0.0,
                                                   gradient_tolerance=0.0, log_every=0))
    logger.info("bench %dx%d: feed-forward %.4fs, %d L-BFGS iterations %.3fs",
                size, size, ff_seconds, lbfgs_iters, lbfgs_seconds)
    return [BenchRow(FEED_FORWARD, size, ff_seconds, lbfgs_seconds / ff_seconds),
            BenchRow(lbfgs_method(lbfgs_iters), size, lbfgs_seconds, 1.0)]


def bench(model, resolutions, lbfgs_iters, loss_net, loss_config, repeats=None, seed=0):
    """Median of `repeats` feed-forward passes and one L-BFGS run per resolution.

    A resolution that runs out of memory is skipped with a diagnostic.
    """
    repeats = settings.BENCH_REPEATS if repeats is None else repeats
    rows = []
    for size in resolutions:
        try:
            rows.extend(_bench_resolution(model, size, lbfgs_iters, loss_net, loss_config, repeats, seed))
        except MemoryError:
            exceptions.BenchSkipped("out of memory at {0}x{0}, row skipped".format(size)).err_continue_msg()
    return rows


def render_table(rows):
    """Aligned plain-text table with the CSV columns."""
    table = [tuple(h for h in constants.BENCH_HEADER)] + [tuple(str(v) for v in r.as_row()) for r in rows]
    widths = [max(len(line[i]) for line in table) for i in range(len(constants.BENCH_HEADER))]
    lines = ['  '.join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in table]
    lines.insert(1, '  '.join('-' * w for w in widths))
    return '\n'.join(lines)


def write_bench_csv(path, rows):
    write_csv(path, constants.BENCH_HEADER, [r.as_row() for r in rows])
