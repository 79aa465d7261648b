"""Projected L-BFGS over images and Adam training of the transform network."""

from eye_purify.optimizers.adam import Adam, adam_step, init_state  # noqa: F401
from eye_purify.optimizers.lbfgs import OptimizeReport, projected_lbfgs, white_noise_image  # noqa: F401
from eye_purify.optimizers.training import (  # noqa: F401
    Sample, TrainConfig, load_corpus, smooth_curve, train_transform,
)
