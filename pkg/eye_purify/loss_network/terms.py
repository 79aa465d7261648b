"""Content, style and total-variation loss terms.

Features are Tensors shaped (N, M), channels by flattened positions, or
batched (B, N, M). Batched terms return the mean over the batch unless
per_sample is set, in which case they return a (B,) Tensor.

Masks for one layer are arrays shaped (C, h, w), shared by the whole
batch, or (B, C, h, w), one per sample.
"""

import logging

import numpy as np

from eye_purify import constants, exceptions
from eye_purify.autodiff import as_tensor


logger = logging.getLogger(__name__)


def _check_features(F, name='features'):
    F = as_tensor(F)
    if F.ndim not in (2, 3):
        raise exceptions.ShapeError("{} must be (N, M) or (B, N, M)".format(name),
                                    expected='(N, M)', actual=F.shape)
    return F


def _reduce(per_sample, batched, keep):
    """per_sample is (B,) when batched; collapse to a scalar unless keep."""
    if not batched or keep:
        return per_sample
    return per_sample.mean()


def _square_error(diff, batched):
    sq = diff * diff
    return sq.sum(axis=(1, 2)) if batched else sq.sum()


def gram_matrix(F, normalization=constants.GRAM_RAW):
    """F F^T over the last two axes; by-elements divides by N * M."""
    F = _check_features(F)
    n, m = F.shape[-2:]
    axes = (0, 2, 1) if F.ndim == 3 else (1, 0)
    G = F @ F.transpose(axes)
    if normalization == constants.GRAM_BY_ELEMENTS:
        return G * (1.0 / (n * m))
    if normalization != constants.GRAM_RAW:
        raise exceptions.ConfigurationError("unknown Gram normalization '{}'".format(normalization))
    return G


def _flat_masks(masks, F, layer=None):
    masks = np.asarray(masks)
    if masks.ndim not in (3, 4):
        raise exceptions.ShapeError("layer masks must be (C, h, w) or (B, C, h, w)",
                                    expected='(C, h, w)', actual=masks.shape)
    m = F.shape[-1]
    if masks.shape[-2] * masks.shape[-1] != m:
        raise exceptions.ResolutionMismatchError(
            "mask at {}x{} does not cover {} feature positions{}".format(
                masks.shape[-1], masks.shape[-2], m, " at " + layer if layer else ""))
    if masks.ndim == 4:
        if F.ndim != 3 or masks.shape[0] != F.shape[0]:
            raise exceptions.ShapeError("per-sample masks need one mask per batch element",
                                        expected=F.shape[:1], actual=masks.shape[:1])
        return masks.reshape(masks.shape[0], masks.shape[1], 1, m)
    return masks.reshape(masks.shape[0], 1, m)


def masked_features(F, masks, layer=None):
    """One Tensor per mask channel c: every feature channel multiplied by mask channel c."""
    F = _check_features(F)
    flat = _flat_masks(masks, F, layer).astype(F.dtype)
    if flat.ndim == 4:
        return [F * flat[:, c] for c in range(flat.shape[1])]
    return [F * flat[c] for c in range(flat.shape[0])]


def _content_term(F_O, F_I, batched):
    n, m = F_O.shape[-2:]
    return _square_error(F_O - F_I, batched) * (1.0 / (2.0 * n * m))


def _check_pair(F_A, F_B, same_positions=True):
    F_A, F_B = _check_features(F_A), _check_features(F_B)
    if same_positions and F_A.shape[-2:] != F_B.shape[-2:]:
        raise exceptions.ShapeError("feature maps differ in shape", expected=F_A.shape, actual=F_B.shape)
    if F_A.shape[-2] != F_B.shape[-2]:
        raise exceptions.ShapeError("feature maps differ in channel count",
                                    expected=F_A.shape[-2], actual=F_B.shape[-2])
    return F_A, F_B


def content_loss_global(F_O, F_I, per_sample=False):
    """1 / (2 N M) * sum of squared feature differences."""
    F_O, F_I = _check_pair(F_O, F_I)
    batched = F_O.ndim == 3
    return _reduce(_content_term(F_O, F_I, batched), batched, per_sample)


def content_loss_local(F_O, F_I, masks, per_sample=False, layer=None):
    """Sum over mask channels of the content loss between masked features.

    Both images are masked with the input image's masks.
    """
    F_O, F_I = _check_pair(F_O, F_I)
    batched = F_O.ndim == 3
    total = None
    for O_c, I_c in zip(masked_features(F_O, masks, layer), masked_features(F_I, masks, layer)):
        term = _content_term(O_c, I_c, batched)
        total = term if total is None else total + term
    return _reduce(total, batched, per_sample)


def feature_loss(F_O, F_I, masks=None, lambda_global=1.0, lambda_local=1.0, per_sample=False, layer=None):
    loss = content_loss_global(F_O, F_I, per_sample) * lambda_global
    if lambda_local:
        if masks is None:
            raise exceptions.MissingMaskError(layer or '?')
        loss = loss + content_loss_local(F_O, F_I, masks, per_sample, layer) * lambda_local
    return loss


def _style_term(G_O, G_S, n, m, normalization, batched):
    """(G_O - G_S)^2 summed, with 1 / (4 N^2 M^2) for raw Grams."""
    err = _square_error(G_O - G_S, batched)
    if normalization == constants.GRAM_BY_ELEMENTS:
        return err
    return err * (1.0 / (4.0 * n * n * m * m))


class GramTarget(object):
    """Style Grams computed once: the global Gram and one Gram per mask channel."""

    def __init__(self, global_gram, local_grams=None, normalization=constants.GRAM_RAW):
        self.global_gram = global_gram
        self.local_grams = local_grams
        self.normalization = normalization

    @classmethod
    def from_features(cls, F_S, masks_S=None, normalization=constants.GRAM_RAW, layer=None):
        F_S = _check_features(F_S)
        local = None
        if masks_S is not None:
            local = [gram_matrix(S_c, normalization) for S_c in masked_features(F_S, masks_S, layer)]
        return cls(gram_matrix(F_S, normalization), local, normalization)

    @property
    def channels(self):
        return 0 if self.local_grams is None else len(self.local_grams)


def global_style_against(F_O, target, per_sample=False):
    """Global style loss of F_O against a precomputed GramTarget; N and M come from F_O."""
    F_O = _check_features(F_O)
    if F_O.shape[-2] != target.global_gram.shape[-1]:
        raise exceptions.ShapeError("feature maps differ in channel count",
                                    expected=target.global_gram.shape[-1], actual=F_O.shape[-2])
    batched = F_O.ndim == 3
    n, m = F_O.shape[-2:]
    G_O = gram_matrix(F_O, target.normalization)
    term = _style_term(G_O, target.global_gram, n, m, target.normalization, batched)
    return _reduce(term, batched, per_sample)


def local_style_against(F_O, target, masks_I, per_sample=False, layer=None):
    """Masked style loss of F_O (under the input masks) against per-channel target Grams."""
    F_O = _check_features(F_O)
    c_in = np.shape(masks_I)[-3]
    if target.local_grams is None:
        raise exceptions.MissingMaskError(layer or '?')
    if c_in != target.channels:
        raise exceptions.MaskError("input masks have {} channels but style masks have {}{}".format(
            c_in, target.channels, " at " + layer if layer else ""))
    batched = F_O.ndim == 3
    n, m = F_O.shape[-2:]
    total = None
    for O_c, G_S in zip(masked_features(F_O, masks_I, layer), target.local_grams):
        G_O = gram_matrix(O_c, target.normalization)
        term = _style_term(G_O, G_S, n, m, target.normalization, batched)
        total = term if total is None else total + term
    return _reduce(total, batched, per_sample)


def style_loss_global(F_O, F_S, normalization=constants.GRAM_RAW, per_sample=False):
    """1 / (4 N^2 M^2) * squared Gram difference; N and M are taken from the output features."""
    F_O, F_S = _check_pair(F_O, F_S, same_positions=False)
    return global_style_against(F_O, GramTarget.from_features(F_S, normalization=normalization), per_sample)


def style_loss_local(F_O, F_S, masks_I, masks_S, normalization=constants.GRAM_RAW,
                     per_sample=False, layer=None):
    """Sum over mask channels of the Gram loss between masked features.

    The output is masked with the input image's masks, the style image
    with its own.
    """
    F_O, F_S = _check_pair(F_O, F_S, same_positions=False)
    c_in, c_style = np.shape(masks_I)[-3], np.shape(masks_S)[-3]
    if c_in != c_style:
        raise exceptions.MaskError("input masks have {} channels but style masks have {}{}".format(
            c_in, c_style, " at " + layer if layer else ""))
    target = GramTarget.from_features(F_S, masks_S, normalization, layer)
    return local_style_against(F_O, target, masks_I, per_sample, layer)


def style_loss(F_O, F_S, masks_I=None, masks_S=None, lambda_global=1.0, lambda_local=1.0,
               normalization=constants.GRAM_RAW, per_sample=False, layer=None):
    loss = style_loss_global(F_O, F_S, normalization, per_sample) * lambda_global
    if lambda_local:
        if masks_I is None or masks_S is None:
            raise exceptions.MissingMaskError(layer or '?')
        loss = loss + style_loss_local(F_O, F_S, masks_I, masks_S, normalization,
                                       per_sample, layer) * lambda_local
    return loss


def tv_loss(image, per_sample=False):
    """Anisotropic squared-difference total variation divided by pixel count.

    image is HxWx3 or an NCHW batch.
    """
    image = as_tensor(image)
    if image.ndim == 3:
        height, width, channels = image.shape
        image = image.transpose(2, 0, 1).reshape(1, channels, height, width)
        batched = False
    elif image.ndim == 4:
        batched = True
    else:
        raise exceptions.ShapeError("tv_loss needs HxWx3 or NCHW", expected='HxWx3', actual=image.shape)
    h, w = image.shape[2:]
    if h < 2 or w < 2:
        raise exceptions.ShapeError("tv_loss needs at least 2x2 pixels", expected='>= 2x2', actual=(h, w))
    dx = image[:, :, :, 1:] - image[:, :, :, :-1]
    dy = image[:, :, 1:, :] - image[:, :, :-1, :]
    per = ((dx * dx).sum(axis=(1, 2, 3)) + (dy * dy).sum(axis=(1, 2, 3))) * (1.0 / (h * w))
    if not batched:
        return per.sum()
    return _reduce(per, True, per_sample)

