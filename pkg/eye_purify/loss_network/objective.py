"""The full purification objective: weighted content, style and TV terms.

Global terms use the global layer sets and local (masked) terms use the
local sets, so with the default weights

    total = sum_l alpha_l * (lambda_g * gc_l + lambda_l * lc_l)
          + sum_l beta_l * (lambda_g * gs_l + lambda_l * ls_l)
          + theta * tv(O)

where gc_l/gs_l only appear for global layers and lc_l/ls_l only for
local layers.
"""

from collections import OrderedDict
import logging

import numpy as np

from eye_purify import constants, exceptions, settings
from eye_purify.autodiff import Tensor, no_grad
from eye_purify.loss_network import terms
from eye_purify.loss_network.network import as_batch, extract_features
from eye_purify.masks import LayerMasks, SemanticMask, downsample_masks


logger = logging.getLogger(__name__)


PRESET_DEFAULTS = {
    constants.LOSS_PRESET_SEMANTIC: {},
    constants.LOSS_PRESET_UNMASKED: {'lambda_local': 0.0, 'gram_normalization': constants.GRAM_RAW},
    constants.LOSS_PRESET_UNMASKED_NORMALIZED: {'lambda_local': 0.0,
                                                'gram_normalization': constants.GRAM_BY_ELEMENTS},
}


class LossConfig(object):
    """Layer selections and weights of the total objective."""

    def __init__(self, content_layers_local=constants.CONTENT_LAYERS_LOCAL,
                 style_layers_local=constants.STYLE_LAYERS_LOCAL,
                 content_layers_global=constants.CONTENT_LAYERS_GLOBAL,
                 style_layers_global=constants.STYLE_LAYERS_GLOBAL,
                 content_weight=None, style_weight=None,
                 lambda_global=None, lambda_local=None, tv_weight=None,
                 content_weights=None, style_weights=None,
                 gram_normalization=None, preset=None):
        self.content_layers_local = tuple(content_layers_local)
        self.style_layers_local = tuple(style_layers_local)
        self.content_layers_global = tuple(content_layers_global)
        self.style_layers_global = tuple(style_layers_global)
        self.content_weight = settings.CONTENT_WEIGHT if content_weight is None else float(content_weight)
        self.style_weight = settings.STYLE_WEIGHT if style_weight is None else float(style_weight)
        self.lambda_global = settings.LAMBDA_GLOBAL if lambda_global is None else float(lambda_global)
        self.lambda_local = settings.LAMBDA_LOCAL if lambda_local is None else float(lambda_local)
        self.tv_weight = settings.TV_WEIGHT if tv_weight is None else float(tv_weight)
        self.content_weights = dict(content_weights or {})
        self.style_weights = dict(style_weights or {})
        self.gram_normalization = gram_normalization or settings.GRAM_NORMALIZATION
        self.preset = preset or settings.LOSS_PRESET
        self.validate()

    @classmethod
    def from_preset(cls, preset, **overrides):
        """Preset defaults, then explicit overrides (None means not given)."""
        if preset not in PRESET_DEFAULTS:
            raise exceptions.ConfigurationError(
                "unknown loss preset '{}' (choose from {})".format(preset, ', '.join(constants.LOSS_PRESETS)))
        kwargs = dict(PRESET_DEFAULTS[preset])
        kwargs.update((k, v) for k, v in overrides.items() if v is not None)
        kwargs['preset'] = preset
        return cls(**kwargs)

    def validate(self):
        for name in ('content_layers_local', 'style_layers_local', 'content_layers_global', 'style_layers_global'):
            layers = getattr(self, name)
            if not layers:
                raise exceptions.ConfigurationError("{} must not be empty".format(name))
            for layer in layers:
                if layer not in constants.VGG19_LAYER_NAMES:
                    raise exceptions.UnknownLayerError(layer)
        for layer in list(self.content_weights) + list(self.style_weights):
            if layer not in constants.VGG19_LAYER_NAMES:
                raise exceptions.UnknownLayerError(layer)
        weights = [self.content_weight, self.style_weight, self.lambda_global, self.lambda_local, self.tv_weight]
        weights += list(self.content_weights.values()) + list(self.style_weights.values())
        if any(not np.isfinite(w) or w < 0 for w in weights):
            raise exceptions.ConfigurationError("loss weights must be finite and >= 0")
        if self.gram_normalization not in (constants.GRAM_RAW, constants.GRAM_BY_ELEMENTS):
            raise exceptions.ConfigurationError(
                "unknown Gram normalization '{}'".format(self.gram_normalization))
        if self.preset not in constants.LOSS_PRESETS:
            raise exceptions.ConfigurationError("unknown loss preset '{}'".format(self.preset))

    def alpha(self, layer):
        return self.content_weights.get(layer, self.content_weight)

    def beta(self, layer):
        return self.style_weights.get(layer, self.style_weight)

    @property
    def uses_masks(self):
        return self.lambda_local > 0

    def active_content_global(self):
        return tuple(l for l in self.content_layers_global if self.alpha(l) and self.lambda_global)

    def active_content_local(self):
        return tuple(l for l in self.content_layers_local if self.alpha(l) and self.lambda_local)

    def active_style_global(self):
        return tuple(l for l in self.style_layers_global if self.beta(l) and self.lambda_global)

    def active_style_local(self):
        return tuple(l for l in self.style_layers_local if self.beta(l) and self.lambda_local)

    def content_layers(self):
        return _ordered(self.active_content_global() + self.active_content_local())

    def style_layers(self):
        return _ordered(self.active_style_global() + self.active_style_local())

    def local_layers(self):
        return _ordered(self.active_content_local() + self.active_style_local())

    def items(self):
        """(key, value) pairs for logging the resolved configuration."""
        return [
            ('loss_preset', self.preset),
            ('content_weight', self.content_weight),
            ('style_weight', self.style_weight),
            ('lambda_global', self.lambda_global),
            ('lambda_local', self.lambda_local),
            ('tv_weight', self.tv_weight),
            ('gram_normalization', self.gram_normalization),
            ('content_layers_local', ','.join(self.content_layers_local)),
            ('style_layers_local', ','.join(self.style_layers_local)),
            ('content_layers_global', ','.join(self.content_layers_global)),
            ('style_layers_global', ','.join(self.style_layers_global)),
        ]


def _ordered(layers):
    seen = set(layers)
    return tuple(name for name in constants.VGG19_LAYER_NAMES if name in seen)


class LossBreakdown(object):
    """Weighted per-layer contributions; content + style + tv == total."""

    def __init__(self):
        self.content = OrderedDict()
        self.style = OrderedDict()
        self.tv = 0.0

    def add_content(self, key, value):
        self.content[key] = self.content.get(key, 0.0) + value

    def add_style(self, key, value):
        self.style[key] = self.style.get(key, 0.0) + value

    @property
    def content_total(self):
        return float(sum(self.content.values()))

    @property
    def style_total(self):
        return float(sum(self.style.values()))

    @property
    def total(self):
        return self.content_total + self.style_total + self.tv

    def as_row(self):
        return self.total, self.content_total, self.style_total, self.tv

    def __repr__(self):
        return "LossBreakdown(total={:.6g}, content={:.6g}, style={:.6g}, tv={:.6g})".format(*self.as_row())


def _layer_masks(mask, net, layers, name):
    """SemanticMask -> LayerMasks; LayerMasks pass through; None stays None."""
    if mask is None or isinstance(mask, LayerMasks):
        return mask
    if isinstance(mask, SemanticMask):
        return downsample_masks(mask, net, layers)
    if isinstance(mask, (list, tuple)):
        return stack_layer_masks(mask, net, layers)
    raise exceptions.ConfigurationError("{} must be a SemanticMask or LayerMasks".format(name))


def stack_layer_masks(masks, net, layers):
    """Per-sample LayerMasks with (B, C, h, w) arrays for a batch of SemanticMasks."""
    pyramids = [downsample_masks(m, net, layers) for m in masks]
    return LayerMasks((layer, np.stack([p[layer] for p in pyramids])) for layer in layers)


def _require(masks, layer):
    if masks is None:
        raise exceptions.MissingMaskError(layer)
    return masks.require(layer)


class StyleTarget(object):
    """Gram targets of the style image at every active style layer."""

    def __init__(self, net, config, image, mask=None):
        self.config = config
        layers = config.style_layers()
        local = set(config.active_style_local())
        self.masks = _layer_masks(mask, net, tuple(local), 'style mask') if local else None
        with no_grad():
            features = extract_features(net, as_batch(image), layers)
            self.grams = {}
            for layer in layers:
                layer_mask = _require(self.masks, layer) if layer in local else None
                self.grams[layer] = terms.GramTarget.from_features(
                    features[layer], layer_mask, config.gram_normalization, layer)


class ContentTarget(object):
    """Detached content features of the input image(s) and the input masks."""

    def __init__(self, net, config, images, masks=None):
        self.config = config
        with no_grad():
            self.features = extract_features(net, as_batch(images), config.content_layers())
        local = config.local_layers()
        self.masks = _layer_masks(masks, net, local, 'input mask') if local else None
        if self.masks is not None:
            for layer in local:
                self.masks.require(layer)


class PurificationObjective(object):
    """Callable total objective over output images for fixed style and content targets.

    Output images may be HxWx3 or an NCHW batch; a batch is compared
    sample by sample against a content batch of the same size and the
    loss is the batch mean.
    """

    def __init__(self, net, config, style_image, style_mask=None, content=None, content_mask=None):
        self.net = net
        self.config = config
        self.style = StyleTarget(net, config, style_image, style_mask)
        self.content = None
        if content is not None:
            self.set_content(content, content_mask)

    def set_content(self, images, masks=None):
        if self.config.local_layers() and masks is None:
            raise exceptions.MissingMaskError(self.config.local_layers()[0])
        self.content = ContentTarget(self.net, self.config, images, masks)

    def layers(self):
        return _ordered(self.config.content_layers() + self.config.style_layers())

    def __call__(self, output):
        if self.content is None:
            raise exceptions.ConfigurationError("objective has no content target")
        cfg = self.config
        batch = as_batch(output)
        features = extract_features(self.net, batch, self.layers())
        masks_I = self.content.masks
        breakdown = LossBreakdown()
        total = None

        def accumulate(term, weight, add, key):
            nonlocal total
            weighted = term * weight
            add(key, weighted.item())
            total = weighted if total is None else total + weighted

        for layer in cfg.active_content_global():
            accumulate(terms.content_loss_global(features[layer], self.content.features[layer]),
                       cfg.alpha(layer) * cfg.lambda_global, breakdown.add_content, layer)
        for layer in cfg.active_content_local():
            accumulate(terms.content_loss_local(features[layer], self.content.features[layer],
                                                _require(masks_I, layer), layer=layer),
                       cfg.alpha(layer) * cfg.lambda_local, breakdown.add_content, layer + '/local')
        for layer in cfg.active_style_global():
            accumulate(terms.global_style_against(features[layer], self.style.grams[layer]),
                       cfg.beta(layer) * cfg.lambda_global, breakdown.add_style, layer)
        for layer in cfg.active_style_local():
            accumulate(terms.local_style_against(features[layer], self.style.grams[layer],
                                                 _require(masks_I, layer), layer=layer),
                       cfg.beta(layer) * cfg.lambda_local, breakdown.add_style, layer + '/local')
        if cfg.tv_weight:
            tv = terms.tv_loss(batch) * cfg.tv_weight
            breakdown.tv = tv.item()
            total = tv if total is None else total + tv
        if total is None:
            total = Tensor(np.zeros((), dtype=batch.dtype))
        return total, breakdown


def total_loss(O, I, S, masks_I, masks_S, cfg, net):
    """L_total(O) + theta * TV(O) for single images; returns (loss Tensor, LossBreakdown)."""
    objective = PurificationObjective(net, cfg, S, masks_S, content=I, content_mask=masks_I)
    return objective(O)
