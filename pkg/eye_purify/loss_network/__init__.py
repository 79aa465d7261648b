"""Fixed loss network and the masked perceptual objective built on it."""

from eye_purify.loss_network.network import (  # noqa: F401
    FeatureStack, LossNet, as_batch, build_loss_net, extract_features, load_loss_net, save_loss_net,
)
from eye_purify.loss_network.terms import (  # noqa: F401
    GramTarget, content_loss_global, content_loss_local, feature_loss, gram_matrix, masked_features,
    style_loss, style_loss_global, style_loss_local, tv_loss,
)
from eye_purify.loss_network.objective import (  # noqa: F401
    ContentTarget, LossBreakdown, LossConfig, PurificationObjective, StyleTarget, stack_layer_masks,
    total_loss,
)
