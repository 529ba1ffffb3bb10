from .checkpoint import load_checkpoint, params_digest, read_meta, save_checkpoint
from .layers import (
    PatchGrid,
    TransformerConfig,
    TransformerDecoder,
    TransformerEncoder,
    ViTDecoder,
    ViTEncoder,
    patchify,
    unpatchify,
)
from .losses import FrozenFeatureNet, frozen_feature_net, image_loss, label_smoothed_ce, perceptual_loss
from .optim import AdamW, adamw_step, init_adam_state, lr_at

__all__ = [
    "AdamW",
    "FrozenFeatureNet",
    "PatchGrid",
    "TransformerConfig",
    "TransformerDecoder",
    "TransformerEncoder",
    "ViTDecoder",
    "ViTEncoder",
    "adamw_step",
    "frozen_feature_net",
    "image_loss",
    "init_adam_state",
    "label_smoothed_ce",
    "load_checkpoint",
    "lr_at",
    "params_digest",
    "patchify",
    "perceptual_loss",
    "read_meta",
    "save_checkpoint",
    "unpatchify",
]
