"""Background/text fusion: ``G_fuse(E_back(background) + E_text(text_image))``."""

import math

import torch
from torch import nn

from .errors import InputError, NumericalError
from .neural import PatchGrid, TransformerConfig, ViTDecoder, ViTEncoder, image_loss


class FusionModel(nn.Module):
    def __init__(self, grid=None, cfg=None):
        super().__init__()
        self.grid = grid or PatchGrid()
        self.cfg = cfg or TransformerConfig()
        self.e_back = ViTEncoder(self.grid, self.cfg)
        self.e_text = ViTEncoder(self.grid, self.cfg)
        self.g_fuse = ViTDecoder(self.grid, self.cfg)

    def forward(self, background, text_image):
        return self.g_fuse(self.e_back(background) + self.e_text(text_image))


def fuse(background, text_image, model):
    dtype = model.g_fuse.head.weight.dtype
    background = torch.as_tensor(background, dtype=dtype)
    text_image = torch.as_tensor(text_image, dtype=dtype)
    if background.shape != text_image.shape:
        raise InputError(
            f"background {tuple(background.shape)} and text image {tuple(text_image.shape)} differ"
        )
    squeeze = background.dim() == 3
    if squeeze:
        background, text_image = background.unsqueeze(0), text_image.unsqueeze(0)
    g = model.grid
    if tuple(background.shape[1:]) != (g.strip_h, g.strip_w, g.channels):
        raise InputError(f"expected {g.strip_h}x{g.strip_w} strips, got {tuple(background.shape[1:])}")
    out = model(background, text_image).clamp(0.0, 1.0)
    return out[0] if squeeze else out


def fusion_train_step(background, text_image, target, model, opt, lr, lambda_p=0.1, net=None, step=0):
    """One step on (background, target text-image) -> target image."""
    model.train()
    loss = image_loss(model(background, text_image), target, lambda_p, net)
    if not math.isfinite(float(loss.detach())):
        raise NumericalError(f"non-finite fusion loss at step {step}")
    opt.zero_grad()
    loss.backward()
    opt.step(lr)
    return {"total": float(loss.detach())}
