"""Background/text separation: two ViT encoders feeding two ViT decoders."""

import math

import torch
from torch import nn

from .errors import InputError, NumericalError
from .neural import PatchGrid, TransformerConfig, ViTDecoder, ViTEncoder, image_loss


class SeparationModel(nn.Module):
    def __init__(self, grid=None, cfg=None):
        super().__init__()
        self.grid = grid or PatchGrid()
        self.cfg = cfg or TransformerConfig()
        self.e_deback = ViTEncoder(self.grid, self.cfg)
        self.e_detext = ViTEncoder(self.grid, self.cfg)
        self.g_back = ViTDecoder(self.grid, self.cfg)
        self.g_text = ViTDecoder(self.grid, self.cfg)

    def forward(self, x):
        return self.g_back(self.e_deback(x)), self.g_text(self.e_detext(x))


def separate(x, model):
    """Split a composed strip into ``(background, text_image)``."""
    x = torch.as_tensor(x, dtype=model.g_back.head.weight.dtype)
    squeeze = x.dim() == 3
    if squeeze:
        x = x.unsqueeze(0)
    g = model.grid
    if tuple(x.shape[1:]) != (g.strip_h, g.strip_w, g.channels):
        raise InputError(f"expected {g.strip_h}x{g.strip_w}x{g.channels} input, got {tuple(x.shape[1:])}")
    bg, ti = model(x)
    bg, ti = bg.clamp(0.0, 1.0), ti.clamp(0.0, 1.0)
    return (bg[0], ti[0]) if squeeze else (bg, ti)


def separation_loss(pred_b, gt_b, pred_t, gt_t, lambda_p=0.1, net=None):
    return image_loss(pred_b, gt_b, lambda_p, net) + image_loss(pred_t, gt_t, lambda_p, net)


def separation_train_step(x, gt_b, gt_t, model, opt, lr, lambda_p=0.1, net=None, step=0):
    model.train()
    pred_b, pred_t = model(x)
    loss = separation_loss(pred_b, gt_b, pred_t, gt_t, lambda_p, net)
    if not math.isfinite(float(loss.detach())):
        raise NumericalError(f"non-finite separation loss at step {step}")
    opt.zero_grad()
    loss.backward()
    opt.step(lr)
    return {"total": float(loss.detach())}
