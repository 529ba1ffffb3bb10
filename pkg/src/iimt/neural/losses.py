"""Image and sequence losses, plus the frozen feature network behind them."""

import hashlib

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import InputError

FEATURE_SEED = 20240917
_STAGES = ((3, 8), (8, 16), (16, 64))


class FrozenFeatureNet(nn.Module):
    """Three stride-2 conv stages with fixed, seeded random weights.

    Stands in for a pretrained perceptual network; the weights never train.
    Input images are (B, H, W, C) in [0, 1].
    """

    def __init__(self, seed=FEATURE_SEED):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.convs = nn.ModuleList()
        for c_in, c_out in _STAGES:
            # skip_init: building the net must not advance the global RNG
            conv = nn.utils.skip_init(nn.Conv2d, c_in, c_out, kernel_size=3, stride=2, padding=1)
            with torch.no_grad():
                std = (2.0 / (c_in * 9)) ** 0.5
                conv.weight.copy_(torch.randn(conv.weight.shape, generator=gen) * std)
                conv.bias.copy_(torch.randn(conv.bias.shape, generator=gen) * 0.1)
            self.convs.append(conv)
        self.requires_grad_(False)
        self.eval()

    def train(self, mode=True):
        # permanently in evaluation mode
        return super().train(False)

    @property
    def out_dim(self):
        return _STAGES[-1][1]

    def forward(self, img):
        x = img.permute(0, 3, 1, 2) * 2.0 - 1.0
        taps = []
        for conv in self.convs:
            x = F.gelu(conv(x))
            taps.append(x)
        return taps

    def checksum(self):
        h = hashlib.sha256()
        for name, t in sorted(self.state_dict().items()):
            h.update(name.encode())
            h.update(t.detach().cpu().contiguous().numpy().tobytes())
        return h.hexdigest()


_NETS = {}


def frozen_feature_net(dtype=torch.float32):
    """Shared instance per dtype (weights are identical; only precision differs)."""
    net = _NETS.get(dtype)
    if net is None:
        net = FrozenFeatureNet().to(dtype)
        _NETS[dtype] = net
    return net


def _unit_channels(f, eps=1e-10):
    return f / torch.sqrt((f * f).sum(dim=1, keepdim=True) + eps)


def perceptual_loss(y, y_hat, net):
    """Sum over taps of the mean squared difference of channel-normalised features."""
    total = y.new_zeros(())
    for fa, fb in zip(net(y), net(y_hat)):
        total = total + ((_unit_channels(fa) - _unit_channels(fb)) ** 2).mean()
    return total


def image_loss(y, y_hat, lambda_p=0.1, net=None, parts=False):
    """Pixel MSE plus ``lambda_p`` times the perceptual distance."""
    if y.shape != y_hat.shape:
        raise InputError(f"shape mismatch: {tuple(y.shape)} vs {tuple(y_hat.shape)}")
    if y.dim() == 3:
        y, y_hat = y.unsqueeze(0), y_hat.unsqueeze(0)
    mse = ((y - y_hat) ** 2).mean()
    if lambda_p == 0:
        perc = mse.new_zeros(())
    else:
        perc = perceptual_loss(y, y_hat, net if net is not None else frozen_feature_net(y.dtype))
    total = mse + lambda_p * perc
    if parts:
        return total, {"recon": mse, "perceptual": perc}
    return total


def label_smoothed_ce(logits, targets, eps=0.1, pad_id=None):
    """Mean label-smoothed cross-entropy over non-pad positions.

    The smoothing mass ``eps`` is spread uniformly over the whole vocabulary.
    """
    if not 0.0 <= eps < 1.0:
        raise InputError("label smoothing must lie in [0, 1)")
    logp = torch.log_softmax(logits, dim=-1)
    nll = -logp.gather(-1, targets.unsqueeze(-1)).squeeze(-1)
    smooth = -logp.mean(dim=-1)
    per_pos = (1.0 - eps) * nll + eps * smooth
    if pad_id is None:
        return per_pos.mean()
    keep = (targets != pad_id).to(per_pos.dtype)
    return (per_pos * keep).sum() / keep.sum().clamp_min(1.0)
