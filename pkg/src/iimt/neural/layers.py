"""Patch geometry and pre-norm transformer building blocks.

Attention is written out explicitly (no fused kernels) so the causal mask is
exact: masked positions receive weight 0.0 and cannot perturb earlier outputs.
"""

import math
from dataclasses import asdict, dataclass

import torch
import torch.nn.functional as F
from torch import nn

from ..errors import InputError


@dataclass(frozen=True)
class PatchGrid:
    patch_size: int = 16
    strip_h: int = 48
    strip_w: int = 512
    channels: int = 3

    def __post_init__(self):
        if self.strip_h % self.patch_size or self.strip_w % self.patch_size:
            raise InputError(
                f"{self.strip_h}x{self.strip_w} is not divisible by patch size {self.patch_size}"
            )

    @property
    def rows(self):
        return self.strip_h // self.patch_size

    @property
    def cols(self):
        return self.strip_w // self.patch_size

    @property
    def n(self):
        return self.rows * self.cols

    @property
    def patch_dim(self):
        return self.patch_size * self.patch_size * self.channels

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class TransformerConfig:
    d_model: int = 128
    layer_count: int = 2
    head_count: int = 4
    d_ff: int = 512
    dropout_rate: float = 0.3
    max_positions: int = 128

    def __post_init__(self):
        if self.d_model % self.head_count:
            raise InputError("d_model must be divisible by head_count")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise InputError("dropout_rate must lie in [0, 1)")

    def to_dict(self):
        return asdict(self)


def patchify(img, grid):
    """(B, H, W, C) or (H, W, C) -> (B, N, p*p*C) / (N, p*p*C), raster order."""
    img = torch.as_tensor(img)
    squeeze = img.dim() == 3
    if squeeze:
        img = img.unsqueeze(0)
    b, h, w, c = img.shape
    if (h, w, c) != (grid.strip_h, grid.strip_w, grid.channels):
        raise InputError(
            f"image {h}x{w}x{c} does not match grid {grid.strip_h}x{grid.strip_w}x{grid.channels}"
        )
    p = grid.patch_size
    x = img.reshape(b, grid.rows, p, grid.cols, p, c).permute(0, 1, 3, 2, 4, 5)
    x = x.reshape(b, grid.n, grid.patch_dim)
    return x[0] if squeeze else x


def unpatchify(seq, grid):
    seq = torch.as_tensor(seq)
    squeeze = seq.dim() == 2
    if squeeze:
        seq = seq.unsqueeze(0)
    b, n, dim = seq.shape
    if n != grid.n or dim != grid.patch_dim:
        raise InputError(f"sequence {n}x{dim} does not match grid {grid.n}x{grid.patch_dim}")
    p, c = grid.patch_size, grid.channels
    x = seq.reshape(b, grid.rows, grid.cols, p, p, c).permute(0, 1, 3, 2, 4, 5)
    x = x.reshape(b, grid.strip_h, grid.strip_w, c)
    return x[0] if squeeze else x


class Attention(nn.Module):
    def __init__(self, d_model, heads, dropout, d_kv=None):
        super().__init__()
        self.heads = heads
        self.q = nn.Linear(d_model, d_model)
        self.k = nn.Linear(d_kv or d_model, d_model)
        self.v = nn.Linear(d_kv or d_model, d_model)
        self.out = nn.Linear(d_model, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x, kv=None, causal=False, kv_mask=None):
        kv = x if kv is None else kv
        b, lq, d = x.shape
        lk = kv.shape[1]
        hd = d // self.heads
        q = self.q(x).view(b, lq, self.heads, hd).transpose(1, 2)
        k = self.k(kv).view(b, lk, self.heads, hd).transpose(1, 2)
        v = self.v(kv).view(b, lk, self.heads, hd).transpose(1, 2)
        scores = q @ k.transpose(-1, -2) / math.sqrt(hd)
        if causal:
            future = torch.ones(lq, lk, dtype=torch.bool, device=x.device).triu(1)
            scores = scores.masked_fill(future, float("-inf"))
        if kv_mask is not None:
            # kv_mask: (B, lk) True where the key is valid
            scores = scores.masked_fill(~kv_mask[:, None, None, :], float("-inf"))
        attn = self.drop(torch.softmax(scores, dim=-1))
        y = (attn @ v).transpose(1, 2).reshape(b, lq, d)
        return self.out(y)


class FeedForward(nn.Module):
    def __init__(self, d_model, d_ff, dropout):
        super().__init__()
        self.fc1 = nn.Linear(d_model, d_ff)
        self.fc2 = nn.Linear(d_ff, d_model)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        return self.fc2(self.drop(F.gelu(self.fc1(x))))


class EncoderBlock(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.attn = Attention(cfg.d_model, cfg.head_count, cfg.dropout_rate)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout_rate)
        self.drop = nn.Dropout(cfg.dropout_rate)

    def forward(self, x):
        x = x + self.drop(self.attn(self.norm1(x)))
        return x + self.drop(self.ff(self.norm2(x)))


class DecoderBlock(nn.Module):
    def __init__(self, cfg):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.d_model)
        self.self_attn = Attention(cfg.d_model, cfg.head_count, cfg.dropout_rate)
        self.norm2 = nn.LayerNorm(cfg.d_model)
        self.cross_attn = Attention(cfg.d_model, cfg.head_count, cfg.dropout_rate)
        self.norm3 = nn.LayerNorm(cfg.d_model)
        self.ff = FeedForward(cfg.d_model, cfg.d_ff, cfg.dropout_rate)
        self.drop = nn.Dropout(cfg.dropout_rate)

    def forward(self, x, memory, memory_mask=None):
        x = x + self.drop(self.self_attn(self.norm1(x), causal=True))
        x = x + self.drop(self.cross_attn(self.norm2(x), memory, kv_mask=memory_mask))
        return x + self.drop(self.ff(self.norm3(x)))


class TransformerEncoder(nn.Module):
    """Bidirectional stack with learnable positions: ``encode`` in the toolkit."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.pos = nn.Parameter(torch.randn(cfg.max_positions, cfg.d_model) * 0.02)
        self.drop = nn.Dropout(cfg.dropout_rate)
        self.blocks = nn.ModuleList(EncoderBlock(cfg) for _ in range(cfg.layer_count))
        self.norm = nn.LayerNorm(cfg.d_model)

    def forward(self, x):
        if x.shape[1] > self.cfg.max_positions:
            raise InputError(
                f"sequence length {x.shape[1]} exceeds max_positions {self.cfg.max_positions}"
            )
        x = self.drop(x + self.pos[: x.shape[1]])
        for blk in self.blocks:
            x = blk(x)
        return self.norm(x)


class TransformerDecoder(nn.Module):
    """Causal stack attending to a memory: ``Decoder(Q=tgt, K=V=memory)``."""

    def __init__(self, cfg):
        super().__init__()
        self.cfg = cfg
        self.pos = nn.Parameter(torch.randn(cfg.max_positions, cfg.d_model) * 0.02)
        self.drop = nn.Dropout(cfg.dropout_rate)
        self.blocks = nn.ModuleList(DecoderBlock(cfg) for _ in range(cfg.layer_count))
        self.norm = nn.LayerNorm(cfg.d_model)

    def forward(self, tgt, memory, memory_mask=None):
        if memory.shape[1] == 0:
            raise InputError("decoder memory must be nonempty")
        for name, seq in (("target", tgt), ("memory", memory)):
            if seq.shape[1] > self.cfg.max_positions:
                raise InputError(
                    f"{name} length {seq.shape[1]} exceeds max_positions {self.cfg.max_positions}"
                )
        x = self.drop(tgt + self.pos[: tgt.shape[1]])
        for blk in self.blocks:
            x = blk(x, memory, memory_mask)
        return self.norm(x)


class ViTEncoder(nn.Module):
    """Linear patch embedding (a stride=kernel=patch convolution) + encoder stack."""

    def __init__(self, grid, cfg):
        super().__init__()
        self.grid = grid
        self.embed = nn.Linear(grid.patch_dim, cfg.d_model)
        self.body = TransformerEncoder(cfg)

    def forward(self, img):
        return self.body(self.embed(patchify(img, self.grid)))


class ViTDecoder(nn.Module):
    """Encoder stack followed by a per-patch linear (transposed-conv) pixel head."""

    def __init__(self, grid, cfg, d_in=None):
        super().__init__()
        self.grid = grid
        self.inp = nn.Linear(d_in, cfg.d_model) if d_in and d_in != cfg.d_model else nn.Identity()
        self.body = TransformerEncoder(cfg)
        self.head = nn.Linear(cfg.d_model, grid.patch_dim)

    def forward(self, h):
        return unpatchify(torch.sigmoid(self.head(self.body(self.inp(h)))), self.grid)
