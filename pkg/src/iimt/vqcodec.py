"""Image tokenizer: ViT encoder, factorized EMA codebook, ViT decoder."""

import math
from dataclasses import dataclass

import torch
from torch import nn

from .errors import InputError, NumericalError
from .neural import PatchGrid, TransformerConfig, ViTDecoder, ViTEncoder, image_loss


class CodebookState(nn.Module):
    """``V`` code vectors plus EMA accumulators, all stored as buffers.

    The optimizer never sees these tensors; :func:`ema_update` is the only writer.
    """

    def __init__(self, size=512, dim=32, gamma=0.99, eps=1e-5, seed=0):
        super().__init__()
        self.size = size
        self.dim = dim
        self.gamma = gamma
        self.eps = eps
        gen = torch.Generator().manual_seed(seed)
        init = (torch.rand(size, dim, generator=gen) * 2.0 - 1.0) / size
        self.register_buffer("vectors", init)
        # start as if each code had absorbed one sample equal to itself
        self.register_buffer("ema_counts", torch.ones(size))
        self.register_buffer("ema_sums", init.clone())
        self.register_buffer("last_used", torch.zeros(size))


def quantize(features, book, shortlist=8):
    """Nearest code by Euclidean distance; ties go to the lowest index.

    ``features`` is (..., d). Returns ``(codes, quantized)`` with matching
    leading shape. Distances are first ranked with the fast expanded form
    ||f||^2 - 2 f.e + ||e||^2; a shortlist is then re-scored exactly as
    sum((f - e)^2), and rows whose shortlist cannot be trusted fall back to
    a full exact scan, so the result equals a brute-force search.
    """
    vectors = book.vectors if isinstance(book, CodebookState) else book
    if not torch.isfinite(features).all():
        raise NumericalError("non-finite features passed to the quantizer")
    lead = features.shape[:-1]
    flat = features.reshape(-1, features.shape[-1])
    vectors = vectors.to(flat.dtype)
    k = min(shortlist, vectors.shape[0])
    f2 = (flat * flat).sum(1, keepdim=True)
    e2 = (vectors * vectors).sum(1)
    approx = f2 - 2.0 * flat @ vectors.T + e2
    cand_d, cand = torch.topk(approx, k, dim=1, largest=False, sorted=True)
    # bound on the rounding error of the expanded form
    tol = 64 * torch.finfo(flat.dtype).eps * (f2.squeeze(1) + e2.max()) + 1e-30
    exact = ((flat[:, None, :] - vectors[cand]) ** 2).sum(-1)
    # lowest index among exact minima inside the shortlist
    order = torch.argsort(cand, dim=1)
    cand, exact = cand.gather(1, order), exact.gather(1, order)
    codes = cand.gather(1, torch.argmin(exact, dim=1, keepdim=True)).squeeze(1)
    unsure = cand_d[:, -1] - cand_d[:, 0] <= 2 * tol if k < vectors.shape[0] else torch.zeros_like(tol, dtype=torch.bool)
    if unsure.any():
        rows = torch.nonzero(unsure).flatten()
        full = ((flat[rows][:, None, :] - vectors[None]) ** 2).sum(-1)
        codes[rows] = torch.argmin(full, dim=1)
    return codes.reshape(lead), vectors[codes].reshape(*lead, vectors.shape[-1])


@torch.no_grad()
def ema_update(book, features, codes, gamma=None):
    """Exponential moving average of assignment counts and feature sums per code."""
    gamma = book.gamma if gamma is None else gamma
    if not 0.0 < gamma < 1.0:
        raise InputError("gamma must lie in (0, 1)")
    flat = features.reshape(-1, features.shape[-1]).to(book.ema_sums.dtype)
    idx = codes.reshape(-1)
    counts = torch.zeros_like(book.ema_counts).index_add_(0, idx, torch.ones_like(idx, dtype=flat.dtype))
    sums = torch.zeros_like(book.ema_sums).index_add_(0, idx, flat)
    book.ema_counts.mul_(gamma).add_(counts, alpha=1.0 - gamma)
    book.ema_sums.mul_(gamma).add_(sums, alpha=1.0 - gamma)
    book.vectors.copy_(book.ema_sums / book.ema_counts.clamp_min(book.eps)[:, None])
    return book


@torch.no_grad()
def reseed_dead_codes(book, features, codes, step, after, generator=None):
    """Move codes unused for ``after`` steps onto random batch features."""
    used = torch.unique(codes.reshape(-1))
    book.last_used[used] = float(step)
    dead = torch.nonzero(step - book.last_used >= after).flatten()
    if dead.numel() == 0:
        return 0
    flat = features.reshape(-1, features.shape[-1])
    pick = torch.randint(flat.shape[0], (dead.numel(),), generator=generator)
    book.vectors[dead] = flat[pick]
    book.ema_sums[dead] = flat[pick]
    book.ema_counts[dead] = 1.0
    book.last_used[dead] = float(step)
    return int(dead.numel())


@dataclass(frozen=True)
class CodecConfig:
    codebook_size: int = 512
    code_dim: int = 32
    gamma: float = 0.99
    eps: float = 1e-5
    reseed_after: int = 0  # 0 disables dead-code reseeding
    reseed_until: int = 0  # last step that may reseed; 0 means no cutoff


class VQCodec(nn.Module):
    def __init__(self, grid=None, cfg=None, codec=None, seed=0):
        super().__init__()
        self.grid = grid or PatchGrid()
        self.cfg = cfg or TransformerConfig()
        self.codec = codec or CodecConfig()
        self.encoder = ViTEncoder(self.grid, self.cfg)
        self.pre_proj = nn.Linear(self.cfg.d_model, self.codec.code_dim)
        self.book = CodebookState(
            self.codec.codebook_size, self.codec.code_dim, self.codec.gamma, self.codec.eps, seed
        )
        self.post_proj = nn.Linear(self.codec.code_dim, self.cfg.d_model)
        self.decoder = ViTDecoder(self.grid, self.cfg)

    @property
    def size(self):
        return self.codec.codebook_size

    def features(self, img):
        return self.pre_proj(self.encoder(img))

    def encode(self, img):
        """Image(s) -> code indices of length N (raster order)."""
        img = torch.as_tensor(img, dtype=self.pre_proj.weight.dtype)
        squeeze = img.dim() == 3
        if squeeze:
            img = img.unsqueeze(0)
        codes, _ = quantize(self.features(img), self.book)
        return codes[0] if squeeze else codes

    def decode(self, codes):
        codes = torch.as_tensor(codes, dtype=torch.long)
        squeeze = codes.dim() == 1
        if squeeze:
            codes = codes.unsqueeze(0)
        bad = (codes < 0) | (codes >= self.size)
        if bad.any():
            b, pos = [int(v) for v in torch.nonzero(bad)[0]]
            raise InputError(
                f"code index {int(codes[b, pos])} at position {pos} is outside [0, {self.size})"
            )
        if codes.shape[-1] != self.grid.n:
            raise InputError(f"expected {self.grid.n} codes, got {codes.shape[-1]}")
        img = self.decoder(self.post_proj(self.book.vectors[codes]))
        return img[0] if squeeze else img

    def loss_terms(self, img, lambda_p=0.1, net=None, codes=None, anchor=None):
        """Reconstruction + perceptual + commitment terms of the stage-1 objective.

        Default behaviour is the straight-through estimator. Passing frozen
        ``codes`` and an ``anchor`` (the encoder features at which the codes
        were chosen) evaluates the same estimator as an explicit function of
        the parameters, which is what a finite-difference check needs.
        """
        feats = self.features(img)
        if codes is None:
            codes, zq = quantize(feats.detach(), self.book)
        else:
            zq = self.book.vectors.to(feats.dtype)[codes]
        if anchor is None:
            z = feats + (zq - feats).detach()
        else:
            z = zq + (feats - anchor)
        recon_img = self.decoder(self.post_proj(z))
        _, parts = image_loss(recon_img, img, lambda_p, net, parts=True)
        commit = ((zq.detach() - feats) ** 2).sum(-1).mean()
        total = parts["recon"] + lambda_p * parts["perceptual"] + commit
        return {
            "total": total,
            "recon": parts["recon"],
            "perceptual": parts["perceptual"],
            "commitment": commit,
            "codes": codes,
            "features": feats.detach(),
            "output": recon_img,
        }


def vq_train_step(img, model, opt, lr, lambda_p=0.1, net=None, step=0, generator=None):
    """Gradient step on encoder/decoder/projections; EMA step on the codebook."""
    model.train()
    terms = model.loss_terms(img, lambda_p, net)
    if not math.isfinite(float(terms["total"].detach())):
        raise NumericalError(f"non-finite stage-1 loss at step {step}")
    opt.zero_grad()
    terms["total"].backward()
    opt.step(lr)
    ema_update(model.book, terms["features"], terms["codes"])
    c = model.codec
    if c.reseed_after and (not c.reseed_until or step <= c.reseed_until):
        reseed_dead_codes(
            model.book, terms["features"], terms["codes"], step, model.codec.reseed_after, generator
        )
    return {k: float(terms[k].detach()) for k in ("total", "recon", "perceptual", "commitment")}
