"""Evaluation oracles: template OCR, BLEU, WER, Frechet distance, PSNR, font consistency."""

import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import InputError
from .imagegen import BG_CEILING, RenderSpec
from .neural.losses import frozen_feature_net
from .textcorpus.glyphs import default_atlas

INK_TOLERANCE = 1.0 - BG_CEILING
PSNR_CAP = 99.0

REPORT_SCHEMA = {
    "type": "object",
    "required": [
        "bleu",
        "wer",
        "fd_surrogate",
        "mean_psnr",
        "font_consistency",
        "n_samples",
        "config_hash",
    ],
    "properties": {
        "bleu": {"type": "number", "minimum": 0, "maximum": 100},
        "wer": {"type": "number", "minimum": 0},
        "fd_surrogate": {"type": "number", "minimum": 0},
        "mean_psnr": {"type": "number"},
        "font_consistency": {"type": "number", "minimum": 0, "maximum": 1},
        "n_samples": {"type": "integer", "minimum": 1},
        "config_hash": {"type": "string"},
        "labels": {"type": "object"},
    },
}


# --- OCR ----------------------------------------------------------------------


@dataclass
class OcrResult:
    text: str
    confidences: list
    cells: list = field(default_factory=list)  # per cell: (font_id, char) or None


def ink_map(img, text_color=(1.0, 1.0, 1.0), tol=INK_TOLERANCE):
    """1 where a pixel matches the text colour, falling to 0 at ``tol`` away."""
    img = np.asarray(img, dtype=np.float64)
    dist = np.abs(img - np.asarray(text_color, dtype=np.float64)).max(axis=-1)
    return np.clip(1.0 - dist / tol, 0.0, 1.0)


def _zscore_rows(a):
    a = a - a.mean(axis=1, keepdims=True)
    norm = np.linalg.norm(a, axis=1, keepdims=True)
    return np.divide(a, norm, out=np.zeros_like(a), where=norm > 1e-12)


_TEMPLATE_CACHE = {}


def _templates(atlas):
    key = id(atlas)
    hit = _TEMPLATE_CACHE.get(key)
    if hit is None or hit[0] is not atlas:
        keys, arr = atlas.stack()
        hit = (atlas, keys, _zscore_rows(arr))
        _TEMPLATE_CACHE[key] = hit
    return hit[1], hit[2]


def read_cells(img, atlas=None, threshold=0.6, spec=None, text_color=None):
    """Best (font, char) and correlation score for every cell of the render grid."""
    atlas = atlas or default_atlas()
    spec = spec or RenderSpec()
    color = spec.text_color if text_color is None else text_color
    ink = ink_map(img, color)
    n_cells = spec.max_chars(atlas.cell_w)
    top, left = spec.margin, spec.margin
    band = ink[top : top + atlas.cell_h, left : left + n_cells * atlas.cell_w]
    cells = band.reshape(atlas.cell_h, n_cells, atlas.cell_w).transpose(1, 0, 2)
    cells = cells.reshape(n_cells, -1)
    keys, tmpl = _templates(atlas)
    scores = _zscore_rows(cells) @ tmpl.T
    best = scores.argmax(axis=1)
    best_score = np.clip(scores[np.arange(n_cells), best], 0.0, 1.0)
    out = []
    for i in range(n_cells):
        if best_score[i] >= threshold:
            out.append((keys[best[i]], float(best_score[i])))
        else:
            out.append((None, float(best_score[i])))
    return out


def ocr_oracle(img, atlas=None, threshold=0.6, spec=None, text_color=None):
    """Read text from a strip by normalized correlation against every glyph template."""
    if not 0.0 < threshold <= 1.0:
        raise InputError("threshold must lie in (0, 1]")
    cells = read_cells(img, atlas, threshold, spec, text_color)
    while cells and cells[-1][0] is None:
        cells.pop()
    text = "".join(" " if key is None else key[1] for key, _ in cells)
    return OcrResult(text=text, confidences=[s for _, s in cells], cells=[k for k, _ in cells])


def font_consistency(src, out, atlas=None, threshold=0.6, spec=None):
    """Fraction of cells readable in both images whose best-matching font agrees."""
    a = read_cells(src, atlas, threshold, spec)
    b = read_cells(out, atlas, threshold, spec)
    pairs = [(ka[0], kb[0]) for (ka, _), (kb, _) in zip(a, b) if ka and kb]
    if not pairs:
        return 1.0
    return sum(fa == fb for fa, fb in pairs) / len(pairs)


# --- text metrics ----------------------------------------------------------------


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(hypotheses, references, max_order=4, smooth=1e-9):
    """Corpus BLEU x100 with whitespace tokens and a floor for zero n-gram matches."""
    if len(hypotheses) != len(references):
        raise InputError(
            f"{len(hypotheses)} hypotheses but {len(references)} references"
        )
    if not hypotheses:
        raise InputError("BLEU needs at least one sentence")
    matches = [0] * max_order
    totals = [0] * max_order
    hyp_len = ref_len = 0
    for hyp, ref in zip(hypotheses, references):
        h, r = hyp.split(), ref.split()
        hyp_len += len(h)
        ref_len += len(r)
        for n in range(1, max_order + 1):
            hc, rc = _ngrams(h, n), _ngrams(r, n)
            matches[n - 1] += sum(min(c, rc[g]) for g, c in hc.items())
            totals[n - 1] += max(len(h) - n + 1, 0)
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for m, t in zip(matches, totals):
        p = m / t if m > 0 else (smooth / t if t > 0 else smooth)
        log_p += math.log(p) / max_order
    bp = math.exp(min(0.0, 1.0 - ref_len / hyp_len))
    return 100.0 * bp * math.exp(log_p)


def _edit_distance(a, b):
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def word_error_rate(hypotheses, references):
    """Total word-level Levenshtein edits divided by total reference words."""
    if len(hypotheses) != len(references):
        raise InputError("hypothesis/reference count mismatch")
    edits = sum(_edit_distance(h.split(), r.split()) for h, r in zip(hypotheses, references))
    words = sum(len(r.split()) for r in references)
    return edits / max(words, 1)


# --- visual metrics --------------------------------------------------------------


@dataclass
class FeatureGaussian:
    mean: np.ndarray
    cov: np.ndarray


def _psd_sqrt(m):
    w, v = np.linalg.eigh((m + m.T) / 2.0)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(a, b):
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The trace of the product's square root is taken from the eigenvalues of
    the symmetric matrix sqrt(S_a) S_b sqrt(S_a), which has the same spectrum.
    """
    mu_a, mu_b = np.atleast_1d(a.mean), np.atleast_1d(b.mean)
    s_a, s_b = np.atleast_2d(a.cov), np.atleast_2d(b.cov)
    if mu_a.shape != mu_b.shape or s_a.shape != s_b.shape:
        raise InputError(f"dimension mismatch: {mu_a.shape} vs {mu_b.shape}")
    root_a = _psd_sqrt(s_a)
    inner = root_a @ s_b @ root_a
    eig = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_covmean = np.sqrt(np.clip(eig, 0.0, None)).sum()
    diff = mu_a - mu_b
    d2 = diff @ diff + np.trace(s_a) + np.trace(s_b) - 2.0 * tr_covmean
    return float(max(d2, 0.0))


@torch.no_grad()
def image_features(images, net=None, batch=32):
    """Global-average-pooled final tap of the frozen feature net: one vector per image."""
    net = net or frozen_feature_net(torch.float64)
    dtype = next(net.parameters()).dtype
    out = []
    for s in range(0, len(images), batch):
        x = torch.as_tensor(np.stack([np.asarray(im) for im in images[s : s + batch]]), dtype=dtype)
        out.append(net(x)[-1].mean(dim=(2, 3)).cpu().numpy().astype(np.float64))
    return np.concatenate(out)


def embed_images(images, net=None, shrinkage=1e-6):
    if len(images) < 2:
        raise InputError("need at least 2 images to fit a covariance")
    feats = image_features(images, net)
    mu = feats.mean(axis=0)
    cov = np.cov(feats, rowvar=False, ddof=1) + shrinkage * np.eye(feats.shape[1])
    return FeatureGaussian(mu, cov)


def psnr(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise InputError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(((a - b) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP
    return min(10.0 * math.log10(1.0 / mse), PSNR_CAP)
