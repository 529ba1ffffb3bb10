"""Code-to-code translation with a pivot text decoder.

Training is teacher-forced on both streams. Inference runs in two phases:
greedy text decoding first, then greedy decoding of exactly ``N`` codes
conditioned on the adapted pivot states of the finished text.
"""

import math
from dataclasses import dataclass, field

import torch
from torch import nn

from .errors import InputError, NumericalError
from .neural import TransformerConfig, TransformerDecoder, TransformerEncoder, label_smoothed_ce
from .textcorpus.bpe import BOS, EOS, PAD


@dataclass(frozen=True)
class TranslatorConfig:
    codebook_size: int = 512
    code_length: int = 96
    text_vocab: int = 1042
    max_text_len: int = 64
    small: TransformerConfig = field(default_factory=lambda: TransformerConfig(128, 2, 4, 512))
    large: TransformerConfig = field(default_factory=lambda: TransformerConfig(256, 2, 8, 1024))
    use_pivot: bool = True

    @property
    def bos_code(self):
        return self.codebook_size


class Translator(nn.Module):
    def __init__(self, cfg=None):
        super().__init__()
        self.cfg = cfg = cfg or TranslatorConfig()
        if cfg.small.max_positions < max(cfg.code_length, cfg.max_text_len + 1):
            raise InputError("small transformer max_positions too short for codes/text")
        if cfg.large.max_positions < cfg.code_length:
            raise InputError("large transformer max_positions too short for codes")
        v1 = cfg.codebook_size + 1
        self.src_code_embedding = nn.Embedding(v1, cfg.small.d_model)
        self.tgt_code_embedding = nn.Embedding(v1, cfg.large.d_model)
        self.code_encoder = TransformerEncoder(cfg.small)
        if cfg.use_pivot:
            self.text_embedding = nn.Embedding(cfg.text_vocab, cfg.small.d_model)
            self.pivot_decoder = TransformerDecoder(cfg.small)
            self.text_out = nn.Linear(cfg.small.d_model, cfg.text_vocab)
        self.adapter = nn.Linear(cfg.small.d_model, cfg.large.d_model)
        self.code_decoder = TransformerDecoder(cfg.large)
        self.code_out = nn.Linear(cfg.large.d_model, cfg.codebook_size)

    # pieces -----------------------------------------------------------------

    def encode_codes(self, src_codes):
        self._check_codes(src_codes, "source")
        return self.code_encoder(self.src_code_embedding(src_codes))

    def pivot(self, text_in, h_code):
        if text_in.shape[1] > self.cfg.max_text_len + 1:
            raise InputError(f"text length {text_in.shape[1]} exceeds max_text_len + 1")
        return self.pivot_decoder(self.text_embedding(text_in), h_code)

    def decode_codes(self, code_in, memory, memory_mask=None):
        return self.code_out(self.code_decoder(self.tgt_code_embedding(code_in), memory, memory_mask))

    def _check_codes(self, codes, which):
        if codes.shape[-1] != self.cfg.code_length:
            raise InputError(f"{which} code length {codes.shape[-1]} != {self.cfg.code_length}")

    def shift_codes(self, tgt_codes):
        bos = torch.full_like(tgt_codes[:, :1], self.cfg.bos_code)
        return torch.cat([bos, tgt_codes[:, :-1]], dim=1)

    # full teacher-forced pass -------------------------------------------------

    def forward(self, src_codes, tgt_codes, text_in=None):
        """Returns ``(text_logits, code_logits)``; text logits are None without a pivot."""
        self._check_codes(tgt_codes, "target")
        h_code = self.encode_codes(src_codes)
        if self.cfg.use_pivot:
            h_pivot = self.pivot(text_in, h_code)
            text_logits = self.text_out(h_pivot)
            memory, mask = self.adapter(h_pivot), text_in != PAD
        else:
            text_logits = None
            memory, mask = self.adapter(h_code), None
        code_logits = self.decode_codes(self.shift_codes(tgt_codes), memory, mask)
        return text_logits, code_logits


def text_batch(token_lists, max_text_len):
    """BOS-prefixed inputs and EOS-suffixed labels, right-padded with PAD."""
    for toks in token_lists:
        if len(toks) + 1 > max_text_len + 1:
            raise InputError(f"text of {len(toks)} tokens exceeds max_text_len={max_text_len}")
    width = max(len(t) for t in token_lists) + 1
    inp = torch.full((len(token_lists), width), PAD, dtype=torch.long)
    lab = torch.full((len(token_lists), width), PAD, dtype=torch.long)
    for i, toks in enumerate(token_lists):
        inp[i, : len(toks) + 1] = torch.tensor([BOS] + list(toks))
        lab[i, : len(toks) + 1] = torch.tensor(list(toks) + [EOS])
    return inp, lab


def translation_loss(text_logits, code_logits, text_labels, tgt_codes, eps=0.1):
    """``(L_TIT, L_code, L_trans)``; L_TIT is zero when there is no text stream."""
    l_code = label_smoothed_ce(code_logits, tgt_codes, eps)
    if text_logits is None:
        l_tit = l_code.new_zeros(())
    else:
        l_tit = label_smoothed_ce(text_logits, text_labels, eps, pad_id=PAD)
    return l_tit, l_code, l_tit + l_code


def translate_train_step(src_codes, tgt_codes, text_in, text_labels, model, opt, lr, eps=0.1, step=0):
    model.train()
    text_logits, code_logits = model(src_codes, tgt_codes, text_in)
    l_tit, l_code, total = translation_loss(text_logits, code_logits, text_labels, tgt_codes, eps)
    if not math.isfinite(float(total.detach())):
        raise NumericalError(f"non-finite translation loss at step {step}")
    opt.zero_grad()
    total.backward()
    opt.step(lr)
    return {"total": float(total.detach()), "tit": float(l_tit.detach()), "code": float(l_code.detach())}


@dataclass
class Translation:
    codes: torch.Tensor
    pivot_tokens: list
    truncated: bool


@torch.no_grad()
def translate_codes(src_codes, model, max_text_len=None, hook=None):
    """Two-phase greedy decoding for a batch of source code sequences.

    ``hook(event, payload)`` is called with ``"text_done"`` once phase 1 ends
    and with ``"code_step"`` on every phase-2 step (instrumentation only).
    """
    model.eval()
    cfg = model.cfg
    src_codes = torch.as_tensor(src_codes, dtype=torch.long)
    squeeze = src_codes.dim() == 1
    if squeeze:
        src_codes = src_codes.unsqueeze(0)
    max_text_len = cfg.max_text_len if max_text_len is None else min(max_text_len, cfg.max_text_len)
    b = src_codes.shape[0]
    h_code = model.encode_codes(src_codes)

    tokens = [[] for _ in range(b)]
    truncated = [False] * b
    if cfg.use_pivot:
        seq = torch.full((b, 1), BOS, dtype=torch.long)
        done = torch.zeros(b, dtype=torch.bool)
        for _ in range(max_text_len):
            nxt = model.text_out(model.pivot(seq, h_code)[:, -1]).argmax(-1)
            for i in range(b):
                if not done[i]:
                    if int(nxt[i]) == EOS:
                        done[i] = True
                    else:
                        tokens[i].append(int(nxt[i]))
            if done.all():
                break
            seq = torch.cat([seq, torch.where(done, torch.full_like(nxt, PAD), nxt)[:, None]], 1)
        for i in range(b):
            truncated[i] = not bool(done[i])
        # pivot states over BOS + every decoded token (the EOS-producing position included)
        inp = torch.full((b, max(len(t) for t in tokens) + 1), PAD, dtype=torch.long)
        for i, toks in enumerate(tokens):
            inp[i, : len(toks) + 1] = torch.tensor([BOS] + toks)
        memory, mask = model.adapter(model.pivot(inp, h_code)), inp != PAD
        if hook:
            hook("text_done", {"tokens": [list(t) for t in tokens], "pivot_input": inp})
    else:
        memory, mask = model.adapter(h_code), None

    codes = torch.full((b, 1), cfg.bos_code, dtype=torch.long)
    for step in range(cfg.code_length):
        if hook:
            hook("code_step", {"step": step})
        logits = model.decode_codes(codes, memory, mask)[:, -1]
        codes = torch.cat([codes, logits.argmax(-1, keepdim=True)], dim=1)
    out = codes[:, 1:]
    results = [Translation(out[i], tokens[i], truncated[i]) for i in range(b)]
    return results[0] if squeeze else results
