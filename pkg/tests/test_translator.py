import math

import pytest
import torch

from fdcheck import audit
from iimt.errors import InputError
from iimt.neural import AdamW, TransformerConfig
from iimt.textcorpus.bpe import BOS, EOS, PAD
from iimt.translator import (
    Translator,
    TranslatorConfig,
    text_batch,
    translate_codes,
    translate_train_step,
    translation_loss,
)

SMALL = TransformerConfig(32, 1, 2, 64, 0.0)
LARGE = TransformerConfig(48, 1, 4, 96, 0.0)


def tiny_cfg(use_pivot=True, v=16, n=12, vocab=20):
    return TranslatorConfig(codebook_size=v, code_length=n, text_vocab=vocab, max_text_len=10,
                            small=SMALL, large=LARGE, use_pivot=use_pivot)


class TestShapes:
    def test_toy_geometry(self):
        torch.manual_seed(0)
        cfg = TranslatorConfig(text_vocab=1000)
        m = Translator(cfg).eval()
        src = torch.randint(512, (1, 96))
        text_in = torch.randint(3, 1000, (1, 12))
        text_logits, code_logits = m(src, src, text_in)
        assert text_logits.shape == (1, 12, 1000)
        assert code_logits.shape == (1, 96, 512)

    def test_bos_code(self):
        cfg = tiny_cfg()
        assert cfg.bos_code == cfg.codebook_size
        m = Translator(cfg)
        assert m.src_code_embedding.num_embeddings == cfg.codebook_size + 1

    def test_adapter_widths(self):
        m = Translator(tiny_cfg())
        assert m.adapter.in_features == SMALL.d_model and m.adapter.out_features == LARGE.d_model

    def test_length_violation(self):
        m = Translator(tiny_cfg())
        with pytest.raises(InputError):
            m(torch.zeros(1, 11, dtype=torch.long), torch.zeros(1, 12, dtype=torch.long), torch.ones(1, 3, dtype=torch.long))
        with pytest.raises(InputError):
            text_batch([[5] * 11], 10)


class TestCausality:
    def test_code_positions(self):
        torch.manual_seed(0)
        m = Translator(tiny_cfg(n=60)).eval()
        src = torch.randint(16, (1, 60))
        tgt = torch.randint(16, (1, 60))
        text_in, _ = text_batch([[4, 5, 6, 7]], 10)
        a = m(src, tgt, text_in)[1]
        tgt2 = tgt.clone()
        tgt2[0, 50] = (tgt2[0, 50] + 1) % 16
        b = m(src, tgt2, text_in)[1]
        # position 50 is only seen as input by positions >= 51
        assert torch.equal(a[:, :51], b[:, :51])
        assert not torch.equal(a[:, 51:], b[:, 51:])

    def test_text_conditions_codes(self):
        torch.manual_seed(0)
        m = Translator(tiny_cfg()).eval()
        src, tgt = torch.randint(16, (1, 12)), torch.randint(16, (1, 12))
        t1, _ = text_batch([[4, 5, 6, 7]], 10)
        t2 = t1.clone()
        t2[0, 3] = 9
        assert not torch.equal(m(src, tgt, t1)[1], m(src, tgt, t2)[1])


class TestLoss:
    def test_uniform_ln2(self):
        z = torch.zeros(1, 4, 2)
        t = torch.ones(1, 4, dtype=torch.long)  # class 0 is the pad id
        tit, code, total = translation_loss(z, z, t, t, eps=0.1)
        assert float(tit) == pytest.approx(math.log(2)) and float(code) == pytest.approx(math.log(2))

    def test_additive(self):
        g = torch.Generator().manual_seed(0)
        tl, cl = torch.randn(2, 5, 20, generator=g), torch.randn(2, 12, 16, generator=g)
        labels = torch.tensor([[4, 5, EOS, PAD, PAD], [6, 7, 8, 9, EOS]])
        codes = torch.randint(16, (2, 12), generator=g)
        tit, code, total = translation_loss(tl.double(), cl.double(), labels, codes, 0.1)
        assert abs(float(total) - float(tit) - float(code)) <= 1e-9

    def test_text_batch_layout(self):
        inp, lab = text_batch([[7, 8], [9]], 10)
        assert inp.tolist() == [[BOS, 7, 8], [BOS, 9, PAD]]
        assert lab.tolist() == [[7, 8, EOS], [9, EOS, PAD]]

    def test_gradient_audit(self):
        torch.manual_seed(0)
        m = Translator(tiny_cfg()).double().eval()
        g = torch.Generator().manual_seed(1)
        src, tgt = torch.randint(16, (2, 12), generator=g), torch.randint(16, (2, 12), generator=g)
        text_in, labels = text_batch([[4, 5, 6], [7, 8]], 10)

        def loss():
            tl, cl = m(src, tgt, text_in)
            return translation_loss(tl, cl, labels, tgt, 0.1)[2]

        errs = audit(loss, list(m.parameters()), count=60)
        assert len(errs) >= 50 and max(errs) <= 1e-4


def _overfit(use_pivot, pairs=8, steps=400, seed=0):
    torch.manual_seed(seed)
    g = torch.Generator().manual_seed(seed)
    cfg = tiny_cfg(use_pivot=use_pivot)
    m = Translator(cfg)
    src = torch.randint(16, (pairs, 12), generator=g)
    tgt = torch.randint(16, (pairs, 12), generator=g)
    texts = [[int(t) for t in torch.randint(3, 20, (int(torch.randint(2, 6, (1,), generator=g)),), generator=g)]
             for _ in range(pairs)]
    text_in, labels = text_batch(texts, 10)
    opt = AdamW(m.parameters(), betas=(0.9, 0.98), weight_decay=0.0)
    for step in range(1, steps + 1):
        translate_train_step(src, tgt, text_in, labels, m, opt, 3e-3, 0.0, step)
    return m, src, tgt, texts, text_in


class TestInference:
    def test_overfit_reproduces_codes_and_text(self):
        m, src, tgt, texts, text_in = _overfit(True)
        outs = translate_codes(src, m)
        for o, t, txt in zip(outs, tgt, texts):
            assert o.codes.shape == (12,)
            assert torch.equal(o.codes, t)
            assert o.pivot_tokens == txt and not o.truncated
        # greedy decode equals the teacher-forced argmax on a memorised pair
        m.eval()
        tf = m(src, tgt, text_in)[1].argmax(-1)
        assert torch.equal(torch.stack([o.codes for o in outs]), tf)

    def test_no_pivot_variant(self):
        m, src, tgt, _, _ = _overfit(False)
        assert not hasattr(m, "pivot_decoder")
        outs = translate_codes(src, m)
        assert all(o.pivot_tokens == [] for o in outs)
        assert torch.equal(torch.stack([o.codes for o in outs]), tgt)

    def test_two_phase_order(self):
        torch.manual_seed(0)
        m = Translator(tiny_cfg()).eval()
        src = torch.randint(16, (3, 12))
        events = []

        def hook(name, payload):
            events.append((name, payload))

        outs = translate_codes(src, m, hook=hook)
        names = [e[0] for e in events]
        assert names[0] == "text_done" and names.count("text_done") == 1
        assert names[1:] == ["code_step"] * 12
        decoded = events[0][1]["tokens"]
        assert decoded == [o.pivot_tokens for o in outs]
        # pivot input covers BOS plus every decoded token
        piv = events[0][1]["pivot_input"]
        for row, toks in zip(piv.tolist(), decoded):
            assert row[: len(toks) + 1] == [BOS] + toks

    def test_truncation_flag(self):
        torch.manual_seed(0)
        m = Translator(tiny_cfg()).eval()
        with torch.no_grad():
            m.text_out.bias.fill_(0.0)
            m.text_out.bias[EOS] = -1e4
        out = translate_codes(torch.randint(16, (12,)), m)
        assert out.truncated and len(out.pivot_tokens) == 10

    def test_deterministic(self):
        torch.manual_seed(0)
        m = Translator(tiny_cfg()).eval()
        src = torch.randint(16, (12,))
        a, b = translate_codes(src, m), translate_codes(src, m)
        assert torch.equal(a.codes, b.codes) and a.pivot_tokens == b.pivot_tokens
