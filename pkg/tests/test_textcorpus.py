import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iimt.errors import ConfigError, InputError
from iimt.textcorpus import (
    ALPHABET,
    ParallelPair,
    build_atlas,
    default_atlas,
    embedded_corpus,
    generate_pseudo_corpus,
    glyph_bitmap,
    load_bpe,
    load_corpus,
    pseudo_translate,
    pseudo_untranslate,
    save_corpus,
    train_bpe,
)
from iimt.textcorpus.corpus import INVERSE_DICTIONARY, PSEUDO_DICTIONARY, parse_corpus

alphabet_text = st.text(alphabet=ALPHABET, min_size=0, max_size=60)


# --- glyph atlas ------------------------------------------------------------


class TestAtlas:
    def test_every_font_covers_alphabet(self):
        atlas = default_atlas()
        for f in atlas.fonts:
            for ch in ALPHABET:
                bm = glyph_bitmap(ch, f, atlas)
                assert bm.shape == (atlas.cell_h, atlas.cell_w)

    def test_lookup_is_pure(self):
        atlas = default_atlas()
        a = glyph_bitmap("A", 0, atlas)
        b = glyph_bitmap("A", 0, build_atlas())
        np.testing.assert_array_equal(a, b)

    def test_space_is_blank(self):
        atlas = default_atlas()
        for f in atlas.fonts:
            assert not glyph_bitmap(" ", f, atlas).any()

    def test_within_font_injective(self):
        atlas = default_atlas()
        for f in atlas.fonts:
            seen = {glyph_bitmap(ch, f, atlas).tobytes() for ch in ALPHABET}
            assert len(seen) == len(ALPHABET)

    def test_cross_font_differ_by_one_percent(self):
        atlas = default_atlas()
        cells = atlas.cell_h * atlas.cell_w
        for ch in ALPHABET.replace(" ", ""):
            for f in atlas.fonts:
                for g in atlas.fonts:
                    if f < g:
                        diff = (glyph_bitmap(ch, f, atlas) != glyph_bitmap(ch, g, atlas)).sum()
                        assert diff / cells >= 0.01, (ch, f, g)

    def test_a_font0_vs_font1(self):
        atlas = default_atlas()
        diff = (glyph_bitmap("A", 0, atlas) != glyph_bitmap("A", 1, atlas)).mean()
        assert diff >= 0.01

    @pytest.mark.parametrize("ch,font", [("a", 0), ("?", 1), ("A", 7)])
    def test_unknown_symbol_or_font(self, ch, font):
        with pytest.raises(InputError, match=repr(ch) if font < 3 else "7"):
            glyph_bitmap(ch, font, default_atlas())


# --- corpus -----------------------------------------------------------------


class TestCorpus:
    def test_embedded_size_and_alphabet(self):
        pairs = embedded_corpus()
        assert len(pairs) == 200
        assert len({p.pair_id for p in pairs}) == 200
        for p in pairs:
            assert set(p.src_text + p.tgt_text) <= set(ALPHABET)

    def test_direction_swaps_sides(self):
        de_en = embedded_corpus("de-en")
        en_de = embedded_corpus("en-de")
        assert [(p.tgt_text, p.src_text) for p in de_en] == [(p.src_text, p.tgt_text) for p in en_de]

    def test_bad_direction(self):
        with pytest.raises(ConfigError):
            parse_corpus(["A\tB"], "fr-de")

    def test_pair_validation(self):
        with pytest.raises(InputError):
            ParallelPair("", "X", 0)
        with pytest.raises(InputError):
            ParallelPair("hello", "X", 0)

    def test_malformed_line(self):
        with pytest.raises(InputError, match="line 1"):
            parse_corpus(["ONLY ONE FIELD"])

    def test_file_round_trip(self, tmp_path):
        pairs = embedded_corpus()[:10]
        save_corpus(pairs, tmp_path / "c.tsv")
        assert load_corpus(tmp_path / "c.tsv") == pairs


class TestPseudoCorpus:
    def test_deterministic(self):
        assert generate_pseudo_corpus(7, 2, 5) == generate_pseudo_corpus(7, 2, 5)

    def test_single_word_is_dictionary_image(self):
        for p in generate_pseudo_corpus(3, 50, 1):
            assert p.tgt_text == PSEUDO_DICTIONARY[p.src_text]

    def test_thousand_pairs(self):
        pairs = generate_pseudo_corpus(7, 1000, 6)
        assert len({p.pair_id for p in pairs}) == 1000
        for p in pairs:
            assert all(w in PSEUDO_DICTIONARY for w in p.src_text.split())
            assert all(w in INVERSE_DICTIONARY for w in p.tgt_text.split())

    def test_invertible(self):
        for p in generate_pseudo_corpus(11, 300, 8):
            assert pseudo_untranslate(p.tgt_text) == p.src_text

    def test_dictionary_bijective(self):
        assert len(set(PSEUDO_DICTIONARY.values())) == len(PSEUDO_DICTIONARY)

    def test_swap_rule(self):
        words = list(PSEUDO_DICTIONARY)[:3]
        out = pseudo_translate(" ".join(words)).split()
        assert out == [PSEUDO_DICTIONARY[words[1]], PSEUDO_DICTIONARY[words[0]], PSEUDO_DICTIONARY[words[2]]]


# --- BPE --------------------------------------------------------------------


class TestBpe:
    def test_single_merge_example(self):
        bpe = train_bpe([ParallelPair("AB AB", "AB", 0)], 1)
        assert list(bpe.merges) == [("A", "B")]
        assert len(bpe.encode("AB")) == 1

    def test_zero_merges_is_char_level(self):
        bpe = train_bpe([ParallelPair("AB AB", "AB", 0)], 0)
        assert list(bpe.merges) == []
        assert len(bpe.encode("AB")) == 2

    def test_specials_distinct(self):
        bpe = train_bpe(embedded_corpus()[:20], 50)
        assert len({bpe.pad_id, bpe.bos_id, bpe.eos_id}) == 3

    def test_empty_corpus(self):
        with pytest.raises(ConfigError):
            train_bpe([], 10)

    def test_negative_merges(self):
        with pytest.raises(ConfigError):
            train_bpe(embedded_corpus()[:2], -1)

    def test_vocab_limit(self):
        bpe = train_bpe(embedded_corpus(), 1000, vocab_limit=120)
        assert bpe.size <= 120

    def test_deterministic(self):
        a = train_bpe(embedded_corpus(), 200)
        b = train_bpe(embedded_corpus(), 200)
        assert a.merges == b.merges and a.vocab == b.vocab

    def test_save_load(self, tmp_path):
        bpe = train_bpe(embedded_corpus(), 300)
        bpe.save(tmp_path / "bpe.txt")
        back = load_bpe(tmp_path / "bpe.txt")
        assert back.merges == bpe.merges and back.vocab == bpe.vocab

    @settings(max_examples=1000, deadline=None)
    @given(alphabet_text)
    def test_round_trip(self, s):
        bpe = _toy_bpe()
        assert bpe.decode(bpe.encode(s)) == s


_BPE = []


def _toy_bpe():
    if not _BPE:
        _BPE.append(train_bpe(embedded_corpus(), 1000))
    return _BPE[0]
