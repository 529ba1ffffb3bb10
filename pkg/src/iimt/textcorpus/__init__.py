from .bpe import BpeModel, load_bpe, train_bpe
from .corpus import (
    ParallelPair,
    embedded_corpus,
    generate_pseudo_corpus,
    load_corpus,
    pseudo_translate,
    pseudo_untranslate,
    save_corpus,
)
from .glyphs import ALPHABET, CELL_H, CELL_W, GlyphAtlas, build_atlas, default_atlas, glyph_bitmap

__all__ = [
    "ALPHABET",
    "BpeModel",
    "CELL_H",
    "CELL_W",
    "GlyphAtlas",
    "ParallelPair",
    "build_atlas",
    "default_atlas",
    "embedded_corpus",
    "generate_pseudo_corpus",
    "glyph_bitmap",
    "load_bpe",
    "load_corpus",
    "pseudo_translate",
    "pseudo_untranslate",
    "save_corpus",
    "train_bpe",
]
