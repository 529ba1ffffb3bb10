"""Parallel text assets: the shipped toy corpus and a pseudo-translation generator."""

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..errors import ConfigError, InputError
from .glyphs import ALPHABET

_ALLOWED = frozenset(ALPHABET)


@dataclass(frozen=True)
class ParallelPair:
    src_text: str
    tgt_text: str
    pair_id: int

    def __post_init__(self):
        for text in (self.src_text, self.tgt_text):
            if not text:
                raise InputError(f"pair {self.pair_id}: empty text")
            bad = set(text) - _ALLOWED
            if bad:
                raise InputError(
                    f"pair {self.pair_id}: characters outside the alphabet: {sorted(bad)}"
                )

    def reversed(self):
        return ParallelPair(self.tgt_text, self.src_text, self.pair_id)


def parse_corpus(lines, direction="forward"):
    pairs = []
    for i, line in enumerate(lines):
        line = line.rstrip("\n")
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise InputError(f"corpus line {i + 1}: expected 2 tab-separated fields")
        pairs.append(ParallelPair(parts[0], parts[1], len(pairs)))
    if direction in ("reverse", "en-de"):
        pairs = [p.reversed() for p in pairs]
    elif direction not in ("forward", "de-en"):
        raise ConfigError(f"unknown direction {direction!r}")
    return pairs


def load_corpus(path, direction="forward"):
    """Read a UTF-8 ``source<TAB>target`` file, one pair per line."""
    with open(path, encoding="utf-8") as fh:
        return parse_corpus(fh, direction)


def save_corpus(pairs, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in pairs:
            fh.write(f"{p.src_text}\t{p.tgt_text}\n")


def embedded_corpus(direction="de-en"):
    """The 200 German/English caption pairs shipped with the package."""
    text = resources.files(__package__).joinpath("data/embedded.tsv").read_text("utf-8")
    return parse_corpus(text.splitlines(), direction)


# --- pseudo-translation -----------------------------------------------------

_DICT_SEED = 0x1DC7
_DICT_SIZE = 300
_ONSETS = "BDFGKLMNPRSTVZ"
_VOWELS = "AEIOU"


def _make_words(rng, count, syllables, taken):
    words = []
    while len(words) < count:
        n = int(rng.integers(syllables[0], syllables[1] + 1))
        w = "".join(
            _ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
            for _ in range(n)
        )
        if w not in taken:
            taken.add(w)
            words.append(w)
    return words


def _build_dictionary():
    rng = np.random.default_rng(_DICT_SEED)
    taken = set()
    src = _make_words(rng, _DICT_SIZE, (1, 3), taken)
    tgt = _make_words(rng, _DICT_SIZE, (2, 3), taken)
    return dict(zip(src, tgt))


PSEUDO_DICTIONARY = _build_dictionary()
INVERSE_DICTIONARY = {v: k for k, v in PSEUDO_DICTIONARY.items()}
_SRC_WORDS = sorted(PSEUDO_DICTIONARY)


def swap_adjacent(words):
    """Swap words pairwise: (w0 w1 w2 w3 w4) -> (w1 w0 w3 w2 w4). An involution."""
    out = list(words)
    for i in range(0, len(out) - 1, 2):
        out[i], out[i + 1] = out[i + 1], out[i]
    return out


def pseudo_translate(src_text):
    return " ".join(swap_adjacent(PSEUDO_DICTIONARY[w] for w in src_text.split()))


def pseudo_untranslate(tgt_text):
    return " ".join(INVERSE_DICTIONARY[w] for w in swap_adjacent(tgt_text.split()))


def generate_pseudo_corpus(seed, count, max_words, start_id=0):
    """Draw ``count`` random source sentences and their exact pseudo-translations.

    The dictionary is fixed (independent of ``seed``); only sentence sampling
    depends on the seed.
    """
    if count < 1 or max_words < 1:
        raise ConfigError("count and max_words must be >= 1")
    rng = np.random.default_rng(seed)
    pairs = []
    for i in range(count):
        n = int(rng.integers(1, max_words + 1))
        words = [_SRC_WORDS[j] for j in rng.integers(len(_SRC_WORDS), size=n)]
        src = " ".join(words)
        pairs.append(ParallelPair(src, pseudo_translate(src), start_id + i))
    return pairs
