"""Joint source/target byte-pair encoding over the glyph alphabet."""

import re
from collections import Counter
from dataclasses import dataclass, field

from ..errors import ConfigError, InputError
from .glyphs import ALPHABET

PAD, BOS, EOS = 0, 1, 2
SPECIAL_TOKENS = ("<pad>", "<s>", "</s>")

# a chunk is a word with its leading space, or a run of spaces
_CHUNK = re.compile(r" ?[^ ]+| +")


@dataclass(frozen=True)
class BpeModel:
    merges: tuple
    vocab: dict
    pad_id: int = PAD
    bos_id: int = BOS
    eos_id: int = EOS
    _ranks: dict = field(init=False, repr=False, compare=False)
    _id_to_token: dict = field(init=False, repr=False, compare=False)
    _cache: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_ranks", {m: i for i, m in enumerate(self.merges)})
        object.__setattr__(self, "_id_to_token", {i: t for t, i in self.vocab.items()})
        object.__setattr__(self, "_cache", {})

    @property
    def size(self):
        return len(self.vocab)

    def _segment(self, chunk):
        hit = self._cache.get(chunk)
        if hit is not None:
            return hit
        symbols = list(chunk)
        while len(symbols) > 1:
            ranked = [
                (self._ranks.get((a, b), None), i)
                for i, (a, b) in enumerate(zip(symbols, symbols[1:]))
            ]
            ranked = [r for r in ranked if r[0] is not None]
            if not ranked:
                break
            best = min(ranked)[0]
            a, b = self.merges[best]
            merged, i = [], 0
            while i < len(symbols):
                if i + 1 < len(symbols) and symbols[i] == a and symbols[i + 1] == b:
                    merged.append(a + b)
                    i += 2
                else:
                    merged.append(symbols[i])
                    i += 1
            symbols = merged
        out = tuple(symbols)
        self._cache[chunk] = out
        return out

    def tokenize(self, text):
        bad = set(text) - set(ALPHABET)
        if bad:
            raise InputError(f"characters outside the alphabet: {sorted(bad)}")
        return [tok for chunk in _CHUNK.findall(text) for tok in self._segment(chunk)]

    def encode(self, text):
        return [self.vocab[t] for t in self.tokenize(text)]

    def decode(self, ids):
        specials = {self.pad_id, self.bos_id, self.eos_id}
        return "".join(self._id_to_token[i] for i in ids if i not in specials)

    def save(self, path):
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"#merges {len(self.merges)}\n")
            for a, b in self.merges:
                fh.write(f"{a}\t{b}\n")
            fh.write(f"#vocab {len(self.vocab)}\n")
            for tok, i in sorted(self.vocab.items(), key=lambda kv: kv[1]):
                fh.write(f"{tok}\t{i}\n")


def load_bpe(path):
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    n_merges = int(lines[0].split()[1])
    merges = tuple(tuple(line.split("\t")) for line in lines[1 : 1 + n_merges])
    n_vocab = int(lines[1 + n_merges].split()[1])
    vocab = {}
    for line in lines[2 + n_merges : 2 + n_merges + n_vocab]:
        tok, i = line.rsplit("\t", 1)
        vocab[tok] = int(i)
    return BpeModel(merges=merges, vocab=vocab)


def train_bpe(corpus, merge_count, vocab_limit=None):
    """Learn ``merge_count`` merges over all source and target texts.

    Merge candidates are ranked by frequency; ties go to the lexicographically
    smallest pair so the result does not depend on hash order.
    """
    if not corpus:
        raise ConfigError("cannot train BPE on an empty corpus")
    if merge_count < 0:
        raise ConfigError("merge_count must be >= 0")
    chunks = Counter()
    for pair in corpus:
        for text in (pair.src_text, pair.tgt_text):
            chunks.update(_CHUNK.findall(text))
    words = {tuple(c): n for c, n in chunks.items()}

    vocab = {tok: i for i, tok in enumerate(SPECIAL_TOKENS)}
    for ch in ALPHABET:
        vocab[ch] = len(vocab)

    merges = []
    for _ in range(merge_count):
        if vocab_limit is not None and len(vocab) >= vocab_limit:
            break
        counts = Counter()
        for w, n in words.items():
            for pair in zip(w, w[1:]):
                counts[pair] += n
        if not counts:
            break
        best = min(counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]
        merges.append(best)
        joined = best[0] + best[1]
        if joined not in vocab:
            vocab[joined] = len(vocab)
        new_words = {}
        for w, n in words.items():
            out, i = [], 0
            while i < len(w):
                if i + 1 < len(w) and w[i] == best[0] and w[i + 1] == best[1]:
                    out.append(joined)
                    i += 2
                else:
                    out.append(w[i])
                    i += 1
            key = tuple(out)
            new_words[key] = new_words.get(key, 0) + n
        words = new_words
    return BpeModel(merges=tuple(merges), vocab=vocab)
