"""Procedural bitmap fonts.

Three fonts are derived from one 5x7 base alphabet placed in a 12x8 cell:
font 0 adds serif ticks, font 1 dilates strokes by one pixel, font 2
applies a one-pixel italic shear.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import InputError

ALPHABET = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .,-"
CELL_H = 12
CELL_W = 8
FONT_NAMES = ("serif", "bold", "italic")

_BASE_ROW = 2
_BASE_COL = 1

_BASE = {
    "A": ".XXX. X...X X...X XXXXX X...X X...X X...X",
    "B": "XXXX. X...X X...X XXXX. X...X X...X XXXX.",
    "C": ".XXX. X...X X.... X.... X.... X...X .XXX.",
    "D": "XXX.. X..X. X...X X...X X...X X..X. XXX..",
    "E": "XXXXX X.... X.... XXXX. X.... X.... XXXXX",
    "F": "XXXXX X.... X.... XXXX. X.... X.... X....",
    "G": ".XXX. X...X X.... X.XXX X...X X...X .XXXX",
    "H": "X...X X...X X...X XXXXX X...X X...X X...X",
    "I": ".XXX. ..X.. ..X.. ..X.. ..X.. ..X.. .XXX.",
    "J": "..XXX ...X. ...X. ...X. ...X. X..X. .XX..",
    "K": "X...X X..X. X.X.. XX... X.X.. X..X. X...X",
    "L": "X.... X.... X.... X.... X.... X.... XXXXX",
    "M": "X...X XX.XX X.X.X X.X.X X...X X...X X...X",
    "N": "X...X X...X XX..X X.X.X X..XX X...X X...X",
    "O": ".XXX. X...X X...X X...X X...X X...X .XXX.",
    "P": "XXXX. X...X X...X XXXX. X.... X.... X....",
    "Q": ".XXX. X...X X...X X...X X.X.X X..X. .XX.X",
    "R": "XXXX. X...X X...X XXXX. X.X.. X..X. X...X",
    "S": ".XXXX X.... X.... .XXX. ....X ....X XXXX.",
    "T": "XXXXX ..X.. ..X.. ..X.. ..X.. ..X.. ..X..",
    "U": "X...X X...X X...X X...X X...X X...X .XXX.",
    "V": "X...X X...X X...X X...X X...X .X.X. ..X..",
    "W": "X...X X...X X...X X.X.X X.X.X X.X.X .X.X.",
    "X": "X...X X...X .X.X. ..X.. .X.X. X...X X...X",
    "Y": "X...X X...X .X.X. ..X.. ..X.. ..X.. ..X..",
    "Z": "XXXXX ....X ...X. ..X.. .X... X.... XXXXX",
    "0": ".XXX. X...X X..XX X.X.X XX..X X...X .XXX.",
    "1": "..X.. .XX.. ..X.. ..X.. ..X.. ..X.. .XXX.",
    "2": ".XXX. X...X ....X ...X. ..X.. .X... XXXXX",
    "3": "XXXXX ...X. ..X.. ...X. ....X X...X .XXX.",
    "4": "...X. ..XX. .X.X. X..X. XXXXX ...X. ...X.",
    "5": "XXXXX X.... XXXX. ....X ....X X...X .XXX.",
    "6": "..XX. .X... X.... XXXX. X...X X...X .XXX.",
    "7": "XXXXX ....X ...X. ..X.. .X... .X... .X...",
    "8": ".XXX. X...X X...X .XXX. X...X X...X .XXX.",
    "9": ".XXX. X...X X...X .XXXX ....X ...X. .XX..",
    ".": "..... ..... ..... ..... ..... .XX.. .XX..",
    ",": "..... ..... ..... ..... .XX.. ..X.. .X...",
    "-": "..... ..... ..... XXXXX ..... ..... .....",
    " ": "..... ..... ..... ..... ..... ..... .....",
}


def _base_cell(ch):
    rows = _BASE[ch].split()
    cell = np.zeros((CELL_H, CELL_W), dtype=bool)
    for r, row in enumerate(rows):
        for c, px in enumerate(row):
            if px == "X":
                cell[_BASE_ROW + r, _BASE_COL + c] = True
    return cell


def _serif(cell):
    out = cell.copy()
    top, bottom = _BASE_ROW, _BASE_ROW + 6
    for c in range(CELL_W):
        col = cell[:, c]
        if col[top] and col[top + 1]:
            out[top, max(c - 1, 0)] = out[top, min(c + 1, CELL_W - 1)] = True
        if col[bottom] and col[bottom - 1]:
            out[bottom, max(c - 1, 0)] = out[bottom, min(c + 1, CELL_W - 1)] = True
    # ticks hanging from the ends of long horizontal strokes
    for r in range(top, bottom + 1):
        row = cell[r]
        c = 0
        while c < CELL_W:
            if not row[c]:
                c += 1
                continue
            start = c
            while c < CELL_W and row[c]:
                c += 1
            if c - start >= 3:
                tick = r + 1 if r < bottom else r - 1
                out[tick, start] = out[tick, c - 1] = True
    return out


def _bold(cell):
    out = cell.copy()
    out[:, 1:] |= cell[:, :-1]
    return out


def _italic(cell):
    out = np.zeros_like(cell)
    for r in range(CELL_H):
        g = r - _BASE_ROW
        shift = 1 if g <= 1 else (-1 if g >= 5 else 0)
        src = cell[r]
        if shift > 0:
            out[r, 1:] = src[:-1]
        elif shift < 0:
            out[r, :-1] = src[1:]
        else:
            out[r] = src
    return out


_TRANSFORMS = (_serif, _bold, _italic)


@dataclass(frozen=True)
class GlyphAtlas:
    """Immutable (font, character) -> binary bitmap table."""

    fonts: tuple
    bitmaps: dict = field(repr=False)
    cell_h: int = CELL_H
    cell_w: int = CELL_W
    alphabet: str = ALPHABET

    def bitmap(self, ch, font_id):
        return glyph_bitmap(ch, font_id, self)

    def stack(self, fonts=None, include_space=False):
        """Return ``(keys, array)`` with one flattened float bitmap per row."""
        fonts = self.fonts if fonts is None else fonts
        keys = [
            (f, ch)
            for f in fonts
            for ch in self.alphabet
            if include_space or ch != " "
        ]
        arr = np.stack([self.bitmaps[k].ravel() for k in keys]).astype(np.float64)
        return keys, arr


def build_atlas(fonts=(0, 1, 2)):
    bitmaps = {}
    for f in fonts:
        if f not in range(len(_TRANSFORMS)):
            raise InputError(f"unknown font id {f!r}")
        for ch in ALPHABET:
            bm = _base_cell(ch) if ch == " " else _TRANSFORMS[f](_base_cell(ch))
            bm.setflags(write=False)
            bitmaps[(f, ch)] = bm
    return GlyphAtlas(fonts=tuple(fonts), bitmaps=bitmaps)


_DEFAULT_ATLAS = None


def default_atlas():
    global _DEFAULT_ATLAS
    if _DEFAULT_ATLAS is None:
        _DEFAULT_ATLAS = build_atlas()
    return _DEFAULT_ATLAS


def glyph_bitmap(ch, font_id, atlas):
    if font_id not in atlas.fonts:
        raise InputError(f"unknown font id {font_id!r}")
    try:
        return atlas.bitmaps[(font_id, ch)]
    except KeyError:
        raise InputError(f"character {ch!r} is not in the glyph alphabet") from None
