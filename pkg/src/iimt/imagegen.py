"""Synthetic subtitle strips: procedural backgrounds, glyph rendering, datasets.

Every record is a pure function of ``(global_seed, pair_id)``; the manifest is
assembled in pair order so identical inputs give identical bytes on disk.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image as PILImage

from .errors import ConfigError, DoesNotFitError, InputError
from .textcorpus.glyphs import default_atlas, glyph_bitmap

log = logging.getLogger(__name__)

# backgrounds stay at least this far below white so overlaid text stays legible
BG_CEILING = 0.7
MIN_BG_VARIANCE = 0.01

IMAGE_NAMES = ("source", "target", "background", "src_textimage", "tgt_textimage")
TEXTIMAGE_NAMES = ("src_textimage", "tgt_textimage")


@dataclass(frozen=True)
class RenderSpec:
    strip_h: int = 48
    strip_w: int = 512
    base_h: int = 512
    base_w: int = 512
    font_id: int = 0
    text_color: tuple = (1.0, 1.0, 1.0)
    margin: int = 4
    patch_size: int = 16

    def __post_init__(self):
        if self.strip_h > self.base_h or self.strip_w > self.base_w:
            raise ConfigError("strip must fit inside the base image")
        if self.strip_h % self.patch_size or self.strip_w % self.patch_size:
            raise ConfigError(
                f"strip {self.strip_h}x{self.strip_w} not divisible by patch {self.patch_size}"
            )

    def max_chars(self, cell_w):
        return (self.strip_w - 2 * self.margin) // cell_w


# --- backgrounds --------------------------------------------------------------


def _interp_matrix(n_out, n_in):
    """Linear-interpolation weights mapping ``n_in`` lattice points to ``n_out`` samples."""
    pos = np.linspace(0, n_in - 1, n_out)
    i0 = np.clip(np.floor(pos).astype(int), 0, n_in - 2)
    frac = pos - i0
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), i0] = 1 - frac
    m[np.arange(n_out), i0 + 1] += frac
    return m


def _upsample(grid, h, w):
    """Bilinear upsampling of a (gh, gw, C) lattice to (h, w, C)."""
    wy = _interp_matrix(h, grid.shape[0])
    wx = _interp_matrix(w, grid.shape[1])
    return np.einsum("hy,yxc,wx->hwc", wy, grid, wx, optimize=True)


def _value_noise(rng, h, w):
    out = np.zeros((h, w, 3))
    amp, total = 1.0, 0.0
    for cells in (4, 8, 16):
        grid = rng.random((cells + 1, cells + 1, 3))
        out += amp * _upsample(grid, h, w)
        total += amp
        amp *= 0.5
    return out / total


def _gradient(rng, h, w):
    theta = rng.uniform(0, 2 * np.pi)
    yy = np.arange(h)[:, None]
    xx = np.arange(w)[None, :]
    t = np.cos(theta) * xx / w + np.sin(theta) * yy / h
    t = (t - t.min()) / (np.ptp(t) + 1e-12)
    c0, c1 = rng.random(3), rng.random(3)
    return c0 * (1 - t[..., None]) + c1 * t[..., None]


def _shape_mask(rng, h, w, soft=3.0):
    yy = np.arange(h, dtype=np.float64)[:, None]
    xx = np.arange(w, dtype=np.float64)[None, :]
    kind = rng.integers(3)
    cy, cx = rng.uniform(0, h), rng.uniform(0, w)
    if kind == 0:  # disc
        r = rng.uniform(0.05, 0.25) * min(h, w)
        dist = np.hypot(yy - cy, xx - cx) - r
    elif kind == 1:  # axis-aligned rectangle
        hh, hw = rng.uniform(0.05, 0.3) * h, rng.uniform(0.05, 0.3) * w
        dist = np.maximum(np.abs(yy - cy) - hh, np.abs(xx - cx) - hw)
    else:  # rotated ellipse
        a, b = rng.uniform(0.05, 0.3) * w, rng.uniform(0.03, 0.15) * h
        phi = rng.uniform(0, np.pi)
        u = (xx - cx) * np.cos(phi) + (yy - cy) * np.sin(phi)
        v = -(xx - cx) * np.sin(phi) + (yy - cy) * np.cos(phi)
        dist = (np.sqrt((u / a) ** 2 + (v / b) ** 2) - 1.0) * min(a, b)
    return np.clip(0.5 - dist / (2 * soft), 0.0, 1.0)


def make_background(seed, base_h=512, base_w=512):
    """Seeded value noise + linear gradient + 2-6 soft shapes, scaled to [0, BG_CEILING]."""
    if base_h <= 0 or base_w <= 0:
        raise InputError("background dimensions must be positive")
    rng = np.random.default_rng(seed)
    img = 0.5 * _gradient(rng, base_h, base_w) + 0.5 * _value_noise(rng, base_h, base_w)
    for _ in range(int(rng.integers(2, 7))):
        mask = rng.uniform(0.5, 0.9) * _shape_mask(rng, base_h, base_w)[..., None]
        img += mask * (rng.random(3) - img)
    # per-channel stretch keeps the texture from washing out
    lo = img.min(axis=(0, 1), keepdims=True)
    hi = img.max(axis=(0, 1), keepdims=True)
    img = (img - lo) / np.maximum(hi - lo, 1e-12)
    while img.var() * BG_CEILING**2 < MIN_BG_VARIANCE:
        # deterministic contrast boost around mid-grey
        img = np.clip(0.5 + 1.25 * (img - 0.5), 0.0, 1.0)
    return BG_CEILING * img


def load_user_background(path, seed, base_h=512, base_w=512):
    """Center-crop a user image to a square, resize to the base size and dim it."""
    with PILImage.open(path) as im:
        im = im.convert("RGB")
        s = min(im.size)
        left, top = (im.width - s) // 2, (im.height - s) // 2
        im = im.crop((left, top, left + s, top + s)).resize((base_w, base_h), PILImage.BILINEAR)
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return BG_CEILING * arr


# --- rendering ------------------------------------------------------------------


def render_text_image(text, spec, atlas=None):
    atlas = atlas or default_atlas()
    max_chars = spec.max_chars(atlas.cell_w)
    if len(text) > max_chars or 2 * spec.margin + atlas.cell_h > spec.strip_h:
        raise DoesNotFitError(text, max_chars)
    img = np.zeros((spec.strip_h, spec.strip_w, 3))
    color = np.asarray(spec.text_color, dtype=np.float64)
    top = spec.margin
    for k, ch in enumerate(text):
        bm = glyph_bitmap(ch, spec.font_id, atlas)
        left = spec.margin + k * atlas.cell_w
        img[top : top + atlas.cell_h, left : left + atlas.cell_w][bm] = color
    return img


def compose(background, text_image):
    """Opaque overlay: text pixels replace the background wherever any channel is lit."""
    background = np.asarray(background)
    text_image = np.asarray(text_image)
    if background.shape != text_image.shape:
        raise InputError(f"shape mismatch: {background.shape} vs {text_image.shape}")
    lit = (text_image > 0).any(axis=-1, keepdims=True)
    return np.where(lit, text_image, background)


def to_uint8(img):
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def from_uint8(arr):
    return arr.astype(np.float32) / 255.0


def save_png(img, path):
    arr = img if img.dtype == np.uint8 else to_uint8(img)
    PILImage.fromarray(arr, mode="RGB").save(path, format="PNG", optimize=False)


def load_png(path):
    with PILImage.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


# --- datasets --------------------------------------------------------------------


@dataclass
class DatasetConfig:
    train: int = 32
    valid: int = 0
    test: int = 0
    fonts: tuple = (0,)
    seed: int = 0
    spec: RenderSpec = field(default_factory=RenderSpec)
    background_dir: str = None

    def snapshot(self):
        d = asdict(self)
        d["fonts"] = list(self.fonts)
        d["spec"]["text_color"] = list(self.spec.text_color)
        return d


@dataclass
class SampleRecord:
    pair_id: int
    src_text: str
    tgt_text: str
    font_id: int
    kind: str = "composed"
    split: str = "train"
    background_seed: int = None
    crop_offset: tuple = None
    source_image: np.ndarray = field(default=None, repr=False)
    target_image: np.ndarray = field(default=None, repr=False)
    golden_background: np.ndarray = field(default=None, repr=False)
    golden_src_textimage: np.ndarray = field(default=None, repr=False)
    golden_tgt_textimage: np.ndarray = field(default=None, repr=False)

    _FIELD_BY_NAME = {
        "source": "source_image",
        "target": "target_image",
        "background": "golden_background",
        "src_textimage": "golden_src_textimage",
        "tgt_textimage": "golden_tgt_textimage",
    }

    def image(self, name):
        return getattr(self, self._FIELD_BY_NAME[name])


@dataclass
class DatasetManifest:
    root: Path
    kind: str
    seed: int
    config: dict
    entries: dict  # split -> list of manifest rows
    skipped: int = 0

    def split(self, name):
        return self.entries.get(name, [])

    def path(self, split):
        return self.root / f"{split}.jsonl"


def _derive(global_seed, pair_id, stream):
    return int(np.random.SeedSequence([global_seed, pair_id, stream]).generate_state(1)[0])


def _fits(pair, spec, atlas):
    limit = spec.max_chars(atlas.cell_w)
    return len(pair.src_text) <= limit and len(pair.tgt_text) <= limit


def _user_backgrounds(directory):
    exts = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tif", ".tiff"}
    files = sorted(p for p in Path(directory).iterdir() if p.suffix.lower() in exts)
    if not files:
        raise ConfigError(f"no images found in {directory}")
    return files


def make_record(pair, config, atlas, kind="composed", user_files=None):
    """Generate one record deterministically from ``(config.seed, pair.pair_id)``."""
    fonts = tuple(config.fonts)
    font_id = fonts[_derive(config.seed, pair.pair_id, 1) % len(fonts)]
    spec = RenderSpec(**{**asdict(config.spec), "font_id": font_id})
    src_ti = to_uint8(render_text_image(pair.src_text, spec, atlas))
    tgt_ti = to_uint8(render_text_image(pair.tgt_text, spec, atlas))
    rec = SampleRecord(
        pair_id=pair.pair_id,
        src_text=pair.src_text,
        tgt_text=pair.tgt_text,
        font_id=font_id,
        kind=kind,
        golden_src_textimage=src_ti,
        golden_tgt_textimage=tgt_ti,
    )
    if kind == "textimage":
        return rec
    bg_seed = _derive(config.seed, pair.pair_id, 0)
    if user_files:
        base = load_user_background(
            user_files[bg_seed % len(user_files)], bg_seed, spec.base_h, spec.base_w
        )
    else:
        base = make_background(bg_seed, spec.base_h, spec.base_w)
    crop_rng = np.random.default_rng(_derive(config.seed, pair.pair_id, 2))
    row = int(crop_rng.integers(0, spec.base_h - spec.strip_h + 1))
    col = int(crop_rng.integers(0, spec.base_w - spec.strip_w + 1))
    bg = to_uint8(base[row : row + spec.strip_h, col : col + spec.strip_w])
    rec.background_seed = bg_seed
    rec.crop_offset = (row, col)
    rec.golden_background = bg
    rec.source_image = compose(bg, src_ti)
    rec.target_image = compose(bg, tgt_ti)
    return rec


def _write_record(rec, root, split):
    names = TEXTIMAGE_NAMES if rec.kind == "textimage" else IMAGE_NAMES
    paths = {}
    (root / split).mkdir(parents=True, exist_ok=True)
    for name in names:
        rel = f"{split}/{rec.pair_id:06d}_{name}.png"
        save_png(rec.image(name), root / rel)
        paths[name] = rel
    return {
        "pair_id": rec.pair_id,
        "paths": paths,
        "src_text": rec.src_text,
        "tgt_text": rec.tgt_text,
        "font_id": rec.font_id,
        "background_seed": rec.background_seed,
        "crop_offset": list(rec.crop_offset) if rec.crop_offset else None,
        "kind": rec.kind,
    }


def _assign_and_write(config, corpus, atlas, out_dir, kind, counts):
    if not corpus:
        raise ConfigError("corpus is empty")
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    user_files = _user_backgrounds(config.background_dir) if config.background_dir else None
    order = np.random.default_rng(config.seed).permutation(len(corpus))
    entries = {name: [] for name, _ in counts}
    skipped = []
    it = iter(order)
    for split, n in counts:
        chosen = []
        while len(chosen) < n:
            try:
                pair = corpus[int(next(it))]
            except StopIteration:
                raise ConfigError(
                    f"corpus exhausted: {split} needs {n} records, got {len(chosen)} "
                    f"({len(skipped)} skipped as too long)"
                ) from None
            if _fits(pair, config.spec, atlas):
                chosen.append(pair)
            else:
                skipped.append(pair.pair_id)
        for pair in sorted(chosen, key=lambda p: p.pair_id):
            rec = make_record(pair, config, atlas, kind=kind, user_files=user_files)
            entries[split].append(_write_record(rec, root, split))
    for split, rows in entries.items():
        with open(root / f"{split}.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    meta = {
        "kind": kind,
        "seed": config.seed,
        "config": config.snapshot(),
        "counts": {k: len(v) for k, v in entries.items()},
        "skipped": len(skipped),
    }
    (root / "dataset.json").write_text(json.dumps(meta, sort_keys=True, indent=1) + "\n")
    (root / "skip_report.txt").write_text(
        f"skipped {len(skipped)} pairs that do not fit the strip\n"
        + "".join(f"{pid}\n" for pid in sorted(skipped))
    )
    if skipped:
        log.info("skipped %d overlong pairs", len(skipped))
    return DatasetManifest(root, kind, config.seed, meta["config"], entries, len(skipped))


def build_dataset(config, corpus, atlas=None, out_dir="data"):
    """Render composed source/target strips with golden decompositions."""
    counts = [("train", config.train), ("valid", config.valid), ("test", config.test)]
    return _assign_and_write(config, corpus, atlas or default_atlas(), out_dir, "composed", counts)


def build_pretrain_set(corpus, spec=None, atlas=None, out_dir="pretrain", fonts=(0,), seed=0,
                       count=None):
    """Text-image-only pairs (black field, no background) for translator pre-training."""
    config = DatasetConfig(
        train=len(corpus) if count is None else count,
        fonts=tuple(fonts),
        seed=seed,
        spec=spec or RenderSpec(),
    )
    atlas = atlas or default_atlas()
    if count is None:
        # take every pair that fits
        n_fit = sum(_fits(p, config.spec, atlas) for p in corpus)
        config.train = n_fit
    return _assign_and_write(config, corpus, atlas, out_dir, "textimage", [("train", config.train)])


def load_manifest(root):
    root = Path(root)
    meta = json.loads((root / "dataset.json").read_text())
    entries = {}
    for split in meta["counts"]:
        p = root / f"{split}.jsonl"
        entries[split] = [json.loads(line) for line in p.read_text().splitlines() if line]
    return DatasetManifest(root, meta["kind"], meta["seed"], meta["config"], entries, meta["skipped"])


def read_manifest_rows(path):
    """Rows of a single ``*.jsonl`` manifest file (prediction or reference)."""
    path = Path(path)
    return [json.loads(line) for line in path.read_text().splitlines() if line]


def load_records(manifest, split="train", names=None):
    """Load the images of a split into :class:`SampleRecord` objects (float32 in [0,1])."""
    out = []
    for row in manifest.split(split):
        rec = SampleRecord(
            pair_id=row["pair_id"],
            src_text=row["src_text"],
            tgt_text=row["tgt_text"],
            font_id=row["font_id"],
            kind=row["kind"],
            split=split,
            background_seed=row["background_seed"],
            crop_offset=tuple(row["crop_offset"]) if row["crop_offset"] else None,
        )
        for name, rel in row["paths"].items():
            if names is None or name in names:
                setattr(rec, SampleRecord._FIELD_BY_NAME[name], load_png(manifest.root / rel))
        out.append(rec)
    return out
