"""Run configuration: a flat ``key = value`` file plus command-line overrides."""

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .errors import ConfigError
from .neural import PatchGrid, TransformerConfig
from .translator import TranslatorConfig
from .vqcodec import CodecConfig

STAGES = ("separation", "vq", "translate-pretrain", "translate-finetune", "fusion")
DEBACK_ONLY_STAGES = ("separation", "fusion")
DIRECTIONS = ("de-en", "en-de")
FUSION_INPUTS = ("golden", "separated")

# keys that locate files rather than change results; left out of the config hash
_PATH_KEYS = ("data_dir", "pretrain_dir", "checkpoint_dir", "report_dir", "corpus")


@dataclass
class RunConfig:
    # paths
    data_dir: str = "data"
    pretrain_dir: str = ""
    checkpoint_dir: str = "checkpoints"
    report_dir: str = "reports"
    corpus: str = ""  # empty: the embedded corpus

    # data
    seed: int = 0
    direction: str = "de-en"
    fonts: tuple = (0,)
    train_count: int = 32
    valid_count: int = 0
    test_count: int = 0
    pretrain_count: int = 0  # 0: every pair that fits
    background_dir: str = ""

    # schedule
    separation_steps: int = 2000
    vq_steps: int = 4000
    pretrain_steps: int = 4000
    finetune_steps: int = 2000
    fusion_steps: int = 1500
    log_interval: int = 100
    batch_size: int = 16
    translate_batch_size: int = 0  # 0: use batch_size

    # optimizer
    lr_scale: float = 1.0
    vq_lr_scale: float = 0.5
    warmup: int = 400
    beta1: float = 0.9
    beta2: float = 0.98
    adam_eps: float = 1e-9
    weight_decay: float = 0.01

    # losses
    lambda_p: float = 0.1
    label_smoothing: float = 0.1

    # image networks (separation, codec, fusion)
    patch_size: int = 16
    image_d_model: int = 128
    image_layers: int = 2
    image_heads: int = 4
    image_d_ff: int = 512
    dropout: float = 0.3

    # codec
    codebook_size: int = 512
    code_dim: int = 32
    ema_gamma: float = 0.99
    reseed_after: int = 0
    reseed_until: int = 0

    # translator
    small_d_model: int = 128
    small_layers: int = 2
    small_heads: int = 4
    small_d_ff: int = 512
    large_d_model: int = 256
    large_layers: int = 2
    large_heads: int = 8
    large_d_ff: int = 1024
    bpe_merges: int = 1000
    max_text_len: int = 64
    init_from_pretrain: bool = True

    # ablation switches
    use_pivot: bool = True
    use_deback: bool = True
    fusion_input: str = "golden"

    def __post_init__(self):
        self.fonts = tuple(int(f) for f in self.fonts)
        self.validate()

    def validate(self):
        for name in ("separation_steps", "vq_steps", "pretrain_steps", "finetune_steps",
                     "fusion_steps", "log_interval", "batch_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.translate_batch_size < 0:
            raise ConfigError("translate_batch_size must be >= 0")
        if self.direction not in DIRECTIONS:
            raise ConfigError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if self.fusion_input not in FUSION_INPUTS:
            raise ConfigError(f"fusion_input must be one of {FUSION_INPUTS}")
        if not self.fonts or any(f not in (0, 1, 2) for f in self.fonts):
            raise ConfigError(f"fonts must be a non-empty subset of 0,1,2, got {self.fonts}")
        if not 0.0 < self.ema_gamma < 1.0:
            raise ConfigError("ema_gamma must lie in (0, 1)")
        if not 0.0 <= self.label_smoothing < 1.0:
            raise ConfigError("label_smoothing must lie in [0, 1)")

    # derived component configs ------------------------------------------------

    @property
    def grid(self):
        return PatchGrid(patch_size=self.patch_size)

    @property
    def image_transformer(self):
        return TransformerConfig(
            self.image_d_model, self.image_layers, self.image_heads, self.image_d_ff,
            self.dropout, max(128, self.grid.n),
        )

    @property
    def codec(self):
        return CodecConfig(self.codebook_size, self.code_dim, self.ema_gamma, reseed_after=self.reseed_after,
                           reseed_until=self.reseed_until)

    def translator(self, text_vocab):
        n = self.grid.n
        positions = max(128, n, self.max_text_len + 1)
        return TranslatorConfig(
            codebook_size=self.codebook_size,
            code_length=n,
            text_vocab=text_vocab,
            max_text_len=self.max_text_len,
            small=TransformerConfig(self.small_d_model, self.small_layers, self.small_heads,
                                    self.small_d_ff, self.dropout, positions),
            large=TransformerConfig(self.large_d_model, self.large_layers, self.large_heads,
                                    self.large_d_ff, self.dropout, positions),
            use_pivot=self.use_pivot,
        )

    def steps_for(self, stage):
        return {
            "separation": self.separation_steps,
            "vq": self.vq_steps,
            "translate-pretrain": self.pretrain_steps,
            "translate-finetune": self.finetune_steps,
            "fusion": self.fusion_steps,
        }[stage]

    def snapshot(self):
        d = asdict(self)
        d["fonts"] = list(self.fonts)
        return d

    def config_hash(self):
        d = {k: v for k, v in self.snapshot().items() if k not in _PATH_KEYS}
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    def replace(self, **changes):
        return RunConfig(**{**self.snapshot(), **changes})


_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


def _coerce(name, kind, raw):
    raw = raw.strip()
    try:
        if kind is bool:
            return _BOOL[raw.lower()]
        if kind is int:
            return int(raw)
        if kind is float:
            return float(raw)
        if kind is tuple:
            return tuple(int(v) for v in raw.replace(" ", "").split(",") if v)
    except (KeyError, ValueError):
        raise ConfigError(f"bad value for {name}: {raw!r}") from None
    return raw


_FIELD_TYPES = {f.name: {"bool": bool, "int": int, "float": float, "tuple": tuple}.get(
    f.type if isinstance(f.type, str) else f.type.__name__, str) for f in fields(RunConfig)}


def parse_overrides(pairs):
    """``["key=value", ...]`` or a mapping of strings -> typed dict."""
    items = pairs.items() if isinstance(pairs, dict) else (p.split("=", 1) for p in pairs)
    out = {}
    for item in items:
        if len(item) != 2:
            raise ConfigError(f"expected key=value, got {item!r}")
        key, raw = item[0].strip(), item[1]
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        out[key] = _coerce(key, _FIELD_TYPES[key], str(raw))
    return out


def read_config_file(path):
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        values[key.strip()] = raw.strip()
    return values


def load_config(path=None, overrides=None):
    """File values first, then overrides; everything is type-checked against RunConfig."""
    values = {}
    if path:
        if not Path(path).exists():
            raise ConfigError(f"config file {path} not found")
        values.update(parse_overrides(read_config_file(path)))
    values.update(parse_overrides(overrides or {}))
    return RunConfig(**values)


def write_config(cfg, path):
    lines = []
    for key, value in cfg.snapshot().items():
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = str(value).lower()
        lines.append(f"{key} = {value}")
    Path(path).write_text("\n".join(lines) + "\n")
