"""Stage training, bundle loading, end-to-end inference, evaluation and ablations."""

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import DEBACK_ONLY_STAGES, STAGES, RunConfig
from .errors import BundleError, ConfigError, DependencyError, InputError
from .evalkit import (
    REPORT_SCHEMA,
    corpus_bleu,
    embed_images,
    font_consistency,
    frechet_distance,
    ocr_oracle,
    psnr,
    word_error_rate,
)
from .fusion import FusionModel, fuse, fusion_train_step
from .imagegen import (
    DatasetConfig,
    RenderSpec,
    build_dataset,
    build_pretrain_set,
    load_manifest,
    load_png,
    load_records,
    read_manifest_rows,
    save_png,
)
from .neural import AdamW, PatchGrid, TransformerConfig, frozen_feature_net, load_checkpoint, lr_at
from .neural import read_meta, save_checkpoint
from .separation import SeparationModel, separate, separation_train_step
from .textcorpus import ParallelPair, default_atlas, embedded_corpus, load_bpe, load_corpus, train_bpe
from .translator import Translator, TranslatorConfig, text_batch, translate_codes, translate_train_step
from .vqcodec import CodecConfig, VQCodec, vq_train_step

log = logging.getLogger(__name__)

STAGE_DIRS = {
    "separation": "separation",
    "vq": "vqcodec",
    "translate-pretrain": "translator-pretrain",
    "translate-finetune": "translator",
    "fusion": "fusion",
}
COMPONENTS = {
    "separation": "separation",
    "vq": "vqcodec",
    "translate-pretrain": "translator",
    "translate-finetune": "translator",
    "fusion": "fusion",
}
BPE_FILE = "bpe.txt"


# --- data -----------------------------------------------------------------------


def corpus_for(cfg):
    if cfg.corpus:
        return load_corpus(cfg.corpus, direction=cfg.direction)
    return embedded_corpus(cfg.direction)


def build_data(cfg, atlas=None):
    dc = DatasetConfig(
        train=cfg.train_count,
        valid=cfg.valid_count,
        test=cfg.test_count,
        fonts=cfg.fonts,
        seed=cfg.seed,
        spec=RenderSpec(),
        background_dir=cfg.background_dir or None,
    )
    return build_dataset(dc, corpus_for(cfg), atlas, cfg.data_dir)


def build_pretrain(cfg, atlas=None, corpus=None):
    if not cfg.pretrain_dir:
        raise ConfigError("pretrain_dir is not set")
    return build_pretrain_set(
        corpus if corpus is not None else corpus_for(cfg),
        RenderSpec(),
        atlas,
        cfg.pretrain_dir,
        fonts=cfg.fonts,
        seed=cfg.seed,
        count=cfg.pretrain_count or None,
    )


def _manifest(path, what):
    if not path or not (Path(path) / "dataset.json").exists():
        raise DependencyError(f"{what} not found at {path!r}; build it first")
    return load_manifest(path)


def _stack(records, name):
    return np.stack([r.image(name) for r in records]).astype(np.float32)


def _batches(n, batch, rng):
    """Endless stream of index batches drawn from successive seeded permutations."""
    batch = min(batch, n)
    buf = np.empty(0, dtype=np.int64)
    while True:
        while len(buf) < batch:
            buf = np.concatenate([buf, rng.permutation(n)])
        yield buf[:batch]
        buf = buf[batch:]


# --- checkpoints and models ------------------------------------------------------


def stage_dir(cfg, stage):
    return Path(cfg.checkpoint_dir) / STAGE_DIRS[stage]


def _image_config(cfg):
    return {"grid": cfg.grid.to_dict(), "transformer": cfg.image_transformer.to_dict()}


def _tc(d):
    return TransformerConfig(**d)


def _translator_cfg_dict(tcfg):
    return {
        "codebook_size": tcfg.codebook_size,
        "code_length": tcfg.code_length,
        "text_vocab": tcfg.text_vocab,
        "max_text_len": tcfg.max_text_len,
        "small": tcfg.small.to_dict(),
        "large": tcfg.large.to_dict(),
        "use_pivot": tcfg.use_pivot,
    }


def _translator_from_meta(meta):
    c = dict(meta["config"]["translator"])
    c["small"], c["large"] = _tc(c["small"]), _tc(c["large"])
    return Translator(TranslatorConfig(**c))


def _load_image_model(directory, component):
    meta = read_meta(directory)
    grid = PatchGrid(**meta["config"]["grid"])
    tcfg = _tc(meta["config"]["transformer"])
    if component == "separation":
        model = SeparationModel(grid, tcfg)
    elif component == "fusion":
        model = FusionModel(grid, tcfg)
    else:
        model = VQCodec(grid, tcfg, CodecConfig(**meta["config"]["codec"]))
    load_checkpoint(directory, model, component)
    return model.eval(), meta


def load_stage_model(checkpoint_dir, stage):
    """The trained separation, vq or fusion model under ``checkpoint_dir``, in eval mode."""
    if stage not in ("separation", "vq", "fusion"):
        raise ConfigError(f"{stage!r} is not an image stage")
    d = Path(checkpoint_dir) / STAGE_DIRS[stage]
    if not (d / "meta.json").exists():
        raise DependencyError(f"no trained {stage} checkpoint at {d}")
    return _load_image_model(d, COMPONENTS[stage])[0]


def _load_codec(cfg):
    d = stage_dir(cfg, "vq")
    if not (d / "meta.json").exists():
        raise DependencyError(f"stage needs a trained vq codec; none at {d}")
    return _load_image_model(d, "vqcodec")[0]


def _ensure_bpe(cfg, pairs):
    path = Path(cfg.checkpoint_dir) / BPE_FILE
    if path.exists():
        return load_bpe(path)
    bpe = train_bpe(pairs, cfg.bpe_merges)
    path.parent.mkdir(parents=True, exist_ok=True)
    bpe.save(path)
    return bpe


@torch.no_grad()
def _encode_all(codec, images, batch=32):
    codec.eval()
    out = [codec.encode(torch.as_tensor(images[s : s + batch])) for s in range(0, len(images), batch)]
    return torch.cat(out)


# --- stage runner ---------------------------------------------------------------


class StageLog:
    """Loss lines at ``step % interval == 0`` and at the final step, plus a CSV twin."""

    def __init__(self, cfg, stage, steps):
        self.dir = Path(cfg.checkpoint_dir) / "logs"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.stage, self.steps, self.interval = stage, steps, cfg.log_interval
        self.text = open(self.dir / f"{stage}.log", "w")
        self.rows = []

    def __call__(self, step, lr, losses):
        if step % self.interval and step != self.steps:
            return
        parts = " ".join(f"{k}={v:.6f}" for k, v in losses.items())
        line = f"{self.stage} step={step} lr={lr:.3e} {parts}"
        self.text.write(line + "\n")
        self.text.flush()
        log.info(line)
        self.rows.append({"step": step, "lr": lr, **losses})

    def close(self):
        self.text.close()
        if self.rows:
            with open(self.dir / f"{self.stage}.csv", "w", newline="") as fh:
                w = csv.DictWriter(fh, fieldnames=list(self.rows[0]))
                w.writeheader()
                w.writerows(self.rows)


def _optimizer(cfg, model):
    return AdamW(
        model.parameters(),
        betas=(cfg.beta1, cfg.beta2),
        eps=cfg.adam_eps,
        weight_decay=cfg.weight_decay,
    )


def _check_stage(stage, cfg):
    if stage not in STAGES:
        raise ConfigError(f"unknown stage {stage!r}; expected one of {STAGES}")
    if not cfg.use_deback and stage in DEBACK_ONLY_STAGES:
        raise ConfigError(f"stage {stage!r} is disabled when use_deback = false")


def run_stage(stage, cfg: RunConfig):
    """Train one stage from scratch (or from the pretrain checkpoint) and save it."""
    _check_stage(stage, cfg)
    index = STAGES.index(stage)
    torch.manual_seed(int(np.random.SeedSequence([cfg.seed, index]).generate_state(1)[0]))
    rng = np.random.default_rng([cfg.seed, index, 1])
    steps = cfg.steps_for(stage)
    runner = {
        "separation": _train_separation,
        "vq": _train_vq,
        "translate-pretrain": _train_translator,
        "translate-finetune": _train_translator,
        "fusion": _train_fusion,
    }[stage]
    slog = StageLog(cfg, stage, steps)
    try:
        model, config, extra = runner(stage, cfg, rng, steps, slog)
    finally:
        slog.close()
    out = save_checkpoint(
        stage_dir(cfg, stage),
        COMPONENTS[stage],
        model,
        config={**config, "run": cfg.snapshot(), "stage": stage},
        step=steps,
        extra=extra,
    )
    return out


def _train_separation(stage, cfg, rng, steps, slog):
    recs = load_records(_manifest(cfg.data_dir, "dataset"), "train")
    x = np.concatenate([_stack(recs, "source"), _stack(recs, "target")])
    b = np.concatenate([_stack(recs, "background")] * 2)
    t = np.concatenate([_stack(recs, "src_textimage"), _stack(recs, "tgt_textimage")])
    x, b, t = torch.from_numpy(x), torch.from_numpy(b), torch.from_numpy(t)
    model = SeparationModel(cfg.grid, cfg.image_transformer)
    opt, net = _optimizer(cfg, model), frozen_feature_net()
    for step, idx in zip(range(1, steps + 1), _batches(len(x), cfg.batch_size, rng)):
        lr = lr_at(step, cfg.warmup, cfg.image_d_model, cfg.lr_scale)
        losses = separation_train_step(x[idx], b[idx], t[idx], model, opt, lr, cfg.lambda_p, net, step)
        slog(step, lr, losses)
    return model, _image_config(cfg), None


def _codec_images(cfg):
    recs = load_records(_manifest(cfg.data_dir, "dataset"), "train")
    names = ("src_textimage", "tgt_textimage") if cfg.use_deback else ("source", "target")
    parts = [_stack(recs, n) for n in names]
    if cfg.pretrain_dir and (Path(cfg.pretrain_dir) / "dataset.json").exists():
        pre = load_records(load_manifest(cfg.pretrain_dir), "train")
        parts += [_stack(pre, "src_textimage"), _stack(pre, "tgt_textimage")]
    return np.concatenate(parts)


def _train_vq(stage, cfg, rng, steps, slog):
    imgs = torch.from_numpy(_codec_images(cfg))
    model = VQCodec(cfg.grid, cfg.image_transformer, cfg.codec, seed=cfg.seed)
    opt, net = _optimizer(cfg, model), frozen_feature_net()
    gen = torch.Generator().manual_seed(cfg.seed)
    for step, idx in zip(range(1, steps + 1), _batches(len(imgs), cfg.batch_size, rng)):
        lr = lr_at(step, cfg.warmup, cfg.image_d_model, cfg.lr_scale * cfg.vq_lr_scale)
        losses = vq_train_step(imgs[idx], model, opt, lr, cfg.lambda_p, net, step, gen)
        slog(step, lr, losses)
    config = {**_image_config(cfg), "codec": asdict(cfg.codec)}
    return model, config, None


def _translation_data(cfg, stage, codec):
    """(src_codes, tgt_codes, tgt_texts) for a translation stage."""
    if stage == "translate-pretrain":
        recs = load_records(_manifest(cfg.pretrain_dir, "pretrain set"), "train")
        src, tgt = _stack(recs, "src_textimage"), _stack(recs, "tgt_textimage")
    else:
        recs = load_records(_manifest(cfg.data_dir, "dataset"), "train")
        names = ("src_textimage", "tgt_textimage") if cfg.use_deback else ("source", "target")
        src, tgt = _stack(recs, names[0]), _stack(recs, names[1])
    return _encode_all(codec, src), _encode_all(codec, tgt), [r.tgt_text for r in recs]


def _bpe_pairs(cfg):
    rows = list(_manifest(cfg.data_dir, "dataset").split("train"))
    if cfg.pretrain_dir and (Path(cfg.pretrain_dir) / "dataset.json").exists():
        rows += load_manifest(cfg.pretrain_dir).split("train")
    return [ParallelPair(r["src_text"], r["tgt_text"], i) for i, r in enumerate(rows)]


def _train_translator(stage, cfg, rng, steps, slog):
    codec = _load_codec(cfg)
    bpe = _ensure_bpe(cfg, _bpe_pairs(cfg))
    src, tgt, texts = _translation_data(cfg, stage, codec)
    tokens = [bpe.encode(t) for t in texts]
    tcfg = cfg.translator(bpe.size)
    model = Translator(tcfg)
    extra = {"init": "scratch"}
    pre = stage_dir(cfg, "translate-pretrain")
    if stage == "translate-finetune" and cfg.init_from_pretrain and (pre / "meta.json").exists():
        load_checkpoint(pre, model, "translator")
        extra["init"] = str(pre)
    opt = _optimizer(cfg, model)
    batch = cfg.translate_batch_size or cfg.batch_size
    for step, idx in zip(range(1, steps + 1), _batches(len(src), batch, rng)):
        lr = lr_at(step, cfg.warmup, cfg.large_d_model, cfg.lr_scale)
        text_in, labels = text_batch([tokens[i] for i in idx], cfg.max_text_len)
        losses = translate_train_step(
            src[idx], tgt[idx], text_in, labels, model, opt, lr, cfg.label_smoothing, step
        )
        if not cfg.use_pivot:
            losses.pop("tit")
        slog(step, lr, losses)
    config = {"translator": _translator_cfg_dict(tcfg), "bpe": BPE_FILE}
    return model, config, extra


def _train_fusion(stage, cfg, rng, steps, slog):
    recs = load_records(_manifest(cfg.data_dir, "dataset"), "train")
    target = np.concatenate([_stack(recs, "source"), _stack(recs, "target")])
    if cfg.fusion_input == "golden":
        bg = np.concatenate([_stack(recs, "background")] * 2)
        ti = np.concatenate([_stack(recs, "src_textimage"), _stack(recs, "tgt_textimage")])
    else:
        # what the pipeline feeds at inference: separated background, codec text-image
        sep_dir = stage_dir(cfg, "separation")
        if not (sep_dir / "meta.json").exists():
            raise DependencyError("fusion_input = separated needs a trained separation stage")
        sep = _load_image_model(sep_dir, "separation")[0]
        codec = _load_codec(cfg)
        with torch.no_grad():
            bg_src = separate(torch.from_numpy(_stack(recs, "source")), sep)[0]
            bg_tgt = separate(torch.from_numpy(_stack(recs, "target")), sep)[0]
            bg = torch.cat([bg_src, bg_tgt]).numpy()
            ti = np.concatenate([
                codec.decode(_encode_all(codec, _stack(recs, n))).clamp(0, 1).numpy()
                for n in ("src_textimage", "tgt_textimage")
            ])
    bg, ti, target = (torch.from_numpy(np.ascontiguousarray(a, dtype=np.float32)) for a in (bg, ti, target))
    model = FusionModel(cfg.grid, cfg.image_transformer)
    opt, net = _optimizer(cfg, model), frozen_feature_net()
    for step, idx in zip(range(1, steps + 1), _batches(len(target), cfg.batch_size, rng)):
        lr = lr_at(step, cfg.warmup, cfg.image_d_model, cfg.lr_scale)
        losses = fusion_train_step(bg[idx], ti[idx], target[idx], model, opt, lr, cfg.lambda_p, net, step)
        slog(step, lr, losses)
    return model, _image_config(cfg), None


def run_all(cfg, stages=None):
    """Every applicable stage in schedule order; skips pretraining without a pretrain set."""
    if stages is None:
        stages = [s for s in STAGES if cfg.use_deback or s not in DEBACK_ONLY_STAGES]
        if not cfg.pretrain_dir:
            stages.remove("translate-pretrain")
    return {s: run_stage(s, cfg) for s in stages}


# --- bundle and inference -------------------------------------------------------


@dataclass
class PipelineBundle:
    codec: VQCodec
    translator: Translator
    bpe: object
    separation: SeparationModel = None
    fusion: FusionModel = None
    run: dict = field(default_factory=dict)
    versions: dict = field(default_factory=dict)

    @property
    def use_deback(self):
        return self.separation is not None

    @classmethod
    def load(cls, checkpoint_dir):
        root = Path(checkpoint_dir)
        metas = {}

        def need(name):
            d = root / name
            if not (d / "meta.json").exists():
                raise BundleError(f"bundle at {root} lacks the {name!r} checkpoint")
            return d

        tr_meta = read_meta(need("translator"))
        run = tr_meta["config"].get("run", {})
        use_deback = run.get("use_deback", True)
        codec, metas["vqcodec"] = _load_image_model(need("vqcodec"), "vqcodec")
        translator = _translator_from_meta(tr_meta)
        load_checkpoint(root / "translator", translator, "translator")
        metas["translator"] = tr_meta
        sep = fus = None
        if use_deback:
            sep, metas["separation"] = _load_image_model(need("separation"), "separation")
            fus, metas["fusion"] = _load_image_model(need("fusion"), "fusion")
        bpe_path = root / BPE_FILE
        if not bpe_path.exists():
            raise BundleError(f"bundle at {root} lacks {BPE_FILE}")
        bundle = cls(
            codec=codec,
            translator=translator.eval(),
            bpe=load_bpe(bpe_path),
            separation=sep,
            fusion=fus,
            run=run,
            versions={k: m["digest"][:16] for k, m in metas.items()},
        )
        bundle.check()
        return bundle

    def check(self):
        grid = self.codec.grid
        for name, model in (("separation", self.separation), ("fusion", self.fusion)):
            if model is not None and model.grid != grid:
                raise BundleError(f"{name} grid {model.grid} does not match codec grid {grid}")
        tc = self.translator.cfg
        if tc.codebook_size != self.codec.size:
            raise BundleError(
                f"translator expects codebook size {tc.codebook_size}, codec has {self.codec.size}"
            )
        if tc.code_length != grid.n:
            raise BundleError(f"translator code length {tc.code_length} != grid size {grid.n}")
        if tc.use_pivot and tc.text_vocab != self.bpe.size:
            raise BundleError(f"translator text vocab {tc.text_vocab} != BPE vocab {self.bpe.size}")


@dataclass
class EndToEndResult:
    target: np.ndarray
    pivot_text: str
    intermediates: dict


@torch.no_grad()
def translate_batch(images, bundle, batch=16):
    """End-to-end translation of a stack of composed strips."""
    images = np.asarray(images, dtype=np.float32)
    g = bundle.codec.grid
    if images.ndim != 4 or images.shape[1:] != (g.strip_h, g.strip_w, g.channels):
        raise InputError(f"expected (n, {g.strip_h}, {g.strip_w}, {g.channels}) images, got {images.shape}")
    results = []
    for s in range(0, len(images), batch):
        x = torch.from_numpy(images[s : s + batch])
        inter = {}
        if bundle.use_deback:
            background, src_ti = separate(x, bundle.separation)
            inter["background"], inter["src_textimage"] = background, src_ti
            src_codes = bundle.codec.encode(src_ti)
        else:
            src_codes = bundle.codec.encode(x)
        outs = translate_codes(src_codes, bundle.translator)
        tgt_codes = torch.stack([o.codes for o in outs])
        tgt_ti = bundle.codec.decode(tgt_codes).clamp(0.0, 1.0)
        target = fuse(background, tgt_ti, bundle.fusion) if bundle.use_deback else tgt_ti
        for i, o in enumerate(outs):
            piv = bundle.bpe.decode(o.pivot_tokens) if o.pivot_tokens else ""
            results.append(EndToEndResult(
                target=target[i].numpy(),
                pivot_text=piv,
                intermediates={
                    **{k: v[i].numpy() for k, v in inter.items()},
                    "src_codes": src_codes[i].numpy(),
                    "tgt_codes": tgt_codes[i].numpy(),
                    "tgt_textimage": tgt_ti[i].numpy(),
                    "truncated": o.truncated,
                },
            ))
    return results


def translate_end_to_end(src, bundle):
    """One composed strip -> ``EndToEndResult(target, pivot_text, intermediates)``."""
    src = np.asarray(src, dtype=np.float32)
    if src.ndim != 3:
        raise InputError(f"expected one H x W x C image, got shape {src.shape}")
    return translate_batch(src[None], bundle)[0]


def write_predictions(records, results, out_dir):
    """Prediction images plus ``predictions.jsonl`` (paths relative to ``out_dir``)."""
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    rows = []
    for rec, res in zip(records, results):
        rel = f"images/{rec.pair_id:06d}_target.png"
        save_png(res.target, out / rel)
        rows.append({
            "pair_id": rec.pair_id,
            "paths": {"target": rel},
            "pivot_text": res.pivot_text,
            "code_indices": [int(c) for c in res.intermediates["tgt_codes"]],
            "truncated": bool(res.intermediates["truncated"]),
        })
    with open(out / "predictions.jsonl", "w", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return out / "predictions.jsonl"


def predict_split(bundle, data_dir, split, out_dir):
    recs = load_records(_manifest(data_dir, "dataset"), split, names=("source",))
    if not recs:
        raise InputError(f"split {split!r} of {data_dir} is empty")
    results = translate_batch(_stack(recs, "source"), bundle)
    return write_predictions(recs, results, out_dir), results


# --- evaluation -----------------------------------------------------------------


def _ref_rows(ref, split):
    ref = Path(ref)
    if ref.is_dir():
        return ref, _manifest(ref, "reference dataset").split(split)
    return ref.parent, read_manifest_rows(ref)


def evaluate_run(pred, ref, atlas=None, split="train", out_path=None, labels=None, config_hash="",
                 ocr=None):
    """OCR-based BLEU/WER, FD-surrogate, PSNR and font consistency of predictions vs references.

    ``pred`` is a ``predictions.jsonl`` file or the directory holding it; ``ref`` is a
    dataset directory (``split`` picks the manifest) or a manifest file. ``ocr`` maps an
    image to a string and defaults to the atlas oracle.
    """
    pred = Path(pred)
    pred_file = pred / "predictions.jsonl" if pred.is_dir() else pred
    if not pred_file.exists():
        raise InputError(f"no predictions at {pred_file}")
    pred_rows = {r["pair_id"]: r for r in read_manifest_rows(pred_file)}
    ref_root, ref_list = _ref_rows(ref, split)
    ref_rows = {r["pair_id"]: r for r in ref_list}
    missing = sorted(set(ref_rows) ^ set(pred_rows))
    if missing:
        raise InputError(f"prediction and reference manifests disagree on pair_ids: {missing}")
    if len(ref_rows) < 2:
        raise InputError("evaluation needs at least 2 aligned samples")
    atlas = atlas or default_atlas()
    if ocr is None:

        def ocr(img):
            return ocr_oracle(img, atlas).text

    hyps, refs, outs, golds, fcs, ps, samples = [], [], [], [], [], [], []
    for pid in sorted(ref_rows):
        r = ref_rows[pid]
        out = load_png(pred_file.parent / pred_rows[pid]["paths"]["target"])
        gold = load_png(ref_root / r["paths"]["target"])
        hyps.append(ocr(out))
        refs.append(r["tgt_text"])
        outs.append(out)
        golds.append(gold)
        ps.append(psnr(out, gold))
        src_path = r["paths"].get("source")
        src = load_png(ref_root / src_path) if src_path else gold
        fcs.append(font_consistency(src, out, atlas))
        samples.append({"pair_id": pid, "reference": refs[-1], "ocr": hyps[-1],
                        "psnr": round(ps[-1], 4), "font_consistency": round(fcs[-1], 4)})
    report = {
        "bleu": float(corpus_bleu(hyps, refs)),
        "wer": float(word_error_rate(hyps, refs)),
        "fd_surrogate": float(frechet_distance(embed_images(outs), embed_images(golds))),
        "mean_psnr": float(np.mean(ps)),
        "median_psnr": float(np.median(ps)),
        "font_consistency": float(np.mean(fcs)),
        "n_samples": len(ref_rows),
        "config_hash": config_hash,
    }
    if labels:
        report["labels"] = dict(labels)
    validate_report(report)
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
        write_samples(samples, Path(out_path).with_name("samples.tsv"))
    return report


def write_samples(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), delimiter="\t")
        w.writeheader()
        w.writerows(rows)


def validate_report(report):
    import jsonschema

    jsonschema.validate(report, REPORT_SCHEMA)


# --- ablations ------------------------------------------------------------------

ABLATION_MATRIX = [(p, d) for p in (True, False) for d in (True, False)]


def run_ablation(cfg, matrix=ABLATION_MATRIX, split="train"):
    """Train and evaluate every ``(use_pivot, use_deback)`` cell under its own checkpoint dir."""
    reports = []
    base = Path(cfg.checkpoint_dir)
    for use_pivot, use_deback in matrix:
        tag = f"pivot-{'on' if use_pivot else 'off'}_deback-{'on' if use_deback else 'off'}"
        sub = cfg.replace(
            use_pivot=use_pivot,
            use_deback=use_deback,
            checkpoint_dir=str(base / tag),
            pretrain_dir="",
        )
        run_all(sub)
        bundle = PipelineBundle.load(sub.checkpoint_dir)
        pred_dir = Path(cfg.report_dir) / "ablation" / tag
        predict_split(bundle, cfg.data_dir, split, pred_dir)
        report = evaluate_run(
            pred_dir,
            cfg.data_dir,
            split=split,
            out_path=pred_dir / "report.json",
            labels={"use_pivot": use_pivot, "use_deback": use_deback, "tag": tag},
            config_hash=sub.config_hash(),
        )
        reports.append(report)
    summary = Path(cfg.report_dir) / "ablation" / "summary.json"
    summary.write_text(json.dumps(reports, indent=1, sort_keys=True) + "\n")
    return reports
