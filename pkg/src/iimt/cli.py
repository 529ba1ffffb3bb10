"""Command-line entry point: ``iimt <subcommand> ...``."""

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .config import STAGES, load_config
from .errors import IIMTError, InputError

log = logging.getLogger("iimt")


def _config(args, seed_required=False):
    overrides = dict(kv.split("=", 1) for kv in (args.set or []) if "=" in kv)
    bad = [kv for kv in (args.set or []) if "=" not in kv]
    if bad:
        raise InputError(f"--set expects key=value, got {bad}")
    if args.seed is not None:
        overrides["seed"] = str(args.seed)
    elif seed_required:
        raise InputError("--seed is required for training commands")
    return load_config(args.config, overrides)


def cmd_build_data(args):
    from .pipeline import build_data

    cfg = _config(args)
    m = build_data(cfg)
    print(f"wrote {sum(len(v) for v in m.entries.values())} records to {m.root} (skipped {m.skipped})")


def cmd_build_pretrain(args):
    from .pipeline import build_pretrain

    cfg = _config(args)
    m = build_pretrain(cfg)
    print(f"wrote {len(m.split('train'))} text-image pairs to {m.root}")


def cmd_train(args):
    from .pipeline import run_all, run_stage

    cfg = _config(args, seed_required=True)
    if args.stage == "all":
        for stage, path in run_all(cfg).items():
            print(f"{stage}: {path}")
    else:
        print(f"{args.stage}: {run_stage(args.stage, cfg)}")
    if args.figures:
        from .report import render_run_report

        render_run_report(cfg.report_dir, cfg.checkpoint_dir)


def _input_images(path, split):
    from .imagegen import load_manifest, load_png

    path = Path(path)
    if (path / "dataset.json").exists():
        m = load_manifest(path)
        rows = m.split(split)
        return [(r["pair_id"], load_png(path / r["paths"]["source"])) for r in rows]
    files = sorted(path.glob("*.png")) if path.is_dir() else [path]
    if not files or not all(f.exists() for f in files):
        raise InputError(f"no input images at {path}")
    return [(i, load_png(f)) for i, f in enumerate(files)]


def cmd_translate(args):
    from .pipeline import PipelineBundle, translate_batch, write_predictions
    from .imagegen import SampleRecord

    bundle = PipelineBundle.load(args.bundle)
    items = _input_images(args.input, args.split)
    results = translate_batch(np.stack([im for _, im in items]), bundle)
    recs = [SampleRecord(pair_id=pid, src_text="", tgt_text="", font_id=0) for pid, _ in items]
    out = write_predictions(recs, results, args.out)
    print(f"wrote {len(results)} predictions to {out}")
    for (pid, _), res in zip(items, results):
        print(f"{pid}\t{res.pivot_text}")


def cmd_evaluate(args):
    from .pipeline import evaluate_run

    out = Path(args.out)
    config_hash = args.config_hash or ""
    if not config_hash and args.checkpoints:
        from .config import RunConfig
        from .neural import read_meta

        run = read_meta(Path(args.checkpoints) / "translator")["config"]["run"]
        config_hash = RunConfig(**{**run, "fonts": tuple(run["fonts"])}).config_hash()
    report = evaluate_run(args.pred, args.ref, split=args.split, out_path=out / "report.json",
                          config_hash=config_hash)
    if args.figures:
        from .imagegen import load_manifest, load_png, read_manifest_rows
        from .report import render_run_report

        pred = Path(args.pred)
        pred_file = pred / "predictions.jsonl" if pred.is_dir() else pred
        ref_rows = {r["pair_id"]: r for r in load_manifest(args.ref).split(args.split)}
        rows = []
        for p in read_manifest_rows(pred_file)[:4]:
            r = ref_rows[p["pair_id"]]
            rows.append({
                "source": load_png(Path(args.ref) / r["paths"]["source"]),
                "output": load_png(pred_file.parent / p["paths"]["target"]),
                "golden": load_png(Path(args.ref) / r["paths"]["target"]),
            })
        render_run_report(out, args.checkpoints, sample_rows=rows)
    print(json.dumps(report, indent=1, sort_keys=True))


def cmd_ablate(args):
    from .pipeline import run_ablation
    from .report import render_run_report

    cfg = _config(args, seed_required=True)
    reports = run_ablation(cfg, split=args.split)
    render_run_report(Path(cfg.report_dir) / "ablation", reports=reports)
    for r in reports:
        lab = r["labels"]
        print(f"{lab['tag']}\tbleu={r['bleu']:.2f}\tpsnr={r['mean_psnr']:.2f}\tfd={r['fd_surrogate']:.4f}")


def build_parser():
    p = argparse.ArgumentParser(prog="iimt", description="In-image translation toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        sp.add_argument("--seed", type=int)
        return sp

    sp = with_config(sub.add_parser("build-data", help="render the composed dataset"))
    sp.set_defaults(func=cmd_build_data)
    sp = with_config(sub.add_parser("build-pretrain", help="render text-image pretraining pairs"))
    sp.set_defaults(func=cmd_build_pretrain)

    sp = with_config(sub.add_parser("train", help="train one stage (or all)"))
    sp.add_argument("--stage", required=True, choices=STAGES + ("all",))
    sp.add_argument("--figures", action="store_true", help="also plot loss curves")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("translate", help="run the end-to-end pipeline on images")
    sp.add_argument("--input", required=True, help="png file, directory of pngs, or dataset dir")
    sp.add_argument("--bundle", required=True, help="checkpoint directory")
    sp.add_argument("--out", default="predictions")
    sp.add_argument("--split", default="test")
    sp.set_defaults(func=cmd_translate)

    sp = sub.add_parser("evaluate", help="score predictions against a reference dataset")
    sp.add_argument("--pred", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--split", default="test")
    sp.add_argument("--out", default="reports")
    sp.add_argument("--config-hash", default="")
    sp.add_argument("--figures", action="store_true")
    sp.add_argument("--checkpoints", help="checkpoint dir whose logs to plot")
    sp.set_defaults(func=cmd_evaluate)

    sp = with_config(sub.add_parser("ablate", help="train and evaluate the pivot/deback matrix"))
    sp.add_argument("--matrix", action="store_true", required=True)
    sp.add_argument("--split", default="train")
    sp.set_defaults(func=cmd_ablate)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    try:
        args.func(args)
    except IIMTError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
