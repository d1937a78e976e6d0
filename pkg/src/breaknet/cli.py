"""Command-line entry point.

Subcommands: train, eval, infer, gen-synthetic, export-viz, gradcheck.
Training configuration comes from defaults, then an optional JSON config
file (flat keys mirroring TrainConfig), then explicit flags, in that
order of precedence. The BREAK_LOG environment variable (quiet, info,
debug) sets verbosity. All file writes go through a temp-file rename.
"""

import argparse
import json
import logging
import os
import sys

from .data import (
    NewsArticle,
    SyntheticSpec,
    atomic_write_text,
    generate_synthetic,
    load_dataset,
    read_dataset,
    save_dataset,
)
from .denoise import DenoiseParams
from .encoders import ABLATIONS, ModelParams, model_forward
from .trainer import (
    TrainConfig,
    TrainResult,
    build_vectorizers,
    evaluate_metrics,
    load_checkpoint,
    predict_articles,
    save_checkpoint,
    train,
)
from .viz import export_viz

log = logging.getLogger("breaknet")


def _setup_logging() -> None:
    level_name = os.environ.get("BREAK_LOG", "info").strip().lower()
    levels = {"quiet": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}
    if level_name not in levels:
        raise ValueError(f"BREAK_LOG={level_name!r} not in {sorted(levels)}")
    logging.basicConfig(level=levels[level_name], format="%(levelname)s %(message)s")


def _canonical_json(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)


def _parse_dims(text: str):
    try:
        d_str, h_str = text.split(",")
        return int(d_str), int(h_str)
    except ValueError as exc:
        raise ValueError(f"--dims expects 'd,h' (got {text!r})") from exc


def _build_config(args) -> TrainConfig:
    values = {}
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_values = json.load(fh)
        if not isinstance(file_values, dict):
            raise ValueError(f"config file {args.config} must hold a flat object")
        known = set(TrainConfig.__dataclass_fields__)
        unknown = set(file_values) - known
        if unknown:
            raise ValueError(f"config file has unknown keys: {sorted(unknown)}")
        values.update(file_values)
    if getattr(args, "seed", None) is not None:
        values["seed"] = args.seed
    if getattr(args, "beta", None) is not None:
        values["beta"] = args.beta
    if getattr(args, "ablate", None) is not None:
        values["ablate"] = args.ablate
    if getattr(args, "dims", None) is not None:
        values["d"], values["h"] = _parse_dims(args.dims)
    if getattr(args, "epochs", None) is not None:
        values["max_epochs"] = args.epochs
    if getattr(args, "patience", None) is not None:
        values["patience"] = args.patience
    if getattr(args, "lr_inner", None) is not None:
        values["lr_inner"] = args.lr_inner
    if getattr(args, "lr_outer", None) is not None:
        values["lr_outer"] = args.lr_outer
    if getattr(args, "batch_size", None) is not None:
        values["batch_size"] = args.batch_size
    return TrainConfig(**values)


def _split_metrics(articles, result: TrainResult, node_vec, seq_vec) -> dict:
    probs, labels, mean_cls, mean_kl = predict_articles(
        articles, result.store, result.config, node_vec, seq_vec)
    report = evaluate_metrics(probs, labels)
    doc = report.as_dict()
    doc["loss_cls"] = mean_cls
    doc["loss_kl"] = mean_kl
    doc["count"] = len(articles)
    return doc


def _cmd_train(args) -> int:
    cfg = _build_config(args)
    splits = load_dataset(args.data, cfg.seed)
    if not splits.val:
        raise ValueError("dataset too small: validation split is empty")
    log.info("training on %d articles (val %d, test %d), mode %s",
             len(splits.train), len(splits.val), len(splits.test), cfg.ablate)
    result = train(splits.train, splits.val, cfg, log=log.info)
    os.makedirs(args.out, exist_ok=True)
    node_vec, seq_vec = build_vectorizers(cfg)
    metrics = {
        "train": _split_metrics(splits.train, result, node_vec, seq_vec),
        "val": _split_metrics(splits.val, result, node_vec, seq_vec),
        "test": _split_metrics(splits.test, result, node_vec, seq_vec) if splits.test else None,
        "history": result.history,
        "best_epoch": result.best_epoch,
    }
    save_checkpoint(result, os.path.join(args.out, "checkpoint.json"))
    atomic_write_text(os.path.join(args.out, "metrics.json"),
                      _canonical_json(metrics) + "\n")
    test_f1 = metrics["test"]["f1"] if metrics["test"] else float("nan")
    print(f"trained {cfg.ablate}: best epoch {result.best_epoch}, "
          f"val f1 {result.best_val_f1}, test f1 {test_f1:.4f}")
    return 0


def _load_for_eval(args):
    result = load_checkpoint(args.checkpoint)
    cfg = result.config
    if args.ablate is not None and args.ablate != cfg.ablate:
        # full and no_inf share parameter shapes; other switches change them
        if {args.ablate, cfg.ablate} <= {"full", "no_inf"}:
            cfg = TrainConfig(**{**cfg.__dict__, "ablate": args.ablate})
            result = TrainResult(result.store, cfg, [], result.best_epoch, result.d_img)
        else:
            raise ValueError(
                f"checkpoint was trained with ablate={cfg.ablate!r}; "
                f"cannot evaluate as {args.ablate!r}")
    return result


def _cmd_eval(args) -> int:
    result = _load_for_eval(args)
    cfg = result.config
    splits = load_dataset(args.data, cfg.seed)
    chosen = {"train": splits.train, "val": splits.val,
              "test": splits.test, "all": splits.all}[args.split]
    if not chosen:
        raise ValueError(f"split {args.split!r} is empty")
    node_vec, seq_vec = build_vectorizers(cfg)
    doc = _split_metrics(chosen, result, node_vec, seq_vec)
    doc["split"] = args.split
    doc["ablate"] = cfg.ablate
    text = _canonical_json(doc) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    print(f"eval {args.split} ({cfg.ablate}): acc {doc['accuracy']:.4f} "
          f"f1 {doc['f1']:.4f} on {doc['count']} articles")
    return 0


def _cmd_infer(args) -> int:
    result = _load_for_eval(args)
    cfg = result.config
    articles = read_dataset(args.data)
    node_vec, seq_vec = build_vectorizers(cfg)
    phi = DenoiseParams.from_store(result.store)
    theta = ModelParams.from_store(result.store)
    lines = []
    for article in articles:
        out = model_forward(article, node_vec, seq_vec, phi, theta, cfg.ablate)
        lines.append(_canonical_json({
            "id": article.id,
            "prob_fake": out.prob,
            "prediction": 1 if out.prob >= 0.5 else 0,
        }))
    text = "\n".join(lines) + "\n"
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    log.info("scored %d articles", len(articles))
    return 0


def _cmd_gen_synthetic(args) -> int:
    spec = SyntheticSpec(
        n_articles=args.n_articles,
        sentences_min=args.sentences_min,
        sentences_max=args.sentences_max,
        signal_strength=args.signal_strength,
        class_balance=args.balance,
        seed=args.seed if args.seed is not None else 0,
        template_tokens=args.template_tokens,
    )
    articles, meta = generate_synthetic(spec)
    save_dataset(articles, args.out)
    atomic_write_text(args.out + ".meta.json", _canonical_json(meta) + "\n")
    print(f"wrote {len(articles)} articles to {args.out} "
          f"(signal meta in {args.out}.meta.json)")
    return 0


def _cmd_export_viz(args) -> int:
    result = load_checkpoint(args.checkpoint)
    articles = read_dataset(args.data)
    if args.article_id is not None:
        matching = [a for a in articles if a.id == args.article_id]
        if not matching:
            raise ValueError(f"article {args.article_id!r} not found in {args.data}")
        article = matching[0]
    else:
        article = articles[0]
    node_vec, seq_vec = build_vectorizers(result.config)
    doc = export_viz(result, article, node_vec, seq_vec)
    doc["article_id"] = article.id
    atomic_write_text(args.out, _canonical_json(doc) + "\n")
    print(f"exported case study for {article.id!r} ({len(doc['in_degree'])} nodes) to {args.out}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .checks import run_all

    failures = 0
    for name, report in run_all():
        status = "PASS" if report.passed else "FAIL"
        print(f"{status} {name}: max rel error {report.max_rel_error:.3e}")
        if not report.passed:
            failures += 1
    if failures:
        print(f"{failures} gradient check(s) failed")
        return 1
    return 0


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with TrainConfig fields")
    p.add_argument("--seed", type=int)
    p.add_argument("--beta", type=float)
    p.add_argument("--ablate", choices=ABLATIONS)
    p.add_argument("--dims", help="d,h (e.g. 32,16)")
    p.add_argument("--epochs", type=int)
    p.add_argument("--patience", type=int)
    p.add_argument("--lr-inner", dest="lr_inner", type=float)
    p.add_argument("--lr-outer", dest="lr_outer", type=float)
    p.add_argument("--batch-size", dest="batch_size", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="breaknet",
        description="Sentence-graph fake news detector with bi-level "
                    "structure and feature denoising.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoint + metrics")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="output directory")
    _add_train_flags(p)
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset split")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test", "all"), default="test")
    p.add_argument("--ablate", choices=ABLATIONS)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("infer", help="score articles with a checkpoint")
    p.add_argument("--data", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--ablate", choices=ABLATIONS)
    p.add_argument("--out")
    p.set_defaults(fn=_cmd_infer)

    p = sub.add_parser("gen-synthetic", help="generate a planted-signal corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n-articles", type=int, default=500)
    p.add_argument("--sentences-min", type=int, default=8)
    p.add_argument("--sentences-max", type=int, default=16)
    p.add_argument("--signal-strength", type=float, default=1.0)
    p.add_argument("--balance", type=float, default=0.5)
    p.add_argument("--template-tokens", type=int, default=0)
    p.add_argument("--seed", type=int)
    p.set_defaults(fn=_cmd_gen_synthetic)

    p = sub.add_parser("export-viz", help="export edge weights and similarity matrices")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--article-id")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_export_viz)

    p = sub.add_parser("gradcheck", help="run all registered gradient checks")
    p.set_defaults(fn=_cmd_gradcheck)
    return parser


def main(argv=None) -> int:
    try:
        _setup_logging()
        args = build_parser().parse_args(argv)
        return args.fn(args)
    except (ValueError, KeyError, OSError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
