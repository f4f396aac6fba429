"""Command line entry points.

Exit codes: 0 success, 1 runtime failure, 2 bad input or usage.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    DEFAULT_EMB_DIM,
    FactExample,
    make_example,
    read_definition_records,
    read_fact_records,
    tokenize,
    write_jsonl,
)
from .errors import ChargePredError, ConfigError, DivergenceError, IngestionError
from .experiments import (
    Bundle,
    configure,
    evaluate,
    fit,
    load_bundle,
    prepare_files,
    save_bundle,
)
from .metrics import per_class_table, rows_to_csv
from .model import ABLATIONS, ModelConfig, forward, infer, predict, train
from .numeric import no_grad
from .synthetic import generate_synthetic_corpus

log = logging.getLogger("chargepred")


class UsageError(ChargePredError):
    pass


# ------------------------------------------------------------------ config

MODEL_FLAGS = {
    # flag: (config field, type)
    "--seed": ("seed", int),
    "--iterations": ("iterations", int),
    "--threshold": ("threshold", float),
    "--loss-variant": ("loss_variant", str),
    "--epochs": ("epochs", int),
    "--batch-size": ("batch_size", int),
    "--lr": ("lr", float),
    "--lr-halve-every": ("lr_halve_every", int),
    "--lr-halve-offset": ("lr_halve_offset", int),
    "--hidden": ("d_h", int),
    "--emb-dim": ("d_emb", int),
    "--window": ("window", int),
    "--min-count": ("min_count", int),
    "--max-fact-len": ("max_fact_len", int),
    "--max-def-len": ("max_def_len", int),
    "--clip-norm": ("clip_norm", float),
    "--top-k": ("top_k", int),
}

PATH_KEYS = ("train", "defs", "test", "embeddings", "out", "checkpoint")


def add_model_flags(p: argparse.ArgumentParser) -> None:
    for flag, (dest, typ) in MODEL_FLAGS.items():
        p.add_argument(flag, dest=dest, type=typ, default=None)
    p.add_argument("--ablation", default=None, help=f"one of: {', '.join(ABLATIONS)}")


def read_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise IngestionError(f"config file not found: {p}")
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: expected a JSON object")
    return data


def resolve(args: argparse.Namespace) -> tuple[ModelConfig, dict]:
    """Merge config file values with command-line flags (flags win)."""
    raw = read_config_file(getattr(args, "config", None))
    paths = {k: raw.pop(k) for k in PATH_KEYS if k in raw}
    ablation = raw.pop("ablation", None)
    for dest, _ in MODEL_FLAGS.values():
        value = getattr(args, dest, None)
        if value is not None:
            raw[dest] = value
    # built in one go so derived widths follow an overridden --hidden
    config = ModelConfig.from_dict(raw)
    ablation = getattr(args, "ablation", None) or ablation
    if ablation is not None:
        config = config.with_ablation(ablation)
    for key in PATH_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            paths[key] = value
    return config, paths


def require_path(paths: dict, key: str, must_exist: bool = True) -> Path:
    if not paths.get(key):
        raise UsageError(f"missing required --{key}")
    p = Path(paths[key])
    if must_exist and not p.exists():
        raise IngestionError(f"{key} file not found: {p}")
    return p


def dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands

def cmd_train(args) -> int:
    config, paths = resolve(args)
    train_path = require_path(paths, "train")
    defs_path = require_path(paths, "defs")
    emb_path = require_path(paths, "embeddings") if paths.get("embeddings") else None
    out = require_path(paths, "out", must_exist=False)
    corpus = prepare_files(train_path, defs_path, min_count=config.min_count, max_fact_len=config.max_fact_len,
                           max_def_len=config.max_def_len, embeddings_path=emb_path, seed=config.seed)
    d_emb = corpus.embeddings.shape[1] if corpus.embeddings is not None else config.d_emb
    config = configure(config, corpus, d_emb=d_emb)
    out.mkdir(parents=True, exist_ok=True)
    dump_json(out / "config.json", {"model": config.to_dict(), "paths": {k: str(v) for k, v in paths.items()},
                                    "seed": config.seed, "version": __version__})
    log_path = out / "metrics.jsonl"
    with open(log_path, "w", encoding="utf-8") as fh:
        def on_epoch(rec):
            fh.write(json.dumps({**rec, "seed": config.seed}, sort_keys=True) + "\n")
            fh.flush()
            log.info("epoch %d  loss %.4f  train-exact %.4f  lr %g", rec["epoch"], rec["loss"],
                     rec["train_exact_match"], rec["lr"])

        result = train(corpus.train, corpus.def_tokens, config, embeddings=corpus.embeddings, on_epoch=on_epoch)
    save_bundle(out / "checkpoint.ckpt", result.params, config, corpus)
    print(f"wrote {out / 'checkpoint.ckpt'} ({len(corpus.train)} examples, {corpus.n_classes} charges)")
    return 0


def load_examples(bundle: Bundle, path: Path, defs_path: Path | None = None):
    if defs_path is not None:
        names = [name for name, _ in read_definition_records(defs_path)]
        if names != bundle.class_names:
            raise IngestionError(f"{defs_path}: charge list does not match the checkpoint's label map")
    label_map = {name: i for i, name in enumerate(bundle.class_names)}
    records = read_fact_records(path)
    if not records:
        raise IngestionError(f"{path}: empty test file")
    examples = []
    for toks, acc in records:
        ex, _ = make_example(toks, acc, bundle.vocab, label_map, bundle.config.max_fact_len)
        if ex is not None:
            examples.append(ex)
    if not examples:
        raise IngestionError(f"{path}: no record carries a charge known to the checkpoint")
    return examples


def apply_runtime_flags(bundle: Bundle, args) -> None:
    if getattr(args, "threshold", None) is not None:
        bundle.config = replace(bundle.config, threshold=args.threshold).validate()


def cmd_eval(args) -> int:
    _, paths = resolve(args)
    bundle = load_bundle(require_path(paths, "checkpoint"))
    apply_runtime_flags(bundle, args)
    test_path = require_path(paths, "test")
    defs_path = require_path(paths, "defs") if paths.get("defs") else None
    examples = load_examples(bundle, test_path, defs_path)
    report = evaluate(examples, bundle.corpus(), bundle.params, bundle.config)
    out = require_path(paths, "out", must_exist=False)
    out.mkdir(parents=True, exist_ok=True)
    payload = report.to_dict()
    payload["seed"] = bundle.config.seed
    dump_json(out / "report.json", payload)
    (out / "report.txt").write_text(report.to_text(), encoding="utf-8")
    rows = per_class_table(report, bundle.train_support, float("inf"))
    (out / "per_class.csv").write_text(rows_to_csv(rows), encoding="utf-8")
    if args.few_shot_threshold is not None:
        few = per_class_table(report, bundle.train_support, args.few_shot_threshold)
        (out / "few_shot.csv").write_text(rows_to_csv(few), encoding="utf-8")
    print(report.to_text(), end="")
    return 0


def cmd_predict(args) -> int:
    _, paths = resolve(args)
    bundle = load_bundle(require_path(paths, "checkpoint"))
    apply_runtime_flags(bundle, args)
    if args.text is not None:
        texts = [tokenize(args.text)]
    elif args.input is not None:
        texts = [toks for toks, _ in read_fact_records(args.input)]
    else:
        raise UsageError("give --text or --input")
    examples = []
    for toks in texts:
        ids = bundle.vocab.encode(toks[: bundle.config.max_fact_len])
        if not ids:
            raise IngestionError("a fact tokenizes to nothing")
        examples.append(FactExample(tuple(ids), (0,) * bundle.config.n_classes))
    probs = infer(examples, bundle.def_tokens, bundle.params, bundle.config)
    preds = predict(probs, bundle.config.threshold)
    rows = [
        {"charges": [bundle.class_names[i] for i in np.nonzero(p)[0]],
         "scores": {n: float(s) for n, s in zip(bundle.class_names, o)}}
        for p, o in zip(preds, probs)
    ]
    if args.out:
        write_jsonl(args.out, rows)
    else:
        for row in rows:
            print(json.dumps(row, ensure_ascii=False, sort_keys=True))
    return 0


def cmd_ablate(args) -> int:
    config, paths = resolve(args)
    variants = args.variants or list(ABLATIONS)
    for v in variants:
        if v not in ABLATIONS:
            raise UsageError(f"unknown ablation variant {v!r}; choose from {', '.join(ABLATIONS)}")
    emb_path = require_path(paths, "embeddings") if paths.get("embeddings") else None
    corpus = prepare_files(require_path(paths, "train"), require_path(paths, "defs"), require_path(paths, "test"),
                           min_count=config.min_count, max_fact_len=config.max_fact_len,
                           max_def_len=config.max_def_len, embeddings_path=emb_path, seed=config.seed)
    if not corpus.test:
        raise IngestionError("test file has no usable records")
    d_emb = corpus.embeddings.shape[1] if corpus.embeddings is not None else config.d_emb
    support = corpus.train_support()
    rare = [i for i, s in enumerate(support) if s < args.rare_threshold]
    out = require_path(paths, "out", must_exist=False)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "ablation.csv"
    new_file = not table.exists()
    with open(table, "a", encoding="utf-8") as fh:
        if new_file:
            fh.write("variant,seed,acc,mp,mr,mf1,rare_mf1,n_rare\n")
        for v in variants:
            cfg = configure(config.with_ablation(v), corpus, d_emb=d_emb)
            result = fit(corpus, cfg)
            report = evaluate(corpus.test, corpus, result.params, cfg)
            rare_mf1 = float(np.mean([report.f1[i] for i in rare])) if rare else float("nan")
            line = (f"{v},{cfg.seed},{report.acc:.6f},{report.mp:.6f},{report.mr:.6f},{report.mf1:.6f},"
                    f"{rare_mf1:.6f},{len(rare)}")
            fh.write(line + "\n")
            fh.flush()
            print(f"{v:<10} Acc {report.acc:.4f}  MP {report.mp:.4f}  MR {report.mr:.4f}  "
                  f"MF1 {report.mf1:.4f}  rare-MF1 {rare_mf1:.4f}")
    return 0


SHADES = " .:-=+*#%@"


def shade(v: float) -> str:
    return SHADES[min(len(SHADES) - 1, int(v * (len(SHADES) - 1) + 0.5))]


def render_grid(rows: list[str], cols: list[str], weights: np.ndarray) -> str:
    """Text heatmap, one row per ``rows`` entry; glyph density scales with the grid maximum."""
    w = max((len(r) for r in rows), default=0)
    lines = [" " * (w + 2) + " ".join(f"{j:>2d}" for j in range(len(cols)))]
    top = float(weights.max()) if weights.size and weights.max() > 0 else 1.0
    for r, row in zip(rows, weights):
        lines.append(f"{r:<{w}}  " + " ".join(f" {shade(v / top)}" for v in row))
    lines.append("")
    lines.extend(f"{j:>2d}: {c}" for j, c in enumerate(cols))
    return "\n".join(lines) + "\n"


def render_svg(rows: list[str], cols: list[str], weights: np.ndarray, cell: int = 18) -> str:
    left, top = 10 + 8 * max((len(r) for r in rows), default=1), 10 + 8 * max((len(c) for c in cols), default=1)
    width, height = left + cell * len(cols) + 10, top + cell * len(rows) + 10
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-size="11">']
    for j, c in enumerate(cols):
        x = left + j * cell + cell // 2
        parts.append(f'<text transform="translate({x},{top - 4}) rotate(-90)">{_xml(c)}</text>')
    for i, (r, row) in enumerate(zip(rows, weights)):
        y = top + i * cell
        parts.append(f'<text x="4" y="{y + cell - 5}">{_xml(r)}</text>')
        for j, v in enumerate(row):
            level = int(255 * (1.0 - float(v)))
            parts.append(f'<rect x="{left + j * cell}" y="{y}" width="{cell}" height="{cell}" '
                         f'fill="rgb({level},{level},255)"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _xml(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def attention_dump(bundle: Bundle, tokens: list[str]) -> dict:
    """Charge attention per iteration and word attention for the top charge."""
    cfg = bundle.config
    if not cfg.needs_charge_attention and not cfg.use_fw:
        raise ConfigError("this checkpoint has no interaction layers to inspect")
    ids = bundle.vocab.encode(tokens[: cfg.max_fact_len])
    if not ids:
        raise IngestionError("fact tokenizes to nothing")
    example = FactExample(tuple(ids), (0,) * cfg.n_classes)
    with no_grad():
        trace = forward([example], bundle.def_tokens, bundle.params, cfg)
    names = bundle.class_names
    dump = {"seed": cfg.seed, "charges": names, "fact_tokens": bundle.vocab.decode(ids)}
    if trace.memory is not None:
        dump["sentence_attention"] = [
            {"iteration": t + 1, "weights": {n: float(w) for n, w in zip(names, g.data[0])}}
            for t, g in enumerate(trace.memory.attentions)
        ]
        top = int(np.argmax(trace.memory.final_attention.data[0]))
    else:
        top = int(np.argmax(trace.o.data[0]))
    dump["argmax_charge"] = names[top]
    if trace.alignment is not None and top in trace.alignment.charges:
        col = int(np.nonzero(trace.alignment.charges == top)[0][0])
        n = len(bundle.def_tokens[top])
        beta = trace.alignment.beta.data[0, col, :, :n]
        dump["definition_tokens"] = bundle.vocab.decode(bundle.def_tokens[top])
        dump["word_attention"] = beta.tolist()
    dump["probabilities"] = {n: float(p) for n, p in zip(names, trace.o.data[0])}
    return dump


def cmd_inspect(args) -> int:
    _, paths = resolve(args)
    bundle = load_bundle(require_path(paths, "checkpoint"))
    if args.text is not None:
        tokens = tokenize(args.text)
    elif args.input is not None:
        records = read_fact_records(args.input)
        if not 0 <= args.index < len(records):
            raise UsageError(f"--index {args.index} out of range (file has {len(records)} records)")
        tokens = records[args.index][0]
    else:
        raise UsageError("give --text or --input")
    if not tokens:
        raise IngestionError("fact tokenizes to nothing")
    dump = attention_dump(bundle, tokens)
    text = []
    if "sentence_attention" in dump:
        names = dump["charges"]
        g = np.array([[it["weights"][n] for n in names] for it in dump["sentence_attention"]])
        text.append("charge attention (rows: iterations)")
        text.append(render_grid([f"t{i + 1}" for i in range(len(g))], names, g))
    if "word_attention" in dump:
        text.append(f"word attention against {dump['argmax_charge']} (rows: fact tokens)")
        text.append(render_grid(dump["fact_tokens"], dump["definition_tokens"], np.array(dump["word_attention"])))
    rendered = "\n".join(text)
    out = Path(paths["out"]) if paths.get("out") else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        dump_json(out / "attention.json", dump)
        (out / "attention.txt").write_text(rendered, encoding="utf-8")
        if args.svg and "word_attention" in dump:
            (out / "word_attention.svg").write_text(
                render_svg(dump["fact_tokens"], dump["definition_tokens"], np.array(dump["word_attention"])),
                encoding="utf-8")
    print(rendered, end="")
    return 0


def parse_id_list(text: str | None) -> list[int]:
    if not text:
        return []
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated class ids, got {text!r}") from None


def cmd_gen_synthetic(args) -> int:
    try:
        corpus = generate_synthetic_corpus(
            args.classes, args.per_class, parse_id_list(args.rare), args.seed,
            rare_count=args.rare_count, n_test_per_class=args.test_per_class, p_multi=args.p_multi,
        )
    except ConfigError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_jsonl(out / "train.jsonl", corpus.train)
    write_jsonl(out / "test.jsonl", corpus.test)
    write_jsonl(out / "definitions.jsonl", corpus.definitions)
    dump_json(out / "manifest.json", corpus.manifest())
    if args.emb_dim:
        vectors = corpus.embeddings(args.emb_dim)
        with open(out / "embeddings.txt", "w", encoding="utf-8", newline="\n") as fh:
            for word in sorted(vectors):
                fh.write(word + " " + " ".join(repr(float(v)) for v in vectors[word]) + "\n")
    print(f"wrote synthetic corpus to {out} ({len(corpus.train)} train / {len(corpus.test)} test)")
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chargepred", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write a checkpoint")
    p.add_argument("--config")
    p.add_argument("--train")
    p.add_argument("--defs")
    p.add_argument("--embeddings")
    p.add_argument("--out")
    add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a labelled file")
    p.add_argument("--config")
    p.add_argument("--checkpoint")
    p.add_argument("--test")
    p.add_argument("--defs", help="definitions file to check against the checkpoint's label map")
    p.add_argument("--out")
    p.add_argument("--threshold", type=float)
    p.add_argument("--few-shot-threshold", type=float, default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="predict charges for raw facts")
    p.add_argument("--config")
    p.add_argument("--checkpoint")
    p.add_argument("--input")
    p.add_argument("--text")
    p.add_argument("--out")
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ablate", help="train and evaluate ablation variants")
    p.add_argument("--config")
    p.add_argument("--train")
    p.add_argument("--defs")
    p.add_argument("--test")
    p.add_argument("--embeddings")
    p.add_argument("--out")
    p.add_argument("--variant", dest="variants", action="append", help="repeatable; default: all")
    p.add_argument("--rare-threshold", type=float, default=100.0)
    add_model_flags(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("inspect", help="dump sentence- and word-level attention for one fact")
    p.add_argument("--config")
    p.add_argument("--checkpoint")
    p.add_argument("--text")
    p.add_argument("--input")
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--svg", action="store_true")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("gen-synthetic", help="write a synthetic corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=5)
    p.add_argument("--per-class", type=int, default=40)
    p.add_argument("--rare", help="comma-separated class ids with few training samples")
    p.add_argument("--rare-count", type=int, default=8)
    p.add_argument("--test-per-class", type=int, default=20)
    p.add_argument("--p-multi", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--emb-dim", type=int, default=DEFAULT_EMB_DIM, help="0 to skip embeddings.txt")
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, IngestionError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except DivergenceError as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return 1
    except (ChargePredError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
