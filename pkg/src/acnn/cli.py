"""Command-line entry point: corpus synthesis, training, tagging, evaluation,
gradient checking, and the CNN-vs-ACNN benchmark.

Every command writes a RunManifest (JSON, atomic) next to its primary output
so a run can be reproduced bit-for-bit in 64-bit single-threaded mode.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import bench, data, evaluate, training
from .model import (Checkpoint, LayerConfig, Model, ModelConfig, CheckpointError,
                    ConfigError, load_checkpoint, model_preset, param_count,
                    save_checkpoint)
from .tensor import GradCheckReport, NumericError, Rng, grad_check

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

DATA_DIR_ENV = "ACNN_DATA_DIR"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        raise UsageError(message)


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: dict[str, str] = field(default_factory=dict)
    outputs: dict[str, str] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)
    rng_algorithm: str = Rng.ALGORITHM


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(manifest: RunManifest, primary_output) -> Path:
    path = Path(str(primary_output) + ".manifest.json")
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(dataclasses.asdict(manifest), indent=2, sort_keys=True) + "\n",
                   encoding="utf-8")
    os.replace(tmp, path)
    return path


def _resolve(path: str) -> Path:
    p = Path(path)
    if not p.is_absolute() and DATA_DIR_ENV in os.environ and not p.exists():
        candidate = Path(os.environ[DATA_DIR_ENV]) / p
        if candidate.exists():
            return candidate
    return p


def _read_corpus_checked(path, fmt: str) -> list[data.TokenSequence]:
    p = _resolve(path)
    if not p.exists():
        raise FileNotFoundError(f"corpus file not found: {p}")
    return data.read_corpus(p, fmt)


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------

DEFAULT_SPLITS = {"switchboard-like": (3000, 500, 500),
                  "rough-copy-hard": (2000, 500, 500),
                  "toy": (200, 50, 50)}


def cmd_synth(args) -> int:
    if args.preset not in data.GENERATOR_PRESETS:
        raise UsageError(f"unknown generator preset {args.preset!r}; "
                         f"choose from {sorted(data.GENERATOR_PRESETS)}")
    cfg = data.GENERATOR_PRESETS[args.preset]
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    counts = dict(zip(("train", "dev", "test"), DEFAULT_SPLITS[args.preset]))
    for split in counts:
        override = getattr(args, f"{split}_count")
        if override is not None:
            counts[split] = override
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    master = Rng(cfg.seed)
    outputs = {}
    for i, (split, count) in enumerate(counts.items()):
        split_cfg = replace(cfg, seed=master.spawn(i).seed, sentence_count=count)
        seqs = data.generate_corpus(split_cfg)
        path = out_dir / f"{split}.bt"
        data.write_corpus(seqs, path, "bracket-text")
        outputs[str(path)] = _sha256(path)
        print(f"wrote {path} ({count} sentences)")
    manifest = RunManifest(
        command="synth",
        config={"preset": args.preset, "generator": dataclasses.asdict(cfg),
                "counts": counts},
        seed=cfg.seed, outputs=outputs,
        timings={"total_sec": time.time() - t0})
    write_manifest(manifest, out_dir / "corpus")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def _model_config_from_args(args, vocab_size: int) -> ModelConfig:
    preset = args.preset or f"{args.arch}-toy"
    cfg = model_preset(preset, vocab_size=vocab_size, seed=args.seed)
    if cfg.arch != args.arch:
        raise UsageError(f"preset {preset!r} is a {cfg.arch} config, but "
                         f"--arch {args.arch} was given")
    if args.embedding_dim is not None:
        cfg = replace(cfg, embedding_dim=args.embedding_dim)
    if args.dropout is not None:
        cfg = replace(cfg, dropout_rate=args.dropout)
    if args.l2 is not None:
        cfg = replace(cfg, l2_weight=args.l2)
    if args.channels is not None:
        cfg = replace(cfg, layers=tuple(
            LayerConfig(lc.kind, lc.kernel_groups, args.channels)
            for lc in cfg.layers))
    return cfg


def _train_config_from_args(args) -> training.TrainConfig:
    cfg = training.TrainConfig(seed=args.seed)
    for attr, flag in (("batch_size", "batch_size"), ("learning_rate", "lr"),
                       ("max_epochs", "max_epochs"), ("patience", "patience")):
        v = getattr(args, flag)
        if v is not None:
            cfg = replace(cfg, **{attr: v})
    return cfg


def cmd_train(args) -> int:
    t0 = time.time()
    train_raw = _read_corpus_checked(args.train, args.format)
    dev_raw = _read_corpus_checked(args.dev, args.format)
    train_seqs = [s for s in (data.preprocess(q) for q in train_raw) if s.tokens]
    dev_seqs = [s for s in (data.preprocess(q) for q in dev_raw) if s.tokens]
    vocab = data.build_vocab(train_seqs, min_freq=args.min_freq)
    mcfg = _model_config_from_args(args, len(vocab))
    tcfg = _train_config_from_args(args)
    model = Model.build(mcfg, Rng(args.seed))
    result = training.train(model, train_seqs, dev_seqs, vocab, tcfg)
    model.params.load_values(result.best_values)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ckpt = Checkpoint(config=mcfg, vocab_words=vocab.words,
                      rng_algorithm=Rng.ALGORITHM, seed=args.seed,
                      step=result.steps, tensors=model.params.values_copy())
    save_checkpoint(ckpt, out)
    log_path = Path(args.log) if args.log else out.with_suffix(".log")
    log_path.write_text("\n".join(line.format() for line in result.log) + "\n",
                        encoding="utf-8")
    last = result.log[-1]
    best = next(l for l in result.log if l.epoch == result.best_epoch)

    def fmt(v):
        return "absent" if v is None else f"{100 * v:.2f}"
    print(f"best epoch {result.best_epoch}: dev P {fmt(best.dev_precision)} "
          f"R {fmt(best.dev_recall)} F {fmt(best.dev_f1)}")
    print(param_count(model.params).format())
    manifest = RunManifest(
        command="train",
        config={"model": mcfg.to_dict(), "train": dataclasses.asdict(tcfg),
                "preset": args.preset or f"{args.arch}-toy",
                "min_freq": args.min_freq, "format": args.format},
        seed=args.seed,
        inputs={str(_resolve(args.train)): _sha256(_resolve(args.train)),
                str(_resolve(args.dev)): _sha256(_resolve(args.dev))},
        outputs={str(out): _sha256(out), str(log_path): _sha256(log_path)},
        timings={"total_sec": time.time() - t0,
                 "epochs": float(last.epoch)})
    write_manifest(manifest, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# tag
# ---------------------------------------------------------------------------

def cmd_tag(args) -> int:
    t0 = time.time()
    ckpt_path = _resolve(args.checkpoint)
    if not ckpt_path.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt_path}")
    ckpt = load_checkpoint(ckpt_path)
    model = ckpt.build_model()
    vocab = data.Vocabulary(words=ckpt.vocab_words)
    seqs = [s for s in (data.preprocess(q)
                        for q in _read_corpus_checked(args.input, args.format))
            if s.tokens]
    masks = training.predict_masks(model, seqs, vocab)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tagged = [data.TokenSequence(
        tokens=s.tokens,
        labels=[data.DISFLUENT if m else data.FLUENT for m in mask])
        for s, mask in zip(seqs, masks)]
    data.write_corpus(tagged, out, "tabular")
    manifest = RunManifest(
        command="tag", config={"format": args.format}, seed=ckpt.seed,
        inputs={str(ckpt_path): _sha256(ckpt_path),
                str(_resolve(args.input)): _sha256(_resolve(args.input))},
        outputs={str(out): _sha256(out)},
        timings={"total_sec": time.time() - t0})
    write_manifest(manifest, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval
# ---------------------------------------------------------------------------

def cmd_eval(args) -> int:
    t0 = time.time()
    gold = _read_corpus_checked(args.gold, args.gold_format)
    predicted = _read_corpus_checked(args.predicted, "tabular")
    if args.preprocess:
        gold = [s for s in (data.preprocess(q) for q in gold) if s.tokens]
    masks = [seq.disfluent_mask() for seq in predicted]
    for g, pseq in zip(gold, predicted):
        if g.tokens != pseq.tokens:
            raise evaluate.AlignmentError(
                "gold and predicted tokenizations differ; re-tag from the same "
                "preprocessed input")
    report = evaluate.score(gold, masks)
    print(report.format())
    print(report.as_tsv())
    if any(seq.spans for seq in gold):
        for kind, kr in sorted(evaluate.score_by_kind(gold, masks).items()):
            f = "absent" if kr.f1 is None else f"{100 * kr.f1:.2f}"
            print(f"kind:{kind}\tF={f}")
    if args.errors:
        listing = evaluate.error_listing(report, args.errors)
        if listing:
            print(listing)
    if args.out:
        out = Path(args.out)
        out.write_text(report.as_tsv() + "\n", encoding="utf-8")
        manifest = RunManifest(
            command="eval", config={"gold_format": args.gold_format},
            seed=0,
            inputs={str(_resolve(args.gold)): _sha256(_resolve(args.gold)),
                    str(_resolve(args.predicted)): _sha256(_resolve(args.predicted))},
            outputs={str(out): _sha256(out)},
            timings={"total_sec": time.time() - t0})
        write_manifest(manifest, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def gradcheck_model(arch: str, seed: int = 0, vocab_size: int = 16,
                    embedding_dim: int = 5, channels: int = 4,
                    eps: float = 1e-5, tol: float = 1e-4,
                    ) -> list[tuple[str, GradCheckReport]]:
    """Finite-difference check of every parameter tensor of a small 3-layer
    model, on a batch containing both a 6-token and a 1-token sentence. The
    layer geometry includes an ell=0 group."""
    first = "autocorr" if arch == "acnn" else "conv"
    cfg = ModelConfig(
        arch=arch, vocab_size=vocab_size, embedding_dim=embedding_dim,
        dropout_rate=0.0, l2_weight=0.05, seed=seed,
        layers=(LayerConfig(first, ((1, 2), (2, 1)), channels),
                LayerConfig("conv", ((1, 1),), channels),
                LayerConfig("conv", ((0, 1),), channels)))
    model = Model.build(cfg, Rng(seed))
    rng = Rng(seed + 1)
    batch = []
    for n in (6, 1):
        ids = rng.integers(2, vocab_size, size=n)
        labels = rng.integers(0, 2, size=n)
        batch.append((np.asarray(ids), np.asarray(labels)))

    def loss_fn(_=None) -> float:
        return training.batch_loss_and_grads(model, batch, training=False)

    loss_fn()
    analytic = {name: p.grad.copy() for name, p in model.params.items()}
    results = []
    for name, p in model.params.items():
        report = grad_check(loss_fn, p.value, analytic[name], eps=eps, tol=tol)
        results.append((name, report))
    return results


def cmd_gradcheck(args) -> int:
    results = gradcheck_model(args.arch, seed=args.seed,
                              vocab_size=args.vocab_size,
                              embedding_dim=args.embedding_dim,
                              channels=args.channels, tol=args.tol)
    print(f"{'tensor':<24}{'coords':>8}  {'max_rel_err':>12}  status")
    ok = True
    for name, report in results:
        status = "pass" if report.ok else "FAIL"
        ok = ok and report.ok
        print(f"{name:<24}{report.checked:>8}  {report.max_rel_error:>12.3e}  {status}")
    if not ok:
        raise NumericError("gradient check failed")
    return EXIT_OK


# ---------------------------------------------------------------------------
# ab-bench
# ---------------------------------------------------------------------------

def cmd_ab_bench(args) -> int:
    t0 = time.time()
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    if len(seeds) < 3:
        raise UsageError("ab-bench needs at least 3 comma-separated seeds "
                         "(e.g. --seeds 11,12,13)")
    tcfg = training.TrainConfig(learning_rate=args.lr, max_epochs=args.max_epochs, patience=args.patience)

    def progress(arm):
        print(f"seed {arm.seed} {arm.arch}: dev F {100 * arm.dev_f1:.2f} "
              f"(best epoch {arm.best_epoch})")

    result = bench.ab_bench(preset=args.preset, seeds=seeds,
                            train_count=args.train_count,
                            dev_count=args.dev_count, train_cfg=tcfg,
                            progress=progress)
    table = result.format_table()
    print(table)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(table + "\n", encoding="utf-8")
    manifest = RunManifest(
        command="ab-bench",
        config={"preset": args.preset, "seeds": seeds,
                "train_count": args.train_count, "dev_count": args.dev_count,
                "train": dataclasses.asdict(tcfg)},
        seed=seeds[0], outputs={str(out): _sha256(out)},
        timings={"total_sec": time.time() - t0})
    write_manifest(manifest, out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser / entry point
# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="acnn", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--preset", default="switchboard-like")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--train-count", type=int, default=None)
    p.add_argument("--dev-count", type=int, default=None)
    p.add_argument("--test-count", type=int, default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--arch", choices=("cnn", "acnn"), required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--log", default=None)
    p.add_argument("--preset", default=None)
    p.add_argument("--format", choices=("bracket-text", "tabular"),
                   default="bracket-text")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--min-freq", type=int, default=1)
    p.add_argument("--embedding-dim", type=int, default=None)
    p.add_argument("--channels", type=int, default=None)
    p.add_argument("--dropout", type=float, default=None)
    p.add_argument("--l2", type=float, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("tag", help="label a file with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=("bracket-text", "tabular"),
                   default="bracket-text")
    p.set_defaults(func=cmd_tag)

    p = sub.add_parser("eval", help="score predictions against gold labels")
    p.add_argument("--gold", required=True)
    p.add_argument("--predicted", required=True)
    p.add_argument("--gold-format", choices=("bracket-text", "tabular"),
                   default="bracket-text")
    p.add_argument("--preprocess", action="store_true",
                   help="preprocess the gold corpus before aligning")
    p.add_argument("--errors", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of a toy model")
    p.add_argument("--arch", choices=("cnn", "acnn"), default="acnn")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--vocab-size", type=int, default=16)
    p.add_argument("--embedding-dim", type=int, default=5)
    p.add_argument("--channels", type=int, default=4)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("ab-bench", help="CNN vs ACNN benchmark on synthetic data")
    p.add_argument("--preset", default="rough-copy-hard")
    p.add_argument("--seeds", default="11,12,13")
    p.add_argument("--train-count", type=int, default=2000)
    p.add_argument("--dev-count", type=int, default=500)
    p.add_argument("--max-epochs", type=int, default=25)
    p.add_argument("--patience", type=int, default=6)
    p.add_argument("--lr", type=float, default=0.002)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ab_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error:usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (FileNotFoundError, data.CorpusFormatError, evaluate.AlignmentError,
            CheckpointError, ConfigError, ValueError) as exc:
        print(f"error:data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"error:numeric: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
