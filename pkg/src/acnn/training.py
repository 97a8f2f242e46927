"""Cross-entropy loss, L2 on the width-1 layer, Adam, the minibatch training
loop with dev-F early stopping, and a randomized hyperparameter search."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import evaluate
from .data import DISFLUENT, FLUENT, TokenSequence, Vocabulary
from .layers import softmax_xent_backward
from .model import CLASS_DISFLUENT, LayerConfig, Model, ModelConfig, ParamStore
from .tensor import NumericError, Rng


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 25
    learning_rate: float = 0.001
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    max_epochs: int = 30
    patience: int = 5  # epochs without dev-F improvement before stopping
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        for b in (self.adam_beta1, self.adam_beta2):
            if not 0.0 <= b < 1.0:
                raise ValueError("Adam betas must be in [0, 1)")


def _label_ids(labels) -> np.ndarray:
    out = np.empty(len(labels), dtype=np.int64)
    for i, lab in enumerate(labels):
        if lab in (FLUENT, 0):
            out[i] = 0
        elif lab in (DISFLUENT, 1):
            out[i] = 1
        else:
            raise ValueError(f"unknown label {lab!r}")
    return out


def cross_entropy(probs: np.ndarray, labels, normalizer: int | None = None):
    """Mean negative log-likelihood over tokens, with the fused gradient
    w.r.t. pre-softmax scores: (softmax - onehot) / normalizer."""
    ids = _label_ids(labels)
    if probs.shape != (len(ids), 2):
        raise ValueError(f"probs shape {probs.shape} vs {len(ids)} labels")
    n = normalizer if normalizer is not None else len(ids)
    picked = np.maximum(probs[np.arange(len(ids)), ids], 1e-300)
    loss = float(-np.log(picked).sum() / n)
    return loss, softmax_xent_backward(probs, ids, n)


def l2_penalty(params: ParamStore, weight: float) -> float:
    """Penalty on the width-1 layer weights only (bias excluded)."""
    W = params["output.W"].value
    return float(weight * (W * W).sum())


def add_l2_grad(params: ParamStore, weight: float) -> None:
    params["output.W"].grad += 2.0 * weight * params["output.W"].value


def adam_step(params: ParamStore, t: int, cfg: TrainConfig) -> None:
    """Standard Adam with bias-corrected moments; t is 1-based."""
    if t < 1:
        raise ValueError("Adam step index must be >= 1")
    b1, b2 = cfg.adam_beta1, cfg.adam_beta2
    for _, p in params.items():
        p.adam_m *= b1
        p.adam_m += (1.0 - b1) * p.grad
        p.adam_v *= b2
        p.adam_v += (1.0 - b2) * p.grad * p.grad
        m_hat = p.adam_m / (1.0 - b1 ** t)
        v_hat = p.adam_v / (1.0 - b2 ** t)
        p.value -= cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)


def batch_loss_and_grads(model: Model, batch, training: bool = False,
                         rng: Rng | None = None) -> float:
    """Token-averaged loss over a batch of (ids, labels) pairs plus the L2
    penalty; gradients are accumulated into the model's parameter store."""
    model.params.zero_grads()
    total_tokens = sum(len(ids) for ids, _ in batch)
    loss = 0.0
    for ids, labels in batch:
        probs, cache = model.forward_with_cache(ids, training=training, rng=rng)
        part, dscores = cross_entropy(probs, labels, normalizer=total_tokens)
        loss += part
        model.backward(cache, dscores)
    loss += l2_penalty(model.params, model.config.l2_weight)
    add_l2_grad(model.params, model.config.l2_weight)
    if not math.isfinite(loss):
        raise NumericError("non-finite training loss")
    return loss


def predict_masks(model: Model, seqs: list[TokenSequence],
                  vocab: Vocabulary) -> list[np.ndarray]:
    masks = []
    for seq in seqs:
        probs = model.forward(vocab.encode(seq.tokens), training=False)
        masks.append(probs.argmax(axis=1) == CLASS_DISFLUENT)
    return masks


@dataclass(frozen=True)
class EpochLog:
    epoch: int
    train_loss: float
    dev_precision: float | None
    dev_recall: float | None
    dev_f1: float | None
    best: bool

    def format(self) -> str:
        def fmt(v):
            return "absent" if v is None else f"{100 * v:.2f}"
        star = " *" if self.best else ""
        return (f"epoch {self.epoch:3d}  loss {self.train_loss:.4f}  "
                f"dev P {fmt(self.dev_precision)} R {fmt(self.dev_recall)} "
                f"F {fmt(self.dev_f1)}{star}")


@dataclass
class TrainResult:
    best_values: dict[str, np.ndarray]
    best_f1: float
    best_epoch: int
    steps: int
    log: list[EpochLog] = field(default_factory=list)


def train(model: Model, train_seqs: list[TokenSequence],
          dev_seqs: list[TokenSequence], vocab: Vocabulary,
          cfg: TrainConfig) -> TrainResult:
    """Seeded-shuffle minibatch training with Adam and patience-based early
    stopping on dev F-score. Deterministic for a fixed seed and data."""
    if not train_seqs or not dev_seqs:
        raise ValueError("training and dev corpora must be non-empty")
    if not any(DISFLUENT in seq.labels for seq in dev_seqs):
        raise ValueError(
            "dev set has no disfluent tokens, so F-score is undefined; "
            "add disfluent examples to the dev corpus")
    data = [(vocab.encode(seq.tokens), _label_ids(seq.labels))
            for seq in train_seqs if seq.tokens]
    rng = Rng(cfg.seed)
    shuffle_rng = rng.spawn(1)
    dropout_rng = rng.spawn(2)
    best_values = model.params.values_copy()
    best_f1 = -1.0
    best_epoch = 0
    without_improvement = 0
    t = 0
    log: list[EpochLog] = []
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(len(data))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = [data[i] for i in order[start:start + cfg.batch_size]]
            loss = batch_loss_and_grads(model, batch, training=True, rng=dropout_rng)
            t += 1
            adam_step(model.params, t, cfg)
            losses.append(loss)
        report = evaluate.score(dev_seqs, predict_masks(model, dev_seqs, vocab))
        f1 = report.f1 if report.f1 is not None else 0.0
        improved = f1 > best_f1
        if improved:
            best_f1 = f1
            best_epoch = epoch
            best_values = model.params.values_copy()
            without_improvement = 0
        else:
            without_improvement += 1
        log.append(EpochLog(epoch=epoch, train_loss=float(np.mean(losses)),
                            dev_precision=report.precision,
                            dev_recall=report.recall, dev_f1=report.f1,
                            best=improved))
        if without_improvement >= cfg.patience:
            break
    return TrainResult(best_values=best_values, best_f1=best_f1,
                       best_epoch=best_epoch, steps=t, log=log)


# ---------------------------------------------------------------------------
# Randomized hyperparameter search
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SearchSpace:
    arch: str = "acnn"
    embedding_dims: tuple[int, ...] = (16, 32)
    channel_choices: tuple[int, ...] = (8, 16)
    dropout_range: tuple[float, float] = (0.1, 0.6)
    l2_range: tuple[float, float] = (0.0, 0.2)
    ell_range: tuple[int, int] = (0, 3)
    r_range: tuple[int, int] = (1, 6)
    learning_rates: tuple[float, ...] = (0.001, 0.003)

    def sample(self, rng: Rng, vocab_size: int, seed: int) -> tuple[ModelConfig, TrainConfig]:
        first = "autocorr" if self.arch == "acnn" else "conv"

        def group() -> tuple[int, int]:
            ell = int(rng.integers(self.ell_range[0], self.ell_range[1] + 1))
            r = int(rng.integers(self.r_range[0], self.r_range[1] + 1))
            return (ell, r)

        channels = rng.choice(self.channel_choices)
        mcfg = ModelConfig(
            arch=self.arch, vocab_size=vocab_size,
            embedding_dim=rng.choice(self.embedding_dims),
            dropout_rate=float(rng.uniform(*self.dropout_range)),
            l2_weight=float(rng.uniform(*self.l2_range)),
            layers=(LayerConfig(first, (group(),), channels),
                    LayerConfig("conv", (group(),), channels),
                    LayerConfig("conv", (group(),), channels)),
            seed=seed)
        tcfg = TrainConfig(learning_rate=rng.choice(self.learning_rates), seed=seed)
        return mcfg, tcfg


@dataclass(frozen=True)
class Trial:
    index: int
    seed: int
    model_config: ModelConfig
    train_config: TrainConfig
    dev_f1: float


def random_search(space: SearchSpace, budget: int, runner, vocab_size: int,
                  master_seed: int = 0) -> list[Trial]:
    """Sample `budget` configurations, train each via `runner(model_cfg,
    train_cfg) -> dev_f1`, and rank by dev F (descending). Reproducible from
    the master seed; each trial records its own derived seed."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = Rng(master_seed)
    trials = []
    for i in range(budget):
        trial_seed = int(rng.integers(0, 2 ** 31))
        mcfg, tcfg = space.sample(rng, vocab_size, trial_seed)
        dev_f1 = runner(mcfg, tcfg)
        trials.append(Trial(index=i, seed=trial_seed, model_config=mcfg,
                            train_config=tcfg, dev_f1=dev_f1))
    return sorted(trials, key=lambda tr: -tr.dev_f1)


def trial_table(trials: list[Trial]) -> str:
    header = "rank\ttrial\tseed\tarch\temb\tchannels\tdropout\tl2\tlr\tdev_f1"
    rows = [header]
    for rank, tr in enumerate(trials, start=1):
        m, t = tr.model_config, tr.train_config
        rows.append(f"{rank}\t{tr.index}\t{tr.seed}\t{m.arch}\t{m.embedding_dim}\t"
                    f"{m.layers[0].channels}\t{m.dropout_rate:.3f}\t{m.l2_weight:.3f}\t"
                    f"{t.learning_rate}\t{tr.dev_f1:.4f}")
    return "\n".join(rows)
