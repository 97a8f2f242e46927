"""Network assembly: declarative configs, parameter store, sentence-level
forward/backward, parameter counting, and checkpoint serialization.

Architecture (fixed skeleton): embedding lookup -> dropout (training only) ->
three operator layers (layer 1 is auto-correlational in the acnn arch,
convolutional otherwise; layers 2-3 always convolutional) each followed by
ReLU -> width-1 convolution -> row softmax over {fluent, disfluent}.

Each operator layer owns one or more kernel-size groups. Every group emits
channels/len(groups) output columns and the group outputs are stacked
column-wise, so `channels` is the layer's total output width. Inside the
auto-correlation operator the A-kernel and B-kernel terms are added
element-wise.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from . import layers as L
from .tensor import Rng

CLASS_FLUENT = 0
CLASS_DISFLUENT = 1
NUM_CLASSES = 2


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LayerConfig:
    kind: str  # "conv" | "autocorr"
    kernel_groups: tuple[tuple[int, int], ...]  # (ell, r) per group
    channels: int  # total output width, split evenly across groups

    def __post_init__(self):
        if self.kind not in ("conv", "autocorr"):
            raise ConfigError(f"unknown layer kind {self.kind!r}")
        if not self.kernel_groups:
            raise ConfigError("layer needs at least one kernel group")
        if self.channels <= 0:
            raise ConfigError("channels must be positive")
        if self.channels % len(self.kernel_groups) != 0:
            raise ConfigError(
                f"channels {self.channels} not divisible by "
                f"{len(self.kernel_groups)} kernel groups")
        for ell, r in self.kernel_groups:
            L.ConvKernelSpec(ell, r)  # validates ell >= 0, r >= 1

    @property
    def group_channels(self) -> int:
        return self.channels // len(self.kernel_groups)


@dataclass(frozen=True)
class ModelConfig:
    arch: str  # "cnn" | "acnn"
    vocab_size: int
    embedding_dim: int
    dropout_rate: float
    l2_weight: float
    layers: tuple[LayerConfig, ...]
    seed: int = 0

    def __post_init__(self):
        if self.arch not in ("cnn", "acnn"):
            raise ConfigError(f"unknown arch {self.arch!r}")
        if self.vocab_size < 2 or self.embedding_dim < 1:
            raise ConfigError("vocab_size >= 2 and embedding_dim >= 1 required")
        if not self.layers:
            raise ConfigError("at least one operator layer required")
        if self.arch == "acnn":
            if self.layers[0].kind != "autocorr":
                raise ConfigError("acnn arch requires an autocorr first layer")
        else:
            if any(lc.kind != "conv" for lc in self.layers):
                raise ConfigError("cnn arch must be all-conv")
        if any(lc.kind == "autocorr" for lc in self.layers[1:]):
            raise ConfigError("autocorr is only supported at layer 1")

    def to_dict(self) -> dict:
        return {
            "arch": self.arch,
            "vocab_size": self.vocab_size,
            "embedding_dim": self.embedding_dim,
            "dropout_rate": self.dropout_rate,
            "l2_weight": self.l2_weight,
            "layers": [
                {"kind": lc.kind,
                 "kernel_groups": [list(g) for g in lc.kernel_groups],
                 "channels": lc.channels}
                for lc in self.layers
            ],
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "ModelConfig":
        return ModelConfig(
            arch=d["arch"],
            vocab_size=d["vocab_size"],
            embedding_dim=d["embedding_dim"],
            dropout_rate=d["dropout_rate"],
            l2_weight=d["l2_weight"],
            layers=tuple(
                LayerConfig(kind=lc["kind"],
                            kernel_groups=tuple(tuple(g) for g in lc["kernel_groups"]),
                            channels=lc["channels"])
                for lc in d["layers"]
            ),
            seed=d["seed"],
        )


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray

    @staticmethod
    def of(value: np.ndarray) -> "Param":
        return Param(value=value,
                     grad=np.zeros_like(value),
                     adam_m=np.zeros_like(value),
                     adam_v=np.zeros_like(value))


class ParamStore:
    """Named parameters with paired gradient and Adam moment buffers.
    Iteration order is insertion order and therefore deterministic."""

    def __init__(self):
        self._params: dict[str, Param] = {}

    def add(self, name: str, value: np.ndarray) -> None:
        if name in self._params:
            raise ConfigError(f"duplicate parameter name {name!r}")
        self._params[name] = Param.of(value)

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def names(self) -> list[str]:
        return list(self._params)

    def items(self):
        return self._params.items()

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad[...] = 0.0

    def values_copy(self) -> dict[str, np.ndarray]:
        return {k: p.value.copy() for k, p in self._params.items()}

    def load_values(self, values: dict[str, np.ndarray]) -> None:
        if set(values) != set(self._params):
            raise ConfigError("parameter name mismatch while loading values")
        for k, v in values.items():
            if v.shape != self._params[k].value.shape:
                raise ConfigError(f"shape mismatch for parameter {k!r}")
            self._params[k].value[...] = v


def _uniform_init(rng: Rng, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, shape)


@dataclass
class _SentenceCache:
    ids: np.ndarray
    dropout_mask: np.ndarray | None
    x0: np.ndarray                       # post-dropout embeddings
    layer_inputs: list[np.ndarray]       # input to each operator layer
    pre_activations: list[np.ndarray]    # Y_k before ReLU
    group_caches: list[list]             # per layer, per group forward caches
    final_features: np.ndarray           # input to the width-1 layer
    scores: np.ndarray
    probs: np.ndarray


class Model:
    """A built network: config plus parameter store."""

    def __init__(self, config: ModelConfig, params: ParamStore):
        self.config = config
        self.params = params

    @staticmethod
    def build(config: ModelConfig, rng: Rng | None = None) -> "Model":
        """Allocate and initialize all parameters. Weights are drawn from
        U(-b, b) with b = sqrt(6 / (fan_in + fan_out)) per tensor; biases start
        at 1."""
        if rng is None:
            rng = Rng(config.seed)
        dt = T.DTYPE
        params = ParamStore()
        params.add("embedding", _uniform_init(
            rng, (config.vocab_size, config.embedding_dim),
            config.vocab_size, config.embedding_dim))
        in_dim = config.embedding_dim
        for k, lc in enumerate(config.layers, start=1):
            gc = lc.group_channels
            for g, (ell, r) in enumerate(lc.kernel_groups):
                w = ell + r + 1
                prefix = f"layer{k}.group{g}"
                params.add(f"{prefix}.A", _uniform_init(rng, (gc, w, in_dim), w * in_dim, gc))
                if lc.kind == "autocorr":
                    params.add(f"{prefix}.B", _uniform_init(
                        rng, (gc, w, w, in_dim), w * w * in_dim, gc))
                params.add(f"{prefix}.b", np.ones(gc, dtype=dt))
            in_dim = lc.channels
        params.add("output.W", _uniform_init(rng, (NUM_CLASSES, in_dim), in_dim, NUM_CLASSES))
        params.add("output.b", np.ones(NUM_CLASSES, dtype=dt))
        return Model(config, params)

    def forward(self, token_ids, training: bool = False,
                rng: Rng | None = None) -> np.ndarray:
        """Class probabilities, one row per input token."""
        probs, _ = self.forward_with_cache(token_ids, training=training, rng=rng)
        return probs

    def forward_with_cache(self, token_ids, training: bool = False,
                           rng: Rng | None = None) -> tuple[np.ndarray, _SentenceCache]:
        ids = np.asarray(token_ids, dtype=np.int64)
        if ids.ndim != 1 or len(ids) == 0:
            raise ValueError("token_ids must be a non-empty 1-d sequence")
        if ids.min() < 0 or ids.max() >= self.config.vocab_size:
            raise ValueError("token id out of vocabulary range")
        emb = self.params["embedding"].value[ids]
        x0, mask = L.dropout(emb, self.config.dropout_rate, rng, training)
        x = x0
        layer_inputs = []
        pre_acts = []
        group_caches = []
        for k, lc in enumerate(self.config.layers, start=1):
            layer_inputs.append(x)
            cols = []
            caches = []
            for g, (ell, r) in enumerate(lc.kernel_groups):
                spec = L.ConvKernelSpec(ell, r)
                prefix = f"layer{k}.group{g}"
                A = self.params[f"{prefix}.A"].value
                b = self.params[f"{prefix}.b"].value
                if lc.kind == "autocorr":
                    B = self.params[f"{prefix}.B"].value
                    out, cache = L.autocorr_forward(x, spec, A, B, b)
                else:
                    out, cache = L.conv1d_forward(x, spec, A, b)
                cols.append(out)
                caches.append(cache)
            y = cols[0] if len(cols) == 1 else np.concatenate(cols, axis=1)
            pre_acts.append(y)
            group_caches.append(caches)
            x = L.relu(y)
        scores = L.width1_forward(x, self.params["output.W"].value,
                                  self.params["output.b"].value)
        probs = L.softmax_rows(scores)
        T.ensure_finite(probs, "forward output")
        return probs, _SentenceCache(
            ids=ids, dropout_mask=mask, x0=x0, layer_inputs=layer_inputs,
            pre_activations=pre_acts, group_caches=group_caches,
            final_features=x, scores=scores, probs=probs)

    def backward(self, cache: _SentenceCache, dscores: np.ndarray) -> None:
        """Accumulate parameter gradients for one sentence into the store."""
        dx, dW, db = L.width1_backward(cache.final_features,
                                       self.params["output.W"].value, dscores)
        self.params["output.W"].grad += dW
        self.params["output.b"].grad += db
        for k in range(len(self.config.layers), 0, -1):
            lc = self.config.layers[k - 1]
            dy = L.relu_backward(cache.pre_activations[k - 1], dx)
            gc = lc.group_channels
            dx_next = np.zeros_like(cache.layer_inputs[k - 1])
            for g in range(len(lc.kernel_groups)):
                upstream = dy[:, g * gc : (g + 1) * gc]
                prefix = f"layer{k}.group{g}"
                A = self.params[f"{prefix}.A"].value
                gcache = cache.group_caches[k - 1][g]
                if lc.kind == "autocorr":
                    B = self.params[f"{prefix}.B"].value
                    dxg, dA, dB, dbg = L.autocorr_backward(gcache, A, B, upstream)
                    self.params[f"{prefix}.B"].grad += dB
                else:
                    dxg, dA, dbg = L.conv1d_backward(gcache, A, upstream)
                self.params[f"{prefix}.A"].grad += dA
                self.params[f"{prefix}.b"].grad += dbg
                dx_next += dxg
            dx = dx_next
        if cache.dropout_mask is not None:
            dx = dx * cache.dropout_mask
        np.add.at(self.params["embedding"].grad, cache.ids, dx)


@dataclass(frozen=True)
class ParamCountReport:
    entries: tuple[tuple[str, tuple[int, ...], int], ...]
    embedding: int
    network: int

    @property
    def total(self) -> int:
        return self.embedding + self.network

    def format(self) -> str:
        lines = [f"{'tensor':<24}{'shape':<20}{'count':>12}"]
        for name, shape, count in self.entries:
            lines.append(f"{name:<24}{str(shape):<20}{count:>12,}")
        lines.append(f"{'embedding total':<44}{self.embedding:>12,}")
        lines.append(f"{'network total (non-embedding)':<44}{self.network:>12,}")
        lines.append(f"{'grand total':<44}{self.total:>12,}")
        return "\n".join(lines)


def param_count(params: ParamStore) -> ParamCountReport:
    entries = []
    embedding = 0
    network = 0
    for name, p in params.items():
        count = int(p.value.size)
        entries.append((name, p.value.shape, count))
        if name == "embedding":
            embedding += count
        else:
            network += count
    return ParamCountReport(entries=tuple(entries), embedding=embedding, network=network)


# ---------------------------------------------------------------------------
# Named presets
# ---------------------------------------------------------------------------

def model_preset(name: str, vocab_size: int, seed: int = 0) -> ModelConfig:
    """Named architecture presets.

    `cnn-table1` / `acnn-table1` are the published full-scale configurations;
    `cnn-toy` / `acnn-toy` are matched desk-scale configs differing only in the
    first-layer operator.
    """
    if name == "cnn-table1":
        return ModelConfig(
            arch="cnn", vocab_size=vocab_size, embedding_dim=290,
            dropout_rate=0.51, l2_weight=0.13, seed=seed,
            layers=(
                LayerConfig("conv", ((0, 1), (1, 1), (4, 4)), 570),
                LayerConfig("conv", ((1, 1), (2, 2), (3, 4)), 570),
                LayerConfig("conv", ((0, 1), (1, 2), (2, 3)), 570),
            ))
    if name == "acnn-table1":
        return ModelConfig(
            arch="acnn", vocab_size=vocab_size, embedding_dim=290,
            dropout_rate=0.53, l2_weight=0.23, seed=seed,
            layers=(
                LayerConfig("autocorr", ((5, 6), (3, 3)), 120),
                LayerConfig("conv", ((4, 5), (2, 3)), 120),
                LayerConfig("conv", ((3, 4), (2, 2)), 120),
            ))
    if name in ("cnn-toy", "acnn-toy"):
        arch = "cnn" if name == "cnn-toy" else "acnn"
        first = "conv" if arch == "cnn" else "autocorr"
        return ModelConfig(
            arch=arch, vocab_size=vocab_size, embedding_dim=32,
            dropout_rate=0.15, l2_weight=0.01, seed=seed,
            layers=(
                LayerConfig(first, ((2, 6),), 16),
                LayerConfig("conv", ((1, 2),), 16),
                LayerConfig("conv", ((0, 1),), 16),
            ))
    raise ConfigError(f"unknown model preset {name!r}")


MODEL_PRESETS = ("cnn-table1", "acnn-table1", "cnn-toy", "acnn-toy")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

class CheckpointError(RuntimeError):
    pass


_MAGIC = b"ACNNCKPT"
_VERSION = 1
_DTYPE_CODES = {np.dtype(np.float64): 0, np.dtype(np.float32): 1}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


@dataclass
class Checkpoint:
    """Everything needed to reproduce a model: config, parameter values,
    vocabulary, the RNG algorithm and seed used, and the training step."""

    config: ModelConfig
    vocab_words: list[str]
    rng_algorithm: str
    seed: int
    step: int
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    def build_model(self) -> Model:
        model = Model.build(self.config, Rng(self.config.seed))
        model.params.load_values(self.tensors)
        return model


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """Binary layout (all integers little-endian):
    magic "ACNNCKPT" | u32 version | u64 metadata length | metadata JSON |
    u32 tensor count | per tensor: u16 name length, name utf-8, u8 dtype code
    (0 = float64, 1 = float32), u8 rank, u32 dims..., raw row-major data.
    Writing is deterministic, so save -> load -> save is byte-identical."""
    meta = json.dumps({
        "config": ckpt.config.to_dict(),
        "vocab": ckpt.vocab_words,
        "rng_algorithm": ckpt.rng_algorithm,
        "seed": ckpt.seed,
        "step": ckpt.step,
    }, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<I", _VERSION))
    buf.write(struct.pack("<Q", len(meta)))
    buf.write(meta)
    buf.write(struct.pack("<I", len(ckpt.tensors)))
    for name, arr in ckpt.tensors.items():
        nb = name.encode("utf-8")
        buf.write(struct.pack("<H", len(nb)))
        buf.write(nb)
        buf.write(struct.pack("<B", _DTYPE_CODES[arr.dtype]))
        buf.write(struct.pack("<B", arr.ndim))
        for d in arr.shape:
            buf.write(struct.pack("<I", d))
        buf.write(np.ascontiguousarray(arr).tobytes())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def _read_exact(fh, n: int) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError("corrupt checkpoint: truncated file")
    return data


def load_checkpoint(path, expect_config: ModelConfig | None = None) -> Checkpoint:
    with open(path, "rb") as fh:
        if _read_exact(fh, len(_MAGIC)) != _MAGIC:
            raise CheckpointError("corrupt checkpoint: bad magic")
        (version,) = struct.unpack("<I", _read_exact(fh, 4))
        if version != _VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<Q", _read_exact(fh, 8))
        try:
            meta = json.loads(_read_exact(fh, meta_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise CheckpointError(f"corrupt checkpoint metadata: {exc}") from exc
        config = ModelConfig.from_dict(meta["config"])
        (count,) = struct.unpack("<I", _read_exact(fh, 4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2))
            name = _read_exact(fh, name_len).decode("utf-8")
            (code,) = struct.unpack("<B", _read_exact(fh, 1))
            if code not in _CODE_DTYPES:
                raise CheckpointError(f"corrupt checkpoint: unknown dtype code {code}")
            dtype = _CODE_DTYPES[code]
            (rank,) = struct.unpack("<B", _read_exact(fh, 1))
            shape = tuple(struct.unpack("<I", _read_exact(fh, 4))[0] for _ in range(rank))
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            tensors[name] = np.frombuffer(_read_exact(fh, nbytes), dtype=dtype).reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError("corrupt checkpoint: trailing bytes")
    if expect_config is not None and config != expect_config:
        raise CheckpointError("checkpoint config does not match the expected config")
    return Checkpoint(config=config, vocab_words=list(meta["vocab"]),
                      rng_algorithm=meta["rng_algorithm"], seed=meta["seed"],
                      step=meta["step"], tensors=tensors)
