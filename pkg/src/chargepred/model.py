"""Full network: fact encoder, definition encoder, both auxiliary representations, classifier."""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .data import FactExample
from .encoders import (
    ConvDefEncoder,
    DefinitionCache,
    DefinitionEncoding,
    FactEncoding,
    SelfAttentionPool,
    encode_all_definitions,
    encode_fact,
    pad_ids,
)
from .errors import ConfigError, ContractError, DivergenceError, FormatError
from .interaction import (
    EpisodicAttention,
    MemoryTrace,
    WordAlignment,
    align_words,
    charge_related_representation,
    charge_token_related_representation,
    identify_charges,
)
from .layers import GruCell, Linear, fc
from .numeric import (
    AdamState,
    Tensor,
    adam_step,
    backward,
    clip,
    clip_grad_norm,
    embedding,
    halving_lr,
    log,
    mul,
    no_grad,
    sigmoid,
    tsum,
)

log_ = logging.getLogger(__name__)

LOSS_VARIANTS = ("bce", "paper")
PROB_EPS = 1e-12

ABLATIONS: dict[str, dict[str, bool]] = {
    "full": {},
    "no_fc": {"use_fc": False},
    "no_fs_fw": {"use_fs": False, "use_fw": False},
    "no_fw": {"use_fw": False},
    "no_fs": {"use_fs": False},
    "no_fs_gi": {"use_fs": False, "use_gi": False},
}


@dataclass
class ModelConfig:
    n_classes: int = 2
    vocab_size: int = 2
    d_emb: int = 64
    d_h: int = 128
    d_a: int | None = None        # fact attention width, default d_h // 2
    d_att: int | None = None      # episodic attention width, default d_h
    window: int = 3
    iterations: int = 3
    max_fact_len: int = 500
    max_def_len: int = 110
    use_fc: bool = True
    use_fs: bool = True
    use_fw: bool = True
    use_gi: bool = True
    loss_variant: str = "bce"
    top_k: int | None = None
    train_embeddings: bool = True
    prior_bias_init: bool = True
    seed: int = 0
    lr: float = 0.005
    lr_halve_every: int = 2
    lr_halve_offset: int = 0
    batch_size: int = 32
    epochs: int = 10
    clip_norm: float = 5.0
    threshold: float = 0.5
    min_count: int = 2

    def __post_init__(self):
        if self.d_a is None:
            self.d_a = max(1, self.d_h // 2)
        if self.d_att is None:
            self.d_att = self.d_h

    def validate(self) -> "ModelConfig":
        if not (self.use_fc or self.use_fs or self.use_fw):
            raise ConfigError("at least one of use_fc, use_fs, use_fw must be enabled")
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.n_classes < 1:
            raise ConfigError("n_classes must be >= 1")
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError("window must be a positive odd integer")
        if self.loss_variant not in LOSS_VARIANTS:
            raise ConfigError(f"loss_variant must be one of {LOSS_VARIANTS}")
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("threshold must lie in (0, 1)")
        if self.batch_size < 1 or self.epochs < 0:
            raise ConfigError("batch_size must be >= 1 and epochs >= 0")
        if min(self.d_emb, self.d_h, self.d_a, self.d_att) < 1:
            raise ConfigError("all widths must be positive")
        return self

    @property
    def n_parts(self) -> int:
        return int(self.use_fc) + int(self.use_fs) + int(self.use_fw)

    @property
    def needs_definitions(self) -> bool:
        return self.use_fs or self.use_fw

    @property
    def needs_charge_attention(self) -> bool:
        return self.use_fs or (self.use_fw and self.use_gi)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**d)

    def with_ablation(self, variant: str) -> "ModelConfig":
        if variant not in ABLATIONS:
            raise ConfigError(f"unknown ablation variant {variant!r}; choose from {', '.join(ABLATIONS)}")
        flags = dict(use_fc=True, use_fs=True, use_fw=True, use_gi=True)
        flags.update(ABLATIONS[variant])
        return replace(self, **flags)


class ModelParams:
    """Every trainable tensor, grouped by component."""

    def __init__(self, embedding: Tensor, fact_gru: GruCell, attn: SelfAttentionPool,
                 conv: ConvDefEncoder, episodic: EpisodicAttention, fc_s: Linear,
                 agg_gru: GruCell, fc_w: Linear, fc_final: Linear, classifier: Linear):
        self.embedding = embedding
        self.fact_gru = fact_gru
        self.attn = attn
        self.conv = conv
        self.episodic = episodic
        self.fc_s = fc_s
        self.agg_gru = agg_gru
        self.fc_w = fc_w
        self.fc_final = fc_final
        self.classifier = classifier
        self.version = 0

    COMPONENTS = ("fact_gru", "attn", "conv", "episodic", "fc_s", "agg_gru", "fc_w", "fc_final", "classifier")

    @classmethod
    def create(cls, config: ModelConfig, embeddings: np.ndarray | None = None) -> "ModelParams":
        config.validate()
        rng = np.random.default_rng([config.seed, 0])
        if embeddings is None:
            table = rng.uniform(-0.1, 0.1, size=(config.vocab_size, config.d_emb))
        else:
            table = np.array(embeddings, dtype=np.float64)
            if table.shape != (config.vocab_size, config.d_emb):
                raise ConfigError(f"embedding table {table.shape} does not match "
                                  f"({config.vocab_size}, {config.d_emb})")
        table[0] = 0.0
        h = config.d_h
        return cls(
            embedding=Tensor(table, requires_grad=config.train_embeddings, name="embedding"),
            fact_gru=GruCell.create(config.d_emb, h, rng, "fact_gru"),
            attn=SelfAttentionPool.create(h, config.d_a, rng),
            conv=ConvDefEncoder.create(config.d_emb, h, rng, config.window),
            episodic=EpisodicAttention.create(h, config.d_att, rng, config.iterations),
            fc_s=Linear.create(3 * h, h, rng, "fc_s"),
            agg_gru=GruCell.create(h, h, rng, "agg_gru"),
            fc_w=Linear.create(2 * h, h, rng, "fc_w"),
            fc_final=Linear.create(config.n_parts * h, h, rng, "fc_final"),
            classifier=Linear.create(h, config.n_classes, rng, "classifier", activation=False),
        )

    def named_tensors(self) -> dict[str, Tensor]:
        out = {"embedding": self.embedding}
        for comp in self.COMPONENTS:
            out.update(getattr(self, comp).named_tensors(comp + "."))
        return out

    def trainable(self, config: ModelConfig) -> dict[str, Tensor]:
        """Tensors that take part in the forward pass under ``config``'s flags."""
        used = {"fact_gru", "attn", "fc_final", "classifier"}
        if config.needs_definitions:
            used.add("conv")
        if config.needs_charge_attention:
            used.add("episodic")
        if config.use_fs:
            used.add("fc_s")
        if config.use_fw:
            used.update({"agg_gru", "fc_w"})
        out = {}
        for name, t in self.named_tensors().items():
            comp = name.split(".", 1)[0]
            if t.requires_grad and (comp == "embedding" or comp in used):
                out[name] = t
        return out

    def zero_grad(self) -> None:
        for t in self.named_tensors().values():
            t.grad = None


@dataclass
class ForwardTrace:
    fact: FactEncoding
    defs: DefinitionEncoding | None
    memory: MemoryTrace | None
    alignment: WordAlignment | None
    Fs: Tensor | None
    Fw: Tensor | None
    agg_last: Tensor | None
    F: Tensor
    logits: Tensor
    o: Tensor
    fact_mask: np.ndarray

    @property
    def H(self) -> Tensor:
        return self.fact.H

    @property
    def alpha(self) -> Tensor:
        return self.fact.alpha

    @property
    def Fc(self) -> Tensor:
        return self.fact.Fc


def forward(examples: Sequence[FactExample] | FactExample, definitions: Sequence[Sequence[int]],
            params: ModelParams, config: ModelConfig, cache: DefinitionCache | None = None) -> ForwardTrace:
    """Run the network over a batch of examples."""
    config.validate()
    if isinstance(examples, FactExample):
        examples = [examples]
    if not examples:
        raise ContractError("forward needs at least one example")
    ids, mask = pad_ids([ex.tokens for ex in examples])
    x = embedding(params.embedding, ids)
    fact = encode_fact(x, mask, params.fact_gru, params.attn)
    Fc = fact.Fc
    B = Fc.shape[0]

    defs = memory = alignment = Fs = Fw = last = None
    if config.needs_definitions:
        if len(definitions) != config.n_classes:
            raise ContractError(f"expected {config.n_classes} definitions, got {len(definitions)}")
        defs = encode_all_definitions(definitions, params.embedding, params.conv, cache, params.version)
    if config.needs_charge_attention:
        memory = identify_charges(Fc, defs.L, params.episodic, config.iterations)
    if config.use_fs:
        Fs = charge_related_representation(Fc, memory, params.fc_s)
    if config.use_fw:
        if config.use_gi:
            g = memory.final_attention
        else:
            g = Tensor(np.full((B, config.n_classes), 1.0 / config.n_classes))
        alignment = align_words(fact.H, defs, g, config.top_k)
        Fw, last = charge_token_related_representation(alignment.projected, mask, Fc,
                                                       params.agg_gru, params.fc_w)

    parts = [t for t, on in ((Fc, config.use_fc), (Fs, config.use_fs), (Fw, config.use_fw)) if on]
    F = fc(parts, params.fc_final)
    logits = params.classifier(F)
    return ForwardTrace(fact, defs, memory, alignment, Fs, Fw, last, F, logits, sigmoid(logits), mask)


def loss(o: Tensor, y, variant: str = "bce") -> Tensor:
    """Summed multi-label log loss over the batch.

    ``paper`` keeps only the positive-label term; ``bce`` adds the
    negative-label term.
    """
    y = np.asarray(y, dtype=np.float64)
    if y.ndim == 1:
        y = y[None, :]
    if o.ndim == 1:
        o = o.reshape(1, o.shape[0])
    if y.shape != o.shape:
        raise ContractError(f"labels {y.shape} do not match outputs {o.shape}")
    if not np.all(y.sum(axis=1) > 0):
        raise ContractError("every example needs at least one positive label")
    if variant not in LOSS_VARIANTS:
        raise ConfigError(f"unknown loss variant {variant!r}")
    p = clip(o, PROB_EPS, 1.0 - PROB_EPS)
    total = tsum(mul(log(p), y))
    if variant == "bce":
        total = total + tsum(mul(log(1.0 - p), 1.0 - y))
    return -total


def predict(o, threshold: float = 0.5) -> np.ndarray:
    """Multi-hot decisions; falls back to the argmax when nothing clears ``threshold``."""
    o = np.asarray(o, dtype=np.float64)
    single = o.ndim == 1
    o2 = o.reshape(1, -1) if single else o
    pred = (o2 >= threshold).astype(np.int64)
    empty = pred.sum(axis=1) == 0
    pred[np.nonzero(empty)[0], np.argmax(o2[empty], axis=1)] = 1
    return pred[0] if single else pred


def batches(n: int, batch_size: int, rng: np.random.Generator | None = None):
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def infer(examples: Sequence[FactExample], definitions: Sequence[Sequence[int]], params: ModelParams,
          config: ModelConfig, keep: Callable[[ForwardTrace], dict] | None = None):
    """Probabilities ``(N, C)`` for ``examples`` without recording gradients.

    With ``keep``, also returns a list of whatever it extracts per batch.
    """
    cache = DefinitionCache()
    outs, kept = [], []
    with no_grad():
        for idx in batches(len(examples), config.batch_size):
            trace = forward([examples[i] for i in idx], definitions, params, config, cache)
            outs.append(trace.o.data)
            if keep is not None:
                kept.append(keep(trace))
    probs = np.concatenate(outs, axis=0) if outs else np.zeros((0, config.n_classes))
    return (probs, kept) if keep is not None else probs


@dataclass
class TrainResult:
    params: ModelParams
    history: list[dict] = field(default_factory=list)


def init_prior_bias(params: ModelParams, train_set: Sequence[FactExample], n_classes: int) -> None:
    """Set classifier biases to the log-odds of each label's training frequency.

    Starting at the label prior keeps the first updates from pushing every
    path that can shift all logits at once (sum-pooled definitions in
    particular) into tanh saturation.
    """
    counts = np.zeros(n_classes)
    for ex in train_set:
        counts += ex.labels
    freq = np.clip((counts + 0.5) / (len(train_set) + 1.0), 1e-4, 1 - 1e-4)
    params.classifier.b.data[:] = np.log(freq / (1.0 - freq))


def train(train_set: Sequence[FactExample], definitions: Sequence[Sequence[int]], config: ModelConfig,
          embeddings: np.ndarray | None = None, params: ModelParams | None = None,
          on_epoch: Callable[[dict], None] | None = None) -> TrainResult:
    """Minibatch Adam training with step-halving learning rate and norm clipping.

    Deterministic for a fixed ``config.seed``.
    """
    config.validate()
    if not train_set:
        raise ContractError("training set is empty")
    if params is None:
        params = ModelParams.create(config, embeddings)
        if config.prior_bias_init:
            init_prior_bias(params, train_set, config.n_classes)
    shuffle_rng = np.random.default_rng([config.seed, 1])
    state = AdamState(lr=config.lr)
    trainable = params.trainable(config)
    history = []
    for epoch in range(config.epochs):
        state.lr = halving_lr(config.lr, epoch, config.lr_halve_every, config.lr_halve_offset)
        total, exact, norms = 0.0, 0, []
        for b, idx in enumerate(batches(len(train_set), config.batch_size, shuffle_rng)):
            batch = [train_set[i] for i in idx]
            y = np.array([ex.labels for ex in batch], dtype=np.float64)
            params.zero_grad()
            trace = forward(batch, definitions, params, config)
            value = loss(trace.o, y, config.loss_variant)
            if not np.isfinite(value.item()):
                raise DivergenceError(f"non-finite loss at epoch {epoch + 1}, batch {b + 1} "
                                      f"(lr={state.lr:g}); try a lower learning rate")
            backward(value)
            for t in trainable.values():
                if t.grad is None:
                    t.grad = np.zeros_like(t.data)
            norms.append(clip_grad_norm(trainable, config.clip_norm))
            adam_step(trainable, state)
            if params.embedding.requires_grad:
                params.embedding.data[0] = 0.0
            params.version += 1
            total += value.item()
            exact += int(np.sum(np.all(predict(trace.o.data, config.threshold) == y, axis=1)))
        record = {
            "epoch": epoch + 1,
            "lr": state.lr,
            "loss": total,
            "mean_loss": total / len(train_set),
            "train_exact_match": exact / len(train_set),
            "mean_grad_norm": float(np.mean(norms)),
        }
        history.append(record)
        log_.debug("epoch %d loss %.6f exact %.4f", record["epoch"], record["loss"], record["train_exact_match"])
        if on_epoch is not None:
            on_epoch(record)
    return TrainResult(params, history)


# ---------------------------------------------------------------- checkpoints

MAGIC = b"CHARGEPRED-CKPT\n"
FORMAT_VERSION = 1


def save_params(path: str | Path, params: ModelParams, config: ModelConfig, extra: dict | None = None) -> None:
    """Write a self-describing checkpoint.

    Layout: magic line, uint32 format version, uint64 header length, UTF-8
    JSON header (config, tensor names/shapes/offsets, ``extra``), then the
    tensors as little-endian float64 in header order.
    """
    tensors = params.named_tensors()
    index, offset = [], 0
    for name, t in tensors.items():
        index.append({"name": name, "shape": list(t.shape), "offset": offset})
        offset += t.size
    header = {
        "format_version": FORMAT_VERSION,
        "config": config.to_dict(),
        "tensors": index,
        "extra": extra or {},
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IQ", FORMAT_VERSION, len(blob)))
        fh.write(blob)
        for t in tensors.values():
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if not raw.startswith(MAGIC):
        raise FormatError(f"{path}: not a checkpoint (bad magic)")
    pos = len(MAGIC)
    try:
        version, hlen = struct.unpack_from("<IQ", raw, pos)
    except struct.error:
        raise FormatError(f"{path}: truncated header") from None
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    pos += struct.calcsize("<IQ")
    try:
        header = json.loads(raw[pos:pos + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError(f"{path}: corrupted header") from None
    if header.get("format_version") != version:
        raise FormatError(f"{path}: header version mismatch")
    payload = np.frombuffer(raw, dtype="<f8", offset=pos + hlen) if len(raw) > pos + hlen else np.zeros(0)
    arrays = {}
    for entry in header["tensors"]:
        n = int(np.prod(entry["shape"], dtype=np.int64))
        start = entry["offset"]
        if start + n > payload.size:
            raise FormatError(f"{path}: payload too short for {entry['name']}")
        arrays[entry["name"]] = payload[start:start + n].reshape(entry["shape"]).astype(np.float64)
    return header, arrays


def load_params(path: str | Path, config: ModelConfig | None = None) -> tuple[ModelParams, ModelConfig, dict]:
    """Rebuild parameters from a checkpoint.

    When ``config`` is given, every tensor shape must match it.
    """
    header, arrays = read_checkpoint(path)
    try:
        saved = ModelConfig.from_dict(header["config"])
    except (TypeError, ConfigError) as exc:
        raise FormatError(f"{path}: bad config in header ({exc})") from None
    target = config if config is not None else saved
    params = ModelParams.create(target)
    tensors = params.named_tensors()
    if set(tensors) != set(arrays):
        raise FormatError(f"{path}: tensor names do not match the model layout")
    for name, t in tensors.items():
        if arrays[name].shape != t.shape:
            raise FormatError(f"{path}: {name} has shape {arrays[name].shape}, model expects {t.shape}")
        t.data = arrays[name].copy()
    return params, target, header.get("extra", {})
