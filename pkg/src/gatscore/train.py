"""Two-stream fusion training: summed predictions, six-trait MSE, AdamW.

The fused prediction is y_hat = s1 + s2 (essay stream plus graph stream);
the individual streams are free to split the score mass however training
prefers and are not calibrated scores on their own. Optimization is AdamW
with bias correction and decoupled weight decay under a per-step cosine
learning-rate schedule decaying to zero over the whole run, no warmup.
Training runs in double precision and is bit-deterministic for a fixed
(seed, config, data).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import autograd as ag
from .autograd import Tape, Tensor
from .checkpoint import Checkpoint, deserialize_checkpoint, serialize_checkpoint
from .data import (TRAIT_COUNT, TRAIT_NAMES, DatasetSplit, InputError, TraitScores,
                   read_essays_jsonl, score_to_category, validate_record)
from .graphs import GraphBatch, TokenGraph, batch_graphs, build_graph
from .metrics import QwkReport, make_report
from .model import (GatConfig, GatForwardTrace, ModelParams, essay_forward_batch,
                    gat_forward, init_model_params)
from .tgeb import read_tgeb

ESSAYS_FILENAME = "essays.jsonl"
EMBEDDINGS_FILENAME = "embeddings.tgeb"


# --- fusion ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class FusionOutput:
    """Both stream predictions and their sum for one essay."""

    s1: np.ndarray
    s2: np.ndarray
    y_hat: np.ndarray


def fuse(s1: Sequence[float], s2: Sequence[float]) -> FusionOutput:
    """Combine the two length-6 stream predictions by elementwise sum."""
    a = np.asarray(s1, dtype=np.float64)
    b = np.asarray(s2, dtype=np.float64)
    if a.shape != (TRAIT_COUNT,) or b.shape != (TRAIT_COUNT,):
        raise ValueError(f"stream predictions must have shape ({TRAIT_COUNT},)")
    return FusionOutput(s1=a, s2=b, y_hat=a + b)


@dataclass(frozen=True)
class LossReport:
    """Per-trait squared errors and their mean for one essay."""

    per_trait: tuple[float, ...]
    mean: float


def loss(y_hat: Sequence[float], y: TraitScores) -> LossReport:
    """Mean squared error across the six traits."""
    pred = np.asarray(y_hat, dtype=np.float64)
    if pred.shape != (TRAIT_COUNT,):
        raise ValueError(f"prediction must have shape ({TRAIT_COUNT},)")
    sq = (y.as_array() - pred) ** 2
    return LossReport(per_trait=tuple(float(v) for v in sq), mean=float(sq.mean()))


# --- optimization ------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    epochs: int = 6
    lr: float = 1e-3
    weight_decay: float = 0.0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    scheduler: str = "cosine"
    seed: int = 0
    freeze_essay_head: bool = False

    def __post_init__(self) -> None:
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")
        if self.lr < 0:
            raise ValueError("lr must be non-negative")
        if self.scheduler not in ("cosine", "constant"):
            raise ValueError(f"unknown scheduler {self.scheduler!r}")


def cosine_lr(step: int, total_steps: int, lr_max: float) -> float:
    """Half-cosine decay from lr_max at step 0 to zero at total_steps."""
    if total_steps < 1 or not (0 <= step <= total_steps):
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    return lr_max * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


@dataclass
class OptimizerState:
    """AdamW moments, one slot per parameter, plus the shared step count."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: Sequence[Tensor]) -> "OptimizerState":
        return cls(m=[np.zeros_like(p.data) for p in params],
                   v=[np.zeros_like(p.data) for p in params])


def adamw_step(params: Sequence[Tensor], grads: Sequence[np.ndarray],
               state: OptimizerState, lr: float, config: TrainConfig) -> None:
    """One AdamW update with bias correction and decoupled weight decay."""
    b1, b2 = config.betas
    state.t += 1
    t = state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        m[:] = b1 * m + (1.0 - b1) * g
        v[:] = b2 * v + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data = p.data - lr * (m_hat / (np.sqrt(v_hat) + config.eps)
                                + config.weight_decay * p.data)


# --- forward over a prepared batch --------------------------------------------

def model_forward(batch: GraphBatch, essay_vecs: np.ndarray, params: ModelParams,
                  config: GatConfig) -> tuple[Tensor, Tensor, Tensor, GatForwardTrace]:
    """Fused forward pass: returns (y_hat, s1, s2, trace) for a graph batch."""
    s2, trace = gat_forward(batch, params, config)
    s1 = essay_forward_batch(ag.constant(essay_vecs), params.essay, config.activation_slope)
    y_hat = ag.add(s1, s2)
    return y_hat, s1, s2, trace


@dataclass
class _PreparedData:
    """Graphs, essay vectors, and gold targets frozen in record order."""

    graphs: list[TokenGraph]
    essay_vecs: np.ndarray
    gold: Optional[np.ndarray]
    d_in: int

    @classmethod
    def from_split(cls, split: DatasetSplit, need_gold: bool) -> "_PreparedData":
        if len(split) == 0:
            raise ValueError(f"{split.role} split is empty")
        graphs = []
        vecs = []
        gold_rows = []
        for rec in split.records:
            bundle = split.bundle_for(rec)
            graphs.append(build_graph(rec, bundle))
            vecs.append(bundle.essay_vec)
            if need_gold:
                if rec.gold is None:
                    raise ValueError(f"record {rec.id!r} has no gold scores")
                gold_rows.append(rec.gold.as_array())
        dims = {g.feature_dim for g in graphs}
        if len(dims) != 1:
            raise ValueError(f"inconsistent embedding dims in {split.role} split: {sorted(dims)}")
        return cls(graphs=graphs, essay_vecs=np.stack(vecs),
                   gold=np.stack(gold_rows) if need_gold else None,
                   d_in=dims.pop())


def _predict(prepared: _PreparedData, params: ModelParams, config: GatConfig,
             chunk_size: int = 32) -> np.ndarray:
    """Continuous fused predictions (N, 6), computed without a tape."""
    rows = []
    n = len(prepared.graphs)
    for lo in range(0, n, chunk_size):
        hi = min(lo + chunk_size, n)
        batch = batch_graphs(prepared.graphs[lo:hi])
        y_hat, _, _, _ = model_forward(batch, prepared.essay_vecs[lo:hi], params, config)
        rows.append(y_hat.data)
    return np.concatenate(rows, axis=0)


def discretize_predictions(pred: np.ndarray) -> np.ndarray:
    """Elementwise rubric discretization (same rule as discretize_score)."""
    return np.floor(np.clip(pred, 1.0, 5.0) * 2.0 + 0.5) / 2.0


def _qwk_report(pred: np.ndarray, gold: np.ndarray) -> QwkReport:
    rounded = discretize_predictions(pred)
    labels = {}
    for k, name in enumerate(TRAIT_NAMES):
        y_true = [score_to_category(v) for v in gold[:, k]]
        y_pred = [score_to_category(v) for v in rounded[:, k]]
        labels[name] = (y_true, y_pred)
    return make_report(labels)


# --- training loop -------------------------------------------------------------

@dataclass(frozen=True)
class EpochStats:
    epoch: int
    train_loss: float
    val_avg_qwk: float
    val_trait_qwk: tuple[float, ...]


@dataclass
class FitResult:
    history: list[EpochStats]
    best_epoch: int
    best_val_qwk: float
    best_checkpoint_bytes: bytes
    final_params: ModelParams
    gat_config: GatConfig
    d_in: int

    def best_checkpoint(self) -> Checkpoint:
        return deserialize_checkpoint(self.best_checkpoint_bytes)


def _fisher_yates(rng: np.random.Generator, n: int) -> np.ndarray:
    idx = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        idx[i], idx[j] = idx[j], idx[i]
    return idx


def fit(train: DatasetSplit, val: DatasetSplit, config: TrainConfig,
        gat_config: GatConfig = GatConfig()) -> FitResult:
    """Train the fused model; retain the checkpoint with the best val mean-QWK.

    Epochs iterate seeded Fisher-Yates-shuffled mini-batches; after each
    epoch the validation mean-QWK over the six traits is computed and the
    best-scoring parameters are kept (earliest epoch wins ties). History
    records per-epoch train loss and validation QWK.
    """
    train_data = _PreparedData.from_split(train, need_gold=True)
    val_data = _PreparedData.from_split(val, need_gold=True)
    if train_data.d_in != val_data.d_in:
        raise ValueError(f"train dim {train_data.d_in} != val dim {val_data.d_in}")

    params = init_model_params(gat_config, train_data.d_in, seed=config.seed)
    frozen = {"essay.W", "essay.b"} if config.freeze_essay_head else set()
    trainable = [t for name, t in params.named_parameters() if name not in frozen]
    state = OptimizerState.for_params(trainable)
    shuffle_rng = np.random.default_rng([config.seed, 1])

    n = len(train_data.graphs)
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = config.epochs * steps_per_epoch
    step = 0

    history: list[EpochStats] = []
    best_qwk = -np.inf
    best_epoch = -1
    best_bytes = b""

    for epoch in range(1, config.epochs + 1):
        order = _fisher_yates(shuffle_rng, n)
        loss_sum = 0.0
        for lo in range(0, n, config.batch_size):
            chosen = order[lo:lo + config.batch_size]
            batch = batch_graphs([train_data.graphs[i] for i in chosen])
            gold = ag.constant(train_data.gold[chosen])
            lr = (cosine_lr(step, total_steps, config.lr)
                  if config.scheduler == "cosine" else config.lr)
            ag.zero_grads(trainable)
            with Tape() as tape:
                y_hat, _, _, _ = model_forward(batch, train_data.essay_vecs[chosen],
                                               params, gat_config)
                batch_loss = ag.mse(y_hat, gold)
                tape.backward(batch_loss)
            grads = [p.grad if p.grad is not None else np.zeros_like(p.data)
                     for p in trainable]
            adamw_step(trainable, grads, state, lr, config)
            loss_sum += batch_loss.item() * len(chosen)
            step += 1
        train_loss = loss_sum / n

        report = _qwk_report(_predict(val_data, params, gat_config), val_data.gold)
        if report.avg_qwk > best_qwk:
            best_qwk = report.avg_qwk
            best_epoch = epoch
            best_bytes = serialize_checkpoint(
                Checkpoint.from_params(params, gat_config, train_data.d_in))
        history.append(EpochStats(
            epoch=epoch, train_loss=train_loss, val_avg_qwk=report.avg_qwk,
            val_trait_qwk=tuple(report.traits[t].kappa for t in TRAIT_NAMES)))

    return FitResult(history=history, best_epoch=best_epoch, best_val_qwk=best_qwk,
                     best_checkpoint_bytes=best_bytes, final_params=params,
                     gat_config=gat_config, d_in=train_data.d_in)


def evaluate_params(split: DatasetSplit, params: ModelParams, config: GatConfig) -> QwkReport:
    """QWK report of discretized fused predictions against gold scores."""
    data = _PreparedData.from_split(split, need_gold=True)
    return _qwk_report(_predict(data, params, config), data.gold)


def evaluate_split(split: DatasetSplit, checkpoint: Checkpoint) -> QwkReport:
    data = _PreparedData.from_split(split, need_gold=True)
    if data.d_in != checkpoint.d_in:
        raise InputError(f"checkpoint expects dim {checkpoint.d_in}, data has dim {data.d_in}")
    return _qwk_report(_predict(data, checkpoint.params, checkpoint.config), data.gold)


def predict_split(split: DatasetSplit, checkpoint: Checkpoint) -> np.ndarray:
    """Continuous fused predictions for every record, in record order."""
    data = _PreparedData.from_split(split, need_gold=False)
    if data.d_in != checkpoint.d_in:
        raise InputError(f"checkpoint expects dim {checkpoint.d_in}, data has dim {data.d_in}")
    return _predict(data, checkpoint.params, checkpoint.config)


def train_loss_of(split: DatasetSplit, params: ModelParams, config: GatConfig) -> float:
    """Current mean squared error of the fused predictions over a split."""
    data = _PreparedData.from_split(split, need_gold=True)
    pred = _predict(data, params, config)
    return float(np.mean((pred - data.gold) ** 2))


# --- history CSV + dataset loading ----------------------------------------------

HISTORY_HEADER = ("epoch", "train_loss", "val_avg_qwk") + TRAIT_NAMES


def history_to_csv(history: Sequence[EpochStats]) -> str:
    lines = [",".join(HISTORY_HEADER)]
    for row in history:
        cells = [str(row.epoch), repr(row.train_loss), repr(row.val_avg_qwk)]
        cells.extend(repr(v) for v in row.val_trait_qwk)
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def load_dataset_dir(path: Path | str, role: str) -> DatasetSplit:
    """Load a data directory holding essays.jsonl and embeddings.tgeb."""
    base = Path(path)
    essays_path = base / ESSAYS_FILENAME
    embeddings_path = base / EMBEDDINGS_FILENAME
    if not essays_path.is_file():
        raise InputError(f"{base}: missing {ESSAYS_FILENAME}")
    if not embeddings_path.is_file():
        raise InputError(f"{base}: missing {EMBEDDINGS_FILENAME}")
    records = read_essays_jsonl(essays_path)
    bundles = read_tgeb(embeddings_path)

    problems: list[str] = []
    for rec in records:
        bundle = bundles.get(rec.id)
        if bundle is None:
            problems.append(f"{rec.id}: no embedding bundle")
            continue
        result = validate_record(rec, bundle)
        problems.extend(f"{rec.id}: {v}" for v in result.violations)
    if problems:
        shown = "\n  ".join(problems[:20])
        more = f"\n  ... and {len(problems) - 20} more" if len(problems) > 20 else ""
        raise InputError(f"{base}: invalid dataset:\n  {shown}{more}")
    try:
        return DatasetSplit(records=tuple(records), bundles=bundles, role=role)
    except ValueError as exc:
        raise InputError(f"{base}: {exc}") from exc
