"""Two-stream scoring network.

Graph stream: token features pass through stacked multi-head graph attention
layers; per-edge attention logits are LeakyReLU(a^T [W h_dst || W h_src]),
normalized by softmax over each destination neighborhood, and used to weight
the summed messages. Node states are mean-pooled per graph and mapped to the
six trait scores by a linear head. Essay stream: a single dense layer over
the pooled essay embedding. Heads of intermediate layers concatenate; the
final layer averages its heads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .data import TRAIT_COUNT
from .graphs import GraphBatch

HEAD_COMBINE_MODES = ("concat", "mean")


@dataclass(frozen=True)
class GatConfig:
    """Architecture hyperparameters for the graph stream."""

    num_layers: int = 2
    num_heads: int = 4
    d_head: int = 64
    attention_slope: float = 0.2
    activation_slope: float = 0.01
    head_combine: Optional[tuple[str, ...]] = None

    def __post_init__(self) -> None:
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.num_heads < 1:
            raise ValueError("num_heads must be >= 1")
        if self.d_head < 1:
            raise ValueError("d_head must be >= 1")
        combine = self.head_combine
        if combine is None:
            combine = ("concat",) * (self.num_layers - 1) + ("mean",)
        combine = tuple(combine)
        if len(combine) != self.num_layers:
            raise ValueError("head_combine must give one mode per layer")
        for mode in combine:
            if mode not in HEAD_COMBINE_MODES:
                raise ValueError(f"unknown head combine mode {mode!r}")
        object.__setattr__(self, "head_combine", combine)

    def layer_input_dims(self, d_in: int) -> list[int]:
        dims = []
        cur = d_in
        for mode in self.head_combine:
            dims.append(cur)
            cur = self.d_head * self.num_heads if mode == "concat" else self.d_head
        return dims

    def graph_dim(self, d_in: int) -> int:
        """Width of the pooled graph representation."""
        cur = d_in
        for mode in self.head_combine:
            cur = self.d_head * self.num_heads if mode == "concat" else self.d_head
        return cur


@dataclass
class GatLayerParams:
    """Per-head weight matrices (d_in, d_head) and attention vectors (2*d_head,)."""

    W: list[Tensor]
    a: list[Tensor]

    @property
    def num_heads(self) -> int:
        return len(self.W)


@dataclass
class GatHeadParams:
    """Linear prediction head over the pooled graph vector."""

    W2: Tensor  # (d_graph, TRAIT_COUNT)
    b2: Tensor  # (TRAIT_COUNT,)


@dataclass
class EssayHeadParams:
    """Dense essay-level head: W is (TRAIT_COUNT, d), b is (TRAIT_COUNT,)."""

    W: Tensor
    b: Tensor


@dataclass
class ModelParams:
    """All trainable tensors of the fused two-stream model."""

    layers: list[GatLayerParams]
    head: GatHeadParams
    essay: EssayHeadParams

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for l, layer in enumerate(self.layers):
            for h in range(layer.num_heads):
                out.append((f"gat.layer{l}.head{h}.W", layer.W[h]))
                out.append((f"gat.layer{l}.head{h}.a", layer.a[h]))
        out.append(("gat.out.W2", self.head.W2))
        out.append(("gat.out.b2", self.head.b2))
        out.append(("essay.W", self.essay.W))
        out.append(("essay.b", self.essay.b))
        return out

    def all_parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]


def _uniform_init(rng: np.random.Generator, shape: tuple[int, ...],
                  fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_params(config: GatConfig, d_in: int,
                seed: int | np.random.Generator = 0) -> tuple[list[GatLayerParams], GatHeadParams]:
    """Deterministically initialize the graph-stream parameters.

    Weight matrices and attention vectors draw from the symmetric uniform
    range +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    layers = []
    for dim in config.layer_input_dims(d_in):
        W = [Tensor(_uniform_init(rng, (dim, config.d_head), dim, config.d_head),
                    requires_grad=True) for _ in range(config.num_heads)]
        a = [Tensor(_uniform_init(rng, (2 * config.d_head,), 2 * config.d_head, 1),
                    requires_grad=True) for _ in range(config.num_heads)]
        layers.append(GatLayerParams(W=W, a=a))
    d_graph = config.graph_dim(d_in)
    head = GatHeadParams(
        W2=Tensor(_uniform_init(rng, (d_graph, TRAIT_COUNT), d_graph, TRAIT_COUNT),
                  requires_grad=True),
        b2=Tensor(np.zeros(TRAIT_COUNT), requires_grad=True),
    )
    return layers, head


def init_model_params(config: GatConfig, d_in: int, seed: int = 0) -> ModelParams:
    """Initialize both streams from one seed (bit-identical across runs)."""
    rng = np.random.default_rng(seed)
    layers, head = init_params(config, d_in, rng)
    essay = EssayHeadParams(
        W=Tensor(_uniform_init(rng, (TRAIT_COUNT, d_in), d_in, TRAIT_COUNT),
                 requires_grad=True),
        b=Tensor(np.zeros(TRAIT_COUNT), requires_grad=True),
    )
    return ModelParams(layers=layers, head=head, essay=essay)


# --- forward passes ----------------------------------------------------------

@dataclass
class LayerTrace:
    """Per-head attention internals of one layer (numpy copies)."""

    logits: list[np.ndarray]
    alphas: list[np.ndarray]
    node_outputs: np.ndarray


@dataclass
class GatForwardTrace:
    """Everything the graph stream computed, for inspection and tests."""

    layers: list[LayerTrace]
    edge_dst: np.ndarray
    pooled: np.ndarray
    prediction: np.ndarray


def _edge_logits(wh: Tensor, edges: np.ndarray, a_h: Tensor, slope: float) -> Tensor:
    dst = edges[:, 1]
    src = edges[:, 0]
    # Destination-first concatenation: [W h_i || W h_j] for aggregation j -> i.
    cat = ag.concat_cols([ag.gather_rows(wh, dst), ag.gather_rows(wh, src)])
    raw = ag.matmul(cat, ag.reshape(a_h, (a_h.shape[0], 1)))
    return ag.leaky_relu(ag.reshape(raw, (edges.shape[0],)), slope)


def attention_logits(features: Tensor, edges: np.ndarray, W_h: Tensor, a_h: Tensor,
                     slope: float) -> Tensor:
    """Per-edge attention logits e_ij for one head."""
    return _edge_logits(ag.matmul(features, W_h), edges, a_h, slope)


def gat_layer(features: Tensor, edges: np.ndarray, params: GatLayerParams,
              config: GatConfig, combine: str) -> tuple[Tensor, LayerTrace]:
    """One multi-head attention layer over a self-looped graph."""
    num_nodes = features.shape[0]
    src = edges[:, 0]
    dst = edges[:, 1]
    head_outputs: list[Tensor] = []
    logits_trace: list[np.ndarray] = []
    alphas_trace: list[np.ndarray] = []
    for W_h, a_h in zip(params.W, params.a):
        wh = ag.matmul(features, W_h)
        logits = _edge_logits(wh, edges, a_h, config.attention_slope)
        alpha = ag.segment_softmax(logits, dst, num_nodes)
        messages = ag.scale_rows(ag.gather_rows(wh, src), alpha)
        aggregated = ag.scatter_add_rows(messages, dst, num_nodes)
        head_outputs.append(ag.leaky_relu(aggregated, config.activation_slope))
        logits_trace.append(logits.data.copy())
        alphas_trace.append(alpha.data.copy())

    if combine == "concat":
        out = ag.concat_cols(head_outputs)
    else:
        acc = head_outputs[0]
        for h in head_outputs[1:]:
            acc = ag.add(acc, h)
        out = ag.scale(acc, 1.0 / len(head_outputs))
    trace = LayerTrace(logits=logits_trace, alphas=alphas_trace,
                       node_outputs=out.data.copy())
    return out, trace


def gat_forward(batch: GraphBatch, params: ModelParams,
                config: GatConfig) -> tuple[Tensor, GatForwardTrace]:
    """Graph-stream predictions s2 (num_graphs, TRAIT_COUNT) plus trace."""
    x = ag.constant(batch.graph.node_features)
    edges = batch.graph.edges
    layer_traces = []
    for layer_params, combine in zip(params.layers, config.head_combine):
        x, trace = gat_layer(x, edges, layer_params, config, combine)
        layer_traces.append(trace)
    pooled = ag.segment_mean(x, batch.segment_ids, batch.num_graphs)
    pre = ag.add_bias(ag.matmul(pooled, params.head.W2), params.head.b2)
    s2 = ag.leaky_relu(pre, config.activation_slope)
    trace = GatForwardTrace(layers=layer_traces, edge_dst=edges[:, 1].copy(),
                            pooled=pooled.data.copy(), prediction=s2.data.copy())
    return s2, trace


def essay_forward_batch(essay_vecs: Tensor, params: EssayHeadParams,
                        activation_slope: float = 0.01) -> Tensor:
    """Essay-stream predictions s1 for a (B, d) matrix of pooled embeddings."""
    pre = ag.add_bias(ag.matmul(essay_vecs, ag.transpose(params.W)), params.b)
    return ag.leaky_relu(pre, activation_slope)


def essay_forward(essay_vec, params: EssayHeadParams,
                  activation_slope: float = 0.01) -> Tensor:
    """Essay-stream prediction s1 for a single length-d embedding."""
    vec = essay_vec if isinstance(essay_vec, Tensor) else ag.constant(essay_vec)
    if len(vec.shape) != 1:
        raise ValueError(f"essay_vec must be 1-D, got shape {vec.shape}")
    row = ag.reshape(vec, (1, vec.shape[0]))
    return ag.reshape(essay_forward_batch(row, params, activation_slope), (TRAIT_COUNT,))
