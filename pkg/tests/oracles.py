"""Independent straight-line reference implementations.

These stay deliberately loop-based and separate from the library's compute
paths; tests freeze expected values against them.
"""

from __future__ import annotations

import numpy as np


def qwk_bruteforce(y_true, y_pred, num_categories: int) -> float:
    """Direct double-loop quadratic weighted kappa over raw counts."""
    n = num_categories
    observed = [[0] * n for _ in range(n)]
    for t, p in zip(y_true, y_pred):
        observed[t][p] += 1
    total = len(y_true)
    row = [sum(observed[i][j] for j in range(n)) for i in range(n)]
    col = [sum(observed[i][j] for i in range(n)) for j in range(n)]
    num = 0.0
    den = 0.0
    for i in range(n):
        for j in range(n):
            w = (i - j) ** 2 / (n - 1) ** 2
            num += w * observed[i][j]
            den += w * row[i] * col[j] / total
    if den == 0.0:
        return 1.0
    return 1.0 - num / den


def leaky(x, slope):
    return np.where(np.asarray(x) > 0, x, slope * np.asarray(x))


def attention_logits_reference(features, edges, W, a, slope):
    """Per-edge loop: e = LeakyReLU(a^T [W h_dst || W h_src])."""
    wh = features @ W
    out = []
    for s, d in edges:
        cat = np.concatenate([wh[int(d)], wh[int(s)]])
        out.append(float(leaky(a @ cat, slope)))
    return np.array(out)


def gat_layer_reference(features, edges, Ws, As, attention_slope, activation_slope, combine):
    """Loop-based multi-head layer: softmax over each node's in-neighbors."""
    n = features.shape[0]
    incoming: dict[int, list[int]] = {i: [] for i in range(n)}
    for s, d in edges:
        incoming[int(d)].append(int(s))
    head_outs = []
    for W, a in zip(Ws, As):
        wh = features @ W
        out = np.zeros((n, W.shape[1]))
        for i in range(n):
            js = incoming[i]
            logits = np.array([float(leaky(a @ np.concatenate([wh[i], wh[j]]), attention_slope))
                               for j in js])
            alpha = np.exp(logits)
            alpha = alpha / alpha.sum()
            agg = np.zeros(W.shape[1])
            for a_ij, j in zip(alpha, js):
                agg = agg + a_ij * wh[j]
            out[i] = leaky(agg, activation_slope)
        head_outs.append(out)
    if combine == "concat":
        return np.concatenate(head_outs, axis=1)
    return np.mean(head_outs, axis=0)


def s2_reference(features, edges, layer_weights, W2, b2,
                 attention_slope, activation_slope, combines):
    """Full graph stream for a single graph: layers, mean pool, linear head."""
    x = features
    for (Ws, As), combine in zip(layer_weights, combines):
        x = gat_layer_reference(x, edges, Ws, As, attention_slope, activation_slope, combine)
    pooled = x.mean(axis=0)
    return leaky(pooled @ W2 + b2, activation_slope)


def essay_head_reference(vec, W, b, slope):
    return leaky(W @ vec + b, slope)


def random_tree_edges(rng: np.random.Generator, num_nodes: int) -> np.ndarray:
    """Self-looped symmetric edge set of a random recursive tree."""
    pairs = {(i, i) for i in range(num_nodes)}
    for k in range(1, num_nodes):
        head = int(rng.integers(0, k))
        pairs.add((head, k))
        pairs.add((k, head))
    return np.array(sorted(pairs), dtype=np.int64)
