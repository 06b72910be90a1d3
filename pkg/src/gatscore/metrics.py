"""Quadratic Weighted Kappa: chance-corrected ordinal agreement plus reports.

kappa = 1 - sum(w * O) / sum(w * E) with quadratic distance weights
w[i][j] = (i - j)^2 / (N - 1)^2. O holds observed counts, E the outer product
of the two marginals scaled to the same total; the ratio is scale-invariant,
so raw counts are used throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .data import NUM_CATEGORIES, TRAIT_NAMES

KAPPA_BANDS = (
    "No agreement",
    "Slight agreement",
    "Fair agreement",
    "Moderate agreement",
    "Substantial agreement",
    "Almost perfect agreement",
)


@dataclass(frozen=True, eq=True)
class ConfusionMatrix:
    """Observed counts: observed[i][j] = #(true category i, predicted j)."""

    num_categories: int
    observed: np.ndarray

    def __post_init__(self) -> None:
        obs = np.asarray(self.observed, dtype=np.int64)
        if obs.shape != (self.num_categories, self.num_categories):
            raise ValueError(f"observed matrix shape {obs.shape} does not match N={self.num_categories}")
        if (obs < 0).any():
            raise ValueError("observed counts must be non-negative")
        object.__setattr__(self, "observed", obs)

    def __eq__(self, other) -> bool:
        return (isinstance(other, ConfusionMatrix)
                and self.num_categories == other.num_categories
                and np.array_equal(self.observed, other.observed))

    @classmethod
    def from_labels(cls, y_true: Sequence[int], y_pred: Sequence[int],
                    num_categories: int) -> "ConfusionMatrix":
        true = np.asarray(y_true, dtype=np.int64)
        pred = np.asarray(y_pred, dtype=np.int64)
        if true.shape != pred.shape or true.ndim != 1 or true.size < 1:
            raise ValueError("label lists must be equal-length 1-D with at least one item")
        if true.size and (min(true.min(), pred.min()) < 0
                          or max(true.max(), pred.max()) >= num_categories):
            raise ValueError(f"categories must lie in [0, {num_categories})")
        obs = np.zeros((num_categories, num_categories), dtype=np.int64)
        np.add.at(obs, (true, pred), 1)
        return cls(num_categories=num_categories, observed=obs)

    @property
    def total(self) -> int:
        return int(self.observed.sum())

    @property
    def row_marginals(self) -> np.ndarray:
        return self.observed.sum(axis=1)

    @property
    def col_marginals(self) -> np.ndarray:
        return self.observed.sum(axis=0)


def weight_matrix(num_categories: int) -> np.ndarray:
    """Quadratic disagreement weights; symmetric, zero diagonal, 1 at corners."""
    if num_categories < 2:
        raise ValueError("weight matrix needs at least 2 categories")
    idx = np.arange(num_categories, dtype=np.float64)
    return (idx[:, None] - idx[None, :]) ** 2 / (num_categories - 1) ** 2


def expected_matrix(cm: ConfusionMatrix) -> np.ndarray:
    """Chance agreement: outer product of marginals scaled to the observed total."""
    total = cm.total
    if total <= 0:
        raise ValueError("expected matrix of an empty confusion matrix")
    return np.outer(cm.row_marginals, cm.col_marginals).astype(np.float64) / total


def qwk(y_true: Sequence[int], y_pred: Sequence[int], num_categories: int = NUM_CATEGORIES) -> float:
    """Quadratic Weighted Kappa over integer category labels.

    When sum(w * E) is zero (both lists constant and identical, the only way
    every off-diagonal marginal product can vanish) agreement is trivially
    perfect and 1.0 is returned.
    """
    cm = ConfusionMatrix.from_labels(y_true, y_pred, num_categories)
    weights = weight_matrix(num_categories)
    numerator = float((weights * cm.observed).sum())
    denominator = float((weights * expected_matrix(cm)).sum())
    if denominator == 0.0:
        return 1.0
    return 1.0 - numerator / denominator


def interpret_kappa(kappa: float) -> str:
    """Map a kappa value to its agreement band; values at 0 count as slight."""
    if not (-1.0 - 1e-9 <= kappa <= 1.0 + 1e-9):
        raise ValueError(f"kappa {kappa!r} outside [-1, 1]")
    if kappa < 0.0:
        return KAPPA_BANDS[0]
    if kappa <= 0.20:
        return KAPPA_BANDS[1]
    if kappa <= 0.40:
        return KAPPA_BANDS[2]
    if kappa <= 0.60:
        return KAPPA_BANDS[3]
    if kappa <= 0.80:
        return KAPPA_BANDS[4]
    return KAPPA_BANDS[5]


@dataclass(frozen=True, eq=False)
class TraitQwk:
    """Agreement result for a single trait."""

    kappa: float
    band: str
    confusion: ConfusionMatrix
    expected: np.ndarray


@dataclass(frozen=True, eq=False)
class QwkReport:
    """Per-trait kappas with interpretation bands plus their average."""

    traits: Mapping[str, TraitQwk]
    avg_qwk: float
    weights: np.ndarray

    def to_json_dict(self) -> dict[str, float]:
        out: dict[str, float] = {"avg_qwk": self.avg_qwk}
        for name in TRAIT_NAMES:
            out[name] = self.traits[name].kappa
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)

    def to_table(self) -> str:
        headers = ["Avg. QWK"] + [name.capitalize() for name in TRAIT_NAMES]
        values = [self.avg_qwk] + [self.traits[name].kappa for name in TRAIT_NAMES]
        cells = [f"{v:.3f}" for v in values]
        widths = [max(len(h), len(c)) for h, c in zip(headers, cells)]
        header_row = "  ".join(h.ljust(w) for h, w in zip(headers, widths))
        value_row = "  ".join(c.ljust(w) for c, w in zip(cells, widths))
        lines = [header_row, value_row, "", "Interpretation:"]
        for name in TRAIT_NAMES:
            t = self.traits[name]
            lines.append(f"  {name}: {t.band} ({t.kappa:.3f})")
        return "\n".join(lines)


def make_report(labels: Mapping[str, tuple[Sequence[int], Sequence[int]]],
                num_categories: int = NUM_CATEGORIES) -> QwkReport:
    """Build the six-trait report from per-trait (y_true, y_pred) category lists."""
    missing = [t for t in TRAIT_NAMES if t not in labels]
    if missing:
        raise ValueError(f"missing traits: {missing}")
    weights = weight_matrix(num_categories)
    traits: dict[str, TraitQwk] = {}
    for name in TRAIT_NAMES:
        y_true, y_pred = labels[name]
        cm = ConfusionMatrix.from_labels(y_true, y_pred, num_categories)
        kappa = qwk(y_true, y_pred, num_categories)
        traits[name] = TraitQwk(kappa=kappa, band=interpret_kappa(kappa),
                                confusion=cm, expected=expected_matrix(cm))
    avg = float(np.mean([traits[t].kappa for t in TRAIT_NAMES]))
    return QwkReport(traits=traits, avg_qwk=avg, weights=weights)
