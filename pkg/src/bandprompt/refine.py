"""Bank-conditioned refinement of class-text rows.

Each class row t_c retrieves a context r_c from the bank, and a residual
aggregator folds the pair back into the row:

    refined_c = LayerNorm(t_c + Agg([t_c ; r_c]))

The mixed rows used for prediction are a convex combination
(1 - eta) * raw + eta * refined. No further normalization is applied after
the LayerNorm; the mixed rows are consumed as-is by the logit layer.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .bands import uniform_init
from .bank import SemanticBank, retrieve_rows
from .errors import BankStateError, ParameterError

LAYER_NORM_EPS = 1e-5


@dataclass
class Aggregator:
    """Residual fusion map R^{2d} -> R^d with a trailing LayerNorm."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    ln_gain: np.ndarray
    ln_bias: np.ndarray

    @classmethod
    def create(cls, dim: int, rng: np.random.Generator) -> "Aggregator":
        # Zero final affine: refinement starts as plain LayerNorm(t).
        return cls(
            w1=uniform_init(rng, 2 * dim, dim),
            b1=np.zeros(dim),
            w2=np.zeros((dim, dim)),
            b2=np.zeros(dim),
            ln_gain=np.ones(dim),
            ln_bias=np.zeros(dim),
        )

    @property
    def params(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2, self.ln_gain, self.ln_bias)


@dataclass(frozen=True)
class TextFeatureSet:
    """Raw, refined, and mixed class-text rows plus the mixing weight."""

    raw: np.ndarray
    refined: np.ndarray
    mixed: np.ndarray
    eta: float

    def __post_init__(self):
        if not (self.raw.shape == self.refined.shape == self.mixed.shape):
            raise ParameterError("text feature matrices must share one shape")
        if self.raw.ndim != 2:
            raise ParameterError("text features must be (num_classes, d)")
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError(f"eta must be in [0, 1], got {self.eta}")

    @property
    def num_classes(self) -> int:
        return self.raw.shape[0]


def refine_rows(rows, contexts, w1, b1, w2, b2, ln_gain, ln_bias) -> ad.Tensor:
    """Tape composite: LayerNorm(rows + MLP([rows ; contexts]))."""
    rows = ad.lift(rows)
    joint = ad.concat_cols(rows, ad.lift(contexts))
    residual = ad.mlp_rows(joint, w1, b1, w2, b2)
    return ad.layer_norm_rows(ad.add(rows, residual), ln_gain, ln_bias, LAYER_NORM_EPS)


def refined_text_graph(raw_rows, bank_entries: np.ndarray, temperature: float,
                       agg_params) -> ad.Tensor:
    """Retrieval plus refinement for every class row at once."""
    raw_rows = ad.lift(raw_rows)
    _, contexts = retrieve_rows(bank_entries, raw_rows, temperature)
    return refine_rows(raw_rows, contexts, *agg_params)


def refine(t: np.ndarray, r: np.ndarray, agg: Aggregator) -> np.ndarray:
    """Eager single-row refinement."""
    t = np.asarray(t, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if t.shape != r.shape or t.ndim != 1:
        raise ParameterError("row and context must be flat vectors of equal length")
    out = refine_rows(t[None, :], r[None, :], *(ad.constant(p) for p in agg.params))
    return out.value[0]


def mix(raw: np.ndarray, refined: np.ndarray, eta: float) -> np.ndarray:
    """(1 - eta) * raw + eta * refined; endpoints return exact copies."""
    if not 0.0 <= eta <= 1.0:
        raise ParameterError(f"eta must be in [0, 1], got {eta}")
    if eta == 0.0:
        return np.array(raw, dtype=np.float64, copy=True)
    if eta == 1.0:
        return np.array(refined, dtype=np.float64, copy=True)
    return (1.0 - eta) * np.asarray(raw, np.float64) + eta * np.asarray(refined, np.float64)


def build_text_features(raw: np.ndarray, bank: SemanticBank | None, agg: Aggregator,
                        eta: float, use_bank: bool = True) -> TextFeatureSet:
    """Fresh feature set from current rows/bank/aggregator state.

    With the bank disabled the refined rows are defined to equal the raw rows,
    so every downstream consumer collapses to the raw-text baseline.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not use_bank:
        return TextFeatureSet(raw=raw.copy(), refined=raw.copy(), mixed=raw.copy(), eta=eta)
    if bank is None or not bank.full:
        raise BankStateError("refinement needs a full bank")
    refined = refined_text_graph(
        ad.constant(raw), bank.entries, bank.temperature,
        tuple(ad.constant(p) for p in agg.params),
    ).value
    return TextFeatureSet(raw=raw.copy(), refined=refined, mixed=mix(raw, refined, eta), eta=eta)
