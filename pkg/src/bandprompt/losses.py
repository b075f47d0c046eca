"""Training objectives.

Four terms, reduced by batch mean in a fixed order:

  cls        cross-entropy of scaled visual/text logits over mixed-or-refined rows
  sem        1 - cosine between the pseudo-label-weighted expected text vector
             (over normalized raw rows) and the low-band embedding; the
             pseudo-labels are detached, so this term never trains the
             aggregator or the bank path
  granule_f  cross-entropy of modulated embeddings against raw rows
  granule_cf the same on counterfactually swapped granules with donor labels

Total = cls + l_sem * sem + l_gf * granule_f + l_gcf * granule_cf. Disabled
terms are absent (None) and contribute exactly zero to value and gradient.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .errors import DivergenceError, ParameterError

DEFAULT_LOGIT_SCALE = 100.0
DEFAULT_LAMBDA = 0.1


@dataclass(frozen=True)
class LossBreakdown:
    """Scalar values of the enabled terms plus their weights and the total."""

    cls: float
    sem: float | None
    granule_f: float | None
    granule_cf: float | None
    lambda_sem: float
    lambda_gf: float
    lambda_gcf: float
    total: float

    def check_finite(self) -> "LossBreakdown":
        for name in ("cls", "sem", "granule_f", "granule_cf", "total"):
            v = getattr(self, name)
            if v is not None and not np.isfinite(v):
                raise DivergenceError(f"loss term {name!r} is non-finite ({v})")
        return self


def total_from_parts(parts: LossBreakdown) -> float:
    """Recombine a breakdown; absent terms count as zero."""
    total = parts.cls
    if parts.sem is not None:
        total += parts.lambda_sem * parts.sem
    if parts.granule_f is not None:
        total += parts.lambda_gf * parts.granule_f
    if parts.granule_cf is not None:
        total += parts.lambda_gcf * parts.granule_cf
    return total


def _rows(x) -> ad.Tensor:
    t = ad.lift(x)
    if t.value.ndim == 1:
        return ad.lift(t.value[None, :]) if not t.requires_grad else t
    if t.value.ndim != 2:
        raise ParameterError("expected a vector or a (n, d) matrix")
    return t


def _labels(y, n: int) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(y, dtype=np.intp))
    if arr.shape != (n,):
        raise ParameterError(f"expected {n} labels, got shape {arr.shape}")
    return arr


def class_logits(visual, text_rows, scale: float) -> ad.Tensor:
    """scale * v @ rows^T for row batches of visual embeddings."""
    if scale <= 0.0:
        raise ParameterError(f"logit scale must be > 0, got {scale}")
    return ad.matmul(_rows(visual), ad.transpose(ad.lift(text_rows))) * scale


def loss_cls(visual, text_rows, labels, scale: float = DEFAULT_LOGIT_SCALE) -> ad.Tensor:
    """Mean cross-entropy of scaled logits; `text_rows` are the prediction rows."""
    logits = class_logits(visual, text_rows, scale)
    return ad.cross_entropy_mean(logits, _labels(labels, logits.value.shape[0]))


def pseudo_labels(visual, text_rows, scale: float = DEFAULT_LOGIT_SCALE) -> np.ndarray:
    """Detached per-sample class posteriors from the current logits.

    Returns a plain array on purpose: nothing downstream can backpropagate
    through it.
    """
    logits = class_logits(visual, text_rows, scale).value
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def expected_text(probs: np.ndarray, raw_rows) -> ad.Tensor:
    """Pseudo-label mixture over L2-normalized raw rows."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim == 1:
        probs = probs[None, :]
    if np.any(probs < -1e-12) or np.any(np.abs(probs.sum(axis=1) - 1.0) > 1e-9):
        raise ParameterError("pseudo-labels must be a distribution per row")
    rows = ad.l2normalize_rows(_rows(raw_rows))
    return ad.matmul(ad.constant(probs), rows)


def loss_sem(probs: np.ndarray, raw_rows, t_low) -> ad.Tensor:
    """Mean (1 - cos) between expected text vectors and low-band embeddings."""
    t_exp = expected_text(probs, raw_rows)
    t_low = _rows(t_low)
    if t_low.value.shape != t_exp.value.shape:
        raise ParameterError("low-band embeddings do not match the batch")
    return ad.tmean(ad.sub(1.0, ad.cosine_rows(t_exp, t_low)))


def loss_granule(modulated, raw_rows, labels, scale: float = DEFAULT_LOGIT_SCALE) -> ad.Tensor:
    """Cross-entropy of modulated embeddings against the raw text rows.

    Used twice: factual batches pair v_g with true labels, counterfactual
    batches pair v_gcf with donor labels y[pi].
    """
    logits = class_logits(modulated, raw_rows, scale)
    return ad.cross_entropy_mean(logits, _labels(labels, logits.value.shape[0]))


def combine(cls_term: ad.Tensor,
            sem_term: ad.Tensor | None,
            gf_term: ad.Tensor | None,
            gcf_term: ad.Tensor | None,
            lambda_sem: float = DEFAULT_LAMBDA,
            lambda_gf: float = DEFAULT_LAMBDA,
            lambda_gcf: float = DEFAULT_LAMBDA,
            ) -> tuple[ad.Tensor, LossBreakdown]:
    """Weighted total as a tape scalar plus the float breakdown."""
    total = cls_term
    if sem_term is not None:
        total = ad.add(total, sem_term * lambda_sem)
    if gf_term is not None:
        total = ad.add(total, gf_term * lambda_gf)
    if gcf_term is not None:
        total = ad.add(total, gcf_term * lambda_gcf)
    parts = LossBreakdown(
        cls=cls_term.item(),
        sem=None if sem_term is None else sem_term.item(),
        granule_f=None if gf_term is None else gf_term.item(),
        granule_cf=None if gcf_term is None else gcf_term.item(),
        lambda_sem=lambda_sem,
        lambda_gf=lambda_gf,
        lambda_gcf=lambda_gcf,
        total=total.item(),
    )
    return total, parts.check_finite()
