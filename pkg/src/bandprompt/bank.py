"""Momentum prototype bank over low-band embeddings.

The bank holds M unit vectors. It fills sequentially with the first M
arrivals; once full, each new vector updates its nearest entry (largest inner
product, ties to the lowest index) by an EMA step and the entry is
re-normalized. The bank is storage, not a module: entries never receive
gradients, and retrieval differentiates only through the query.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import BankStateError, NumericalDegeneracyError, ParameterError

DEFAULT_SIZE = 64
DEFAULT_MOMENTUM = 0.1
DEFAULT_TEMPERATURE = 0.07

_UNIT_TOL = 1e-5


@dataclass(frozen=True)
class RetrievalResult:
    """Softmax retrieval weights over entries and the blended context vector."""

    weights: np.ndarray
    context: np.ndarray


@dataclass
class SemanticBank:
    entries: np.ndarray
    momentum: float = DEFAULT_MOMENTUM
    temperature: float = DEFAULT_TEMPERATURE
    fill_count: int = 0

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=np.float64)
        if self.entries.ndim != 2 or min(self.entries.shape) < 1:
            raise ParameterError(f"bank entries must be (M, d), got {self.entries.shape}")
        if not (0.0 < self.momentum <= 1.0):
            raise ParameterError(f"momentum must be in (0, 1], got {self.momentum}")
        if self.temperature <= 0.0:
            raise ParameterError(f"temperature must be > 0, got {self.temperature}")
        if not 0 <= self.fill_count <= self.size:
            raise ParameterError("fill_count out of range")

    @classmethod
    def create(cls, size: int = DEFAULT_SIZE, dim: int = 16,
               momentum: float = DEFAULT_MOMENTUM,
               temperature: float = DEFAULT_TEMPERATURE) -> "SemanticBank":
        if size < 1 or dim < 1:
            raise ParameterError("bank size and dim must be >= 1")
        return cls(entries=np.zeros((size, dim)), momentum=momentum,
                   temperature=temperature, fill_count=0)

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    @property
    def dim(self) -> int:
        return self.entries.shape[1]

    @property
    def full(self) -> bool:
        return self.fill_count == self.size

    @property
    def mode(self) -> str:
        return "ema" if self.full else "filling"


def _check_unit(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    if vec.ndim != 1:
        raise ParameterError("bank input must be a flat vector")
    if not np.all(np.isfinite(vec)):
        raise NumericalDegeneracyError("bank input has non-finite values")
    norm = float(np.linalg.norm(vec))
    if abs(norm - 1.0) > _UNIT_TOL:
        raise ParameterError(f"bank input must be unit norm, got {norm:.6f}")
    return vec


def absorb(bank: SemanticBank, t_low: np.ndarray) -> SemanticBank:
    """Fill the next slot, or EMA-update the nearest entry once full."""
    vec = _check_unit(t_low)
    if vec.shape[0] != bank.dim:
        raise ParameterError(f"input dim {vec.shape[0]} does not match bank dim {bank.dim}")
    if not bank.full:
        bank.entries[bank.fill_count] = vec
        bank.fill_count += 1
        return bank
    sims = bank.entries @ vec
    slot = int(np.argmax(sims))  # first maximum wins ties
    updated = (1.0 - bank.momentum) * bank.entries[slot] + bank.momentum * vec
    norm = float(np.linalg.norm(updated))
    if norm < ad.MIN_NORM:
        raise NumericalDegeneracyError(
            f"EMA update produced a zero-length entry at slot {slot}"
        )
    bank.entries[slot] = updated / norm
    return bank


def refresh(bank: SemanticBank, stream) -> SemanticBank:
    """Absorb each element of `stream` in order; empty stream is a no-op."""
    for vec in stream:
        absorb(bank, vec)
    return bank


def retrieval_scores(entries: np.ndarray, queries: ad.Tensor, temperature: float) -> ad.Tensor:
    """(n, M) inner-product scores over frozen entries, divided by temperature."""
    return ad.matmul(queries, ad.constant(entries.T)) * (1.0 / temperature)


def retrieve_rows(entries: np.ndarray, queries, temperature: float) -> tuple[ad.Tensor, ad.Tensor]:
    """Softmax weights and contexts for a batch of query rows (tape composite)."""
    weights = ad.softmax_rows(retrieval_scores(entries, ad.lift(queries), temperature))
    context = ad.matmul(weights, ad.constant(entries))
    return weights, context


def soft_retrieve(bank: SemanticBank, t: np.ndarray) -> RetrievalResult:
    """Temperature-softmax attention over entries for one query vector."""
    if not bank.full:
        raise BankStateError(
            f"retrieval needs a full bank ({bank.fill_count}/{bank.size} filled)"
        )
    vec = np.asarray(t, dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != bank.dim:
        raise ParameterError("query must be a flat vector matching the bank dim")
    weights, context = retrieve_rows(bank.entries, vec[None, :], bank.temperature)
    return RetrievalResult(weights=weights.value[0], context=context.value[0])


# ---------------------------------------------------------------------------
# dump format: header "M d mu tau", then one line of d decimals per entry


def format_bank(bank: SemanticBank) -> str:
    lines = [f"{bank.size} {bank.dim} {bank.momentum:.17g} {bank.temperature:.17g}"]
    for row in bank.entries:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def write_bank(bank: SemanticBank, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_bank(bank))


def parse_bank(lines: list[str], fill_count: int | None = None) -> SemanticBank:
    if not lines:
        raise ParameterError("empty bank dump")
    head = lines[0].split()
    if len(head) != 4:
        raise ParameterError(f"malformed bank header: {lines[0]!r}")
    size, dim = int(head[0]), int(head[1])
    momentum, temperature = float(head[2]), float(head[3])
    if len(lines) < 1 + size:
        raise ParameterError(f"bank dump has {len(lines) - 1} rows, expected {size}")
    entries = np.array(
        [[float(v) for v in lines[1 + i].split()] for i in range(size)], dtype=np.float64
    )
    if entries.shape != (size, dim):
        raise ParameterError("bank dump rows do not match the declared shape")
    return SemanticBank(
        entries=entries,
        momentum=momentum,
        temperature=temperature,
        fill_count=size if fill_count is None else fill_count,
    )


def read_bank(path) -> SemanticBank:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    return parse_bank(lines)
