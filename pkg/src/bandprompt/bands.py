"""Low-pass/residual band factorization and the per-band projection heads.

A stride-1 k x k box mean with replicate padding splits a latent into a
smooth base band and the residual detail band; the residual definition makes
reconstruction exact. Band statistics reduce each band to a per-channel mean
absolute activation, and small tanh MLP heads map those statistics onto the
unit sphere of the text embedding space. Latents are frozen inputs: only head
parameters ever receive gradients.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from . import autodiff as ad
from .errors import ParameterError
from .teacher import LatentTensor


def _as_latent_array(z) -> np.ndarray:
    if isinstance(z, LatentTensor):
        z = z.data
    arr = np.asarray(z)
    if arr.ndim != 3:
        raise ParameterError(f"expected a (C, h, w) latent, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class BandPair:
    """base + detail == source, with `kernel` recording the smoothing width."""

    base: np.ndarray
    detail: np.ndarray
    kernel: int

    def __post_init__(self):
        if self.base.shape != self.detail.shape:
            raise ParameterError("band shapes disagree")


@dataclass(frozen=True)
class BandEmbedding:
    """A unit-norm d-vector tagged with the band it came from."""

    vector: np.ndarray
    band: str

    def __post_init__(self):
        v = np.asarray(self.vector, dtype=np.float64)
        if v.ndim != 1:
            raise ParameterError("band embedding must be a flat vector")
        if self.band not in ("low", "high"):
            raise ParameterError(f"band must be 'low' or 'high', got {self.band!r}")
        if abs(float(np.linalg.norm(v)) - 1.0) > 1e-6:
            raise ParameterError("band embedding must be unit norm")
        object.__setattr__(self, "vector", v)


def smooth_lowpass(z, k: int) -> np.ndarray:
    """Stride-1 k x k mean per channel, replicate (edge) padding, float64 out."""
    arr = _as_latent_array(z)
    _, h, w = arr.shape
    if k < 1 or k % 2 == 0:
        raise ParameterError(f"kernel must be odd and >= 1, got {k}")
    if k > min(h, w):
        raise ParameterError(f"kernel {k} exceeds spatial extent {min(h, w)}")
    arr = arr.astype(np.float64)
    if k == 1:
        return arr.copy()
    return uniform_filter(arr, size=(1, k, k), mode="nearest")


def factorize(z, k: int) -> BandPair:
    """Split into base (smoothed) and detail (residual) bands.

    Latents are float32-valued, so the base is rounded to float32 granularity:
    the difference z - base then spans at most 53 mantissa bits and the
    residual subtraction is exact, making base + detail == z bitwise. A full
    53-bit base at a higher exponent than z could not subtract exactly.
    """
    arr = _as_latent_array(z).astype(np.float64)
    base = smooth_lowpass(arr, k).astype(np.float32).astype(np.float64)
    detail = arr - base
    bad = (base + detail) != arr
    if np.any(bad):
        # A box mean many binades below its cell cannot subtract exactly at
        # any mantissa width; zeroing it moves the base by < 2^-20 |cell|.
        tiny = bad & (np.abs(base) <= np.abs(arr) * 2.0**-20)
        base[tiny] = 0.0
        detail[tiny] = arr[tiny]
    return BandPair(base=base, detail=detail, kernel=k)


def band_stats(z) -> np.ndarray:
    """Per-channel mean absolute activation: a length-C vector."""
    arr = _as_latent_array(z).astype(np.float64)
    return np.abs(arr).mean(axis=(1, 2))


@dataclass
class ProjectionHead:
    """Affine C->C, tanh, affine C->d; outputs are L2-normalized."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    band: str

    @classmethod
    def create(cls, channels: int, dim: int, band: str, rng: np.random.Generator) -> "ProjectionHead":
        if band not in ("low", "high"):
            raise ParameterError(f"band must be 'low' or 'high', got {band!r}")
        return cls(
            w1=uniform_init(rng, channels, channels),
            b1=np.zeros(channels),
            w2=uniform_init(rng, channels, dim),
            b2=np.zeros(dim),
            band=band,
        )

    @property
    def params(self) -> tuple[np.ndarray, ...]:
        return (self.w1, self.b1, self.w2, self.b2)


def uniform_init(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    """Small uniform weights scaled by 1/sqrt(fan_in)."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


def head_graph(stats, w1, b1, w2, b2) -> ad.Tensor:
    """Tape composite mapping (n, C) statistics rows to unit (n, d) rows."""
    return ad.l2normalize_rows(ad.mlp_rows(stats, w1, b1, w2, b2))


def project_band(head: ProjectionHead, stats: np.ndarray) -> BandEmbedding:
    """Eager head application for a single statistics vector."""
    stats = np.asarray(stats, dtype=np.float64)
    if stats.ndim != 1:
        raise ParameterError("band statistics must be a flat vector")
    if stats.shape[0] != head.w1.shape[0]:
        raise ParameterError(
            f"statistics length {stats.shape[0]} does not match head fan-in {head.w1.shape[0]}"
        )
    out = head_graph(stats[None, :], *(ad.constant(p) for p in head.params))
    return BandEmbedding(vector=out.value[0], band=head.band)
