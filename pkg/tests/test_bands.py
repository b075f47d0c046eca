"""Box-filter factorization and band projection heads."""

import numpy as np
import pytest

import bandprompt.autodiff as ad
from bandprompt.bands import (
    BandEmbedding,
    ProjectionHead,
    band_stats,
    factorize,
    head_graph,
    project_band,
    smooth_lowpass,
    uniform_init,
)
from bandprompt.errors import NumericalDegeneracyError, ParameterError


def brute_force_box_mean(arr, k):
    """Independent oracle: per-channel k*k mean with edge replication."""
    c, h, w = arr.shape
    pad = k // 2
    out = np.empty_like(arr, dtype=np.float64)
    for ch in range(c):
        padded = np.pad(arr[ch].astype(np.float64), pad, mode="edge")
        for i in range(h):
            for j in range(w):
                out[ch, i, j] = padded[i : i + k, j : j + k].mean()
    return out


def test_smooth_matches_brute_force_oracle():
    rng = np.random.default_rng(0)
    for k in (1, 3, 5, 7):
        z = rng.normal(size=(2, 9, 11))
        got = smooth_lowpass(z, k)
        assert np.allclose(got, brute_force_box_mean(z, k), atol=1e-12)


def test_smooth_pinned_3x3_values():
    z = np.arange(1.0, 10.0).reshape(1, 3, 3)
    got = smooth_lowpass(z, 3)
    assert got[0, 1, 1] == pytest.approx(5.0, abs=1e-12)
    # replicate-padded corner window: [[1,1,2],[1,1,2],[4,4,5]]
    assert got[0, 0, 0] == pytest.approx(21.0 / 9.0, abs=1e-12)


def test_smooth_identity_and_constant_cases():
    rng = np.random.default_rng(1)
    z = rng.normal(size=(3, 6, 6))
    assert np.array_equal(smooth_lowpass(z, 1), z)
    const = np.full((2, 8, 8), 3.25)
    for k in (3, 5, 7):
        sm = smooth_lowpass(const, k)
        assert np.max(np.abs(sm - 3.25)) <= 1e-6
        assert np.max(np.abs(factorize(const, k).detail)) <= 1e-6


def test_smooth_is_linear():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(1, 10, 10))
    b = rng.normal(size=(1, 10, 10))
    lhs = smooth_lowpass(2.0 * a + 0.5 * b, 5)
    rhs = 2.0 * smooth_lowpass(a, 5) + 0.5 * smooth_lowpass(b, 5)
    assert np.max(np.abs(lhs - rhs)) < 1e-9


def test_smooth_contracts_energy():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(2, 12, 12))
    z -= z.mean()
    for k in (3, 5, 7):
        assert np.sum(smooth_lowpass(z, k) ** 2) <= np.sum(z * z) + 1e-9


def test_smooth_rejects_bad_kernels():
    z = np.zeros((1, 8, 8))
    for k in (0, 2, -1, 9):
        with pytest.raises(ParameterError):
            smooth_lowpass(z, k)


def test_factorize_reconstructs_bitwise():
    # latents are float32-valued; that granularity is what makes the
    # residual subtraction exact rather than merely close
    rng = np.random.default_rng(4)
    for k in (1, 3, 7):
        z = rng.normal(size=(4, 16, 16)).astype(np.float32).astype(np.float64)
        pair = factorize(z, k)
        assert np.array_equal(pair.base + pair.detail, z)
        assert pair.kernel == k
        scale = np.max(np.abs(z))
        assert np.max(np.abs(pair.base - brute_force_box_mean(z, k))) <= 1e-7 * scale
    z = np.arange(1.0, 10.0).reshape(1, 3, 3)
    assert factorize(z, 3).detail[0, 1, 1] == 0.0


def test_factorize_handles_near_zero_box_means():
    # rows alternating +-v have exact zero interior means; offsetting one cell
    # by a tiny amount produces means far below the cell scale, which the
    # factorization must still reconstruct bitwise
    z = np.tile(np.array([1.0, -1.0], dtype=np.float32), (1, 8, 8))
    z[0, 3, 3] += np.float32(3e-7)
    z = z.astype(np.float64)
    pair = factorize(z, 3)
    assert np.array_equal(pair.base + pair.detail, z)


def test_band_stats_values_and_symmetry():
    z = np.array([[[1.0, -1.0], [2.0, -2.0]]])
    assert np.allclose(band_stats(z), [1.5], atol=1e-12)
    assert np.array_equal(band_stats(np.zeros((3, 4, 4))), np.zeros(3))
    rng = np.random.default_rng(5)
    z = rng.normal(size=(2, 6, 6))
    assert np.array_equal(band_stats(z), band_stats(-z))


def test_uniform_init_bounds():
    rng = np.random.default_rng(6)
    w = uniform_init(rng, 16, 8)
    assert w.shape == (16, 8)
    assert np.max(np.abs(w)) <= 1.0 / 4.0


def test_head_outputs_unit_rows():
    rng = np.random.default_rng(7)
    head = ProjectionHead.create(channels=4, dim=8, rng=rng, band="low")
    stats = np.abs(rng.normal(size=4))
    emb = project_band(head, stats)
    assert isinstance(emb, BandEmbedding)
    assert abs(np.linalg.norm(emb.vector) - 1.0) <= 1e-6
    assert emb.band == "low"


def test_zero_weight_head_returns_normalized_bias():
    rng = np.random.default_rng(8)
    head = ProjectionHead.create(channels=3, dim=4, rng=rng, band="high")
    zero = ProjectionHead(
        w1=np.zeros_like(head.w1), b1=np.zeros_like(head.b1),
        w2=np.zeros_like(head.w2), b2=np.array([3.0, 0.0, 4.0, 0.0]),
        band="high",
    )
    for _ in range(5):
        stats = np.abs(rng.normal(size=3))
        emb = project_band(zero, stats)
        assert np.allclose(emb.vector, [0.6, 0.0, 0.8, 0.0], atol=1e-12)


def test_degenerate_projection_raises():
    head = ProjectionHead(
        w1=np.zeros((2, 2)), b1=np.zeros(2), w2=np.zeros((2, 3)), b2=np.zeros(3),
        band="low",
    )
    with pytest.raises(NumericalDegeneracyError):
        project_band(head, np.ones(2))


def test_head_jacobian_matches_finite_differences():
    rng = np.random.default_rng(9)
    head = ProjectionHead.create(channels=3, dim=5, rng=rng, band="low")
    stats = np.abs(rng.normal(size=(2, 3))) + 0.1
    params = [ad.parameter(p) for p in (head.w1, head.b1, head.w2, head.b2)]
    probe = ad.constant(rng.normal(size=(2, 5)))

    def scalar():
        return ad.tsum(ad.mul(head_graph(ad.constant(stats), *params), probe))

    root = scalar()
    ad.backward(root)
    step = 1e-5
    for p in params:
        flat = p.value.reshape(-1)
        grad = p.grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            fp = scalar().item()
            flat[i] = keep - step
            fm = scalar().item()
            flat[i] = keep
            num = (fp - fm) / (2 * step)
            assert abs(grad[i] - num) / max(abs(grad[i]), abs(num), 1e-5) < 1e-4


def test_project_band_validates_input():
    rng = np.random.default_rng(10)
    head = ProjectionHead.create(channels=3, dim=4, rng=rng, band="low")
    with pytest.raises(ParameterError):
        project_band(head, np.ones(5))
    with pytest.raises(ParameterError):
        project_band(head, np.ones((2, 3)))
