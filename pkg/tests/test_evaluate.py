"""Metrics, inference, and the base-to-novel protocol."""

import numpy as np
import pytest

from bandprompt.errors import ParameterError, ProtocolError
from bandprompt.evaluate import (
    EvalResult,
    accuracy_percent,
    generalization_gap,
    granule_source_accuracy,
    harmonic_mean,
    predict,
    run_base_to_novel,
    split_base_novel,
)
from bandprompt.refine import TextFeatureSet
from bandprompt.teacher import SyntheticSpec, generate_dataset
from bandprompt.trainer import TrainConfig


def test_harmonic_mean_pinned_values():
    assert harmonic_mean(82.69, 63.22) == pytest.approx(71.66, abs=0.005)
    assert harmonic_mean(83.32, 70.74) == pytest.approx(76.52, abs=0.005)
    assert harmonic_mean(50.0, 50.0) == pytest.approx(50.0, abs=1e-12)
    assert harmonic_mean(0.0, 0.0) == 0.0
    assert harmonic_mean(100.0, 0.0) == 0.0
    with pytest.raises(ParameterError):
        harmonic_mean(-1.0, 50.0)


def test_generalization_gap_pinned_values():
    assert generalization_gap(82.69, 63.22) == pytest.approx(23.546, abs=0.01)
    assert generalization_gap(80.0, 80.0) == 0.0
    assert generalization_gap(80.0, 0.0) == 100.0
    assert generalization_gap(50.0, 75.0) == pytest.approx(-50.0, abs=1e-12)
    with pytest.raises(ProtocolError):
        generalization_gap(0.0, 10.0)


def test_predict_orthogonal_rows_and_tie_breaking():
    rows = np.eye(3)
    logits, label = predict(np.array([0.0, 1.0, 0.0]), rows)
    assert label == 1 and logits.shape == (3,)
    # exactly equidistant: argmax takes the lowest class index
    _, tie = predict(np.array([1.0, 1.0, 0.0]) / np.sqrt(2.0), rows)
    assert tie == 0
    batch_logits, batch_labels = predict(np.eye(3)[[2, 0]], rows)
    assert batch_logits.shape == (2, 3)
    assert np.array_equal(batch_labels, [2, 0])
    feats = TextFeatureSet(raw=rows, refined=rows[::-1].copy(), mixed=rows[::-1].copy(), eta=1.0)
    _, flipped = predict(np.array([1.0, 0.0, 0.0]), feats)
    assert flipped == 2  # predictions read the mixed rows
    with pytest.raises(ParameterError):
        predict(np.zeros(2), rows)
    with pytest.raises(ParameterError):
        predict(np.zeros(3), rows[0])


def test_accuracy_percent():
    assert accuracy_percent(np.array([0, 1, 2, 2]), np.array([0, 1, 1, 2])) == 75.0
    with pytest.raises(ParameterError):
        accuracy_percent(np.array([0]), np.array([0, 1]))
    with pytest.raises(ParameterError):
        accuracy_percent(np.array([]), np.array([]))


def test_split_base_novel_even_odd():
    base, novel = split_base_novel(6)
    assert base == (0, 2, 4) and novel == (1, 3, 5)
    base, novel = split_base_novel(5)
    assert base == (0, 2, 4) and novel == (1, 3)
    with pytest.raises(ProtocolError):
        split_base_novel(1)


@pytest.fixture(scope="module")
def proto_setup():
    cache = generate_dataset(SyntheticSpec(num_classes=4, seed=0), n_per_class=12)
    cfg = TrainConfig(embed_dim=8, bank_size=6, batch_size=5, epochs=6, seed=0)
    return cache, cfg


def test_protocol_structure_and_bookkeeping(proto_setup):
    cache, cfg = proto_setup
    out = run_base_to_novel(cache, cfg, shots=8)
    assert out.base_classes == (0, 2) and out.novel_classes == (1, 3)
    labels = cache.labels()
    for c in range(4):
        shots = out.shot_indices[c]
        held = out.eval_indices[c]
        assert len(shots) == 8 and len(held) == 4
        assert np.intersect1d(shots, held).size == 0
        assert np.all(labels[shots] == c) and np.all(labels[held] == c)
    res = out.result
    assert res.base_count == 8 and res.novel_count == 8
    assert 0.0 <= res.novel_acc <= 100.0 and 0.0 <= res.base_acc <= 100.0
    assert res.hm == pytest.approx(harmonic_mean(res.base_acc, res.novel_acc), abs=1e-9)
    # trained base rows separate the toy classes perfectly
    assert res.base_acc == 100.0


def test_protocol_is_deterministic(proto_setup):
    cache, cfg = proto_setup
    a = run_base_to_novel(cache, cfg, shots=8)
    b = run_base_to_novel(cache, cfg, shots=8)
    assert a.result == b.result
    for name in a.state.params:
        assert np.array_equal(a.state.params[name].value, b.state.params[name].value)


def test_protocol_needs_a_held_out_pool(proto_setup):
    cache, cfg = proto_setup
    with pytest.raises(ProtocolError, match="held-out"):
        run_base_to_novel(cache, cfg, shots=12)
    with pytest.raises(ParameterError):
        run_base_to_novel(cache, cfg, shots=0)


def test_validation_selection_tracks_and_restores(proto_setup):
    cache, cfg = proto_setup
    out = run_base_to_novel(cache, cfg, shots=8, select_by_base_val=True)
    assert len(out.val_history) >= 1
    assert all(0.0 <= v <= 100.0 for v in out.val_history)
    assert np.isfinite(out.result.hm)


def test_granule_source_accuracy_bounds_and_determinism(proto_setup):
    cache, cfg = proto_setup
    out = run_base_to_novel(cache, cfg, shots=8)
    arrays = cache.arrays()
    labels = cache.labels()
    # score on base-class samples in the trained label space
    base_eval = np.concatenate([out.eval_indices[c] for c in out.base_classes])
    remap = {c: i for i, c in enumerate(out.base_classes)}
    y = np.array([remap[labels[j]] for j in base_eval])
    a = granule_source_accuracy(out.state, cfg, arrays[base_eval], y, num_batches=4)
    b = granule_source_accuracy(out.state, cfg, arrays[base_eval], y, num_batches=4)
    assert a == b
    assert 0.0 <= a <= 100.0
    with pytest.raises(ParameterError):
        granule_source_accuracy(out.state, cfg, arrays[base_eval], y, num_batches=0)
