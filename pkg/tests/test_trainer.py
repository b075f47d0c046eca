"""Training loop: encoder, state init, steps, fill phase, checkpoints."""

import numpy as np
import pytest

from bandprompt.errors import BankStateError, ParameterError
from bandprompt.teacher import LatentCache, SyntheticSpec, generate_dataset
from bandprompt.trainer import (
    FROZEN_INPUTS,
    ToyVisualEncoder,
    TrainConfig,
    compute_features,
    fill_bank,
    fit,
    init_state,
    load_checkpoint,
    run_gradient_check,
    save_checkpoint,
    state_from_values,
    train_step,
)

GRID = (4, 16, 16)


@pytest.fixture(scope="module")
def cache():
    return generate_dataset(SyntheticSpec(num_classes=4, seed=0), n_per_class=8)


def small_cfg(**kw):
    base = dict(embed_dim=8, bank_size=6, batch_size=5, epochs=2, seed=0)
    base.update(kw)
    return TrainConfig(**base)


def test_encoder_outputs_unit_rows_deterministically(cache):
    enc_a = ToyVisualEncoder.create(8, GRID, seed=3)
    enc_b = ToyVisualEncoder.create(8, GRID, seed=3)
    assert np.array_equal(enc_a.weight, enc_b.weight)
    arrays = cache.arrays()[:6].astype(np.float64)
    out = enc_a.encode_batch(arrays)
    assert out.shape == (6, 8)
    assert np.max(np.abs(np.linalg.norm(out, axis=1) - 1.0)) <= 1e-12
    assert np.array_equal(out, enc_b.encode_batch(arrays))
    other = ToyVisualEncoder.create(8, GRID, seed=4)
    assert not np.array_equal(enc_a.weight, other.weight)


def test_encoder_power_of_two_scale_invariance_is_bitwise(cache):
    # *2 multiplies every intermediate by an exact power of two, which
    # commutes with rounding, so the normalized output is identical
    enc = ToyVisualEncoder.create(8, GRID, seed=0)
    arrays = cache.arrays()[:4].astype(np.float64)
    assert np.array_equal(enc.encode_batch(arrays), enc.encode_batch(2.0 * arrays))


def test_encoder_validates_input(cache):
    enc = ToyVisualEncoder.create(8, GRID, seed=0)
    with pytest.raises(ParameterError):
        enc.encode_batch(np.zeros((2, 4, 8, 8)))
    with pytest.raises(ParameterError):
        enc.encode_batch(np.zeros(GRID))


def test_init_state_is_seeded_and_bitwise_repeatable(cache):
    cfg = small_cfg()
    a = init_state(cache, cfg)
    b = init_state(cache, cfg)
    assert sorted(a.params) == sorted(b.params)
    for name in a.params:
        assert np.array_equal(a.params[name].value, b.params[name].value), name
    assert a.num_classes == 4
    assert not a.bank.full


def test_init_rejects_gapped_labels(cache):
    gapped = LatentCache(records=[r for r in cache.records if r.class_label != 1])
    with pytest.raises(ParameterError):
        init_state(gapped, small_cfg())
    with pytest.raises(ParameterError):
        init_state(LatentCache(records=[]), small_cfg())


def test_train_step_requires_a_full_bank(cache):
    cfg = small_cfg()
    state = init_state(cache, cfg)
    batch = ([r.latent for r in cache.records[:5]],
             [r.class_label for r in cache.records[:5]])
    with pytest.raises(BankStateError):
        train_step(state, batch, cfg)


def test_zero_learning_rate_leaves_parameters_fixed(cache):
    cfg = small_cfg(learning_rate=0.0)
    state = init_state(cache, cfg)
    feats = compute_features(state.encoder, cache.arrays(), cache.labels(), cfg.kernel)
    fill_bank(state, feats)
    before = state.param_values()
    batch = ([r.latent for r in cache.records[:5]],
             [r.class_label for r in cache.records[:5]])
    state, parts = train_step(state, batch, cfg)
    assert np.isfinite(parts.total)
    for name, value in state.param_values().items():
        assert np.array_equal(value, before[name]), name


def test_disabled_terms_collapse_total_onto_cls(cache):
    cfg = small_cfg(use_sem=False, use_gf=False, use_gcf=False)
    state = init_state(cache, cfg)
    feats = compute_features(state.encoder, cache.arrays(), cache.labels(), cfg.kernel)
    fill_bank(state, feats)
    batch = ([r.latent for r in cache.records[:5]],
             [r.class_label for r in cache.records[:5]])
    _, parts = train_step(state, batch, cfg)
    assert parts.sem is None and parts.granule_f is None and parts.granule_cf is None
    assert parts.total == parts.cls


def test_fit_fill_phase_consumes_whole_batches(cache):
    # 32 samples, batch 5 -> 7 batches/epoch; bank of 6 needs two fill
    # batches (5 + 1 absorbs), which take no optimizer step
    cfg = small_cfg(epochs=3)
    state = fit(cache, cfg)
    assert state.bank.full
    assert state.step == 3 * 7 - 2
    assert len(state.epoch_history) == 3
    assert len(state.step_history) == state.step


def test_fit_trend_decreases_cls(cache):
    cfg = small_cfg(epochs=12, learning_rate=3e-3, seed=1)
    state = fit(cache, cfg)
    first = np.mean([p.cls for p in state.epoch_history[:3]])
    last = np.mean([p.cls for p in state.epoch_history[-3:]])
    assert last < first


def test_fit_is_bitwise_deterministic(cache):
    cfg = small_cfg(epochs=3)
    a = fit(cache, cfg)
    b = fit(cache, cfg)
    for name in a.params:
        assert np.array_equal(a.params[name].value, b.params[name].value), name
    assert np.array_equal(a.bank.entries, b.bank.entries)


def test_epochs_zero_is_an_initialized_no_op(cache):
    state = fit(cache, small_cfg(epochs=0))
    assert state.step == 0 and state.epoch_history == []


def test_counterfactual_flag_changes_film_training(cache):
    on = fit(cache, small_cfg(epochs=3, use_gcf=True))
    off = fit(cache, small_cfg(epochs=3, use_gcf=False))
    assert not np.array_equal(on.params["film.w2"].value, off.params["film.w2"].value)
    assert off.step_history[-1].granule_cf is None
    assert on.step_history[-1].granule_cf is not None


def test_bank_refresh_differs_only_in_entries(cache):
    plain = fit(cache, small_cfg(epochs=2))
    refreshed = fit(cache, small_cfg(epochs=2, bank_refresh=True))
    assert not np.array_equal(plain.bank.entries, refreshed.bank.entries)


def test_checkpoint_round_trip_is_exact(cache, tmp_path):
    cfg = small_cfg(epochs=2)
    state = fit(cache, cfg)
    path = tmp_path / "ckpt.txt"
    save_checkpoint(path, state, header={"seed": "0", "embed_dim": "8"})
    header, values, bank = load_checkpoint(path)
    assert header == {"seed": "0", "embed_dim": "8"}
    assert sorted(values) == sorted(state.params)
    for name, arr in values.items():
        ref = state.params[name].value
        assert arr.shape == ref.shape
        assert np.array_equal(arr, ref), name
    assert np.array_equal(bank.entries, state.bank.entries)
    assert bank.momentum == state.bank.momentum

    rebuilt = state_from_values(values, bank, state.encoder, cfg)
    feats_a = state.text_features(cfg)
    feats_b = rebuilt.text_features(cfg)
    assert np.array_equal(feats_a.mixed, feats_b.mixed)


def test_checkpoint_without_bank(cache, tmp_path):
    cfg = small_cfg(use_bank=False)
    state = fit(cache, cfg)
    path = tmp_path / "nobank.txt"
    save_checkpoint(path, state)
    header, values, bank = load_checkpoint(path)
    assert header == {} and bank is None
    assert "text_raw" in values


def test_checkpoint_rejects_garbage(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("PARAM text_raw\n2 2\n0 0\n0 0\n")
    with pytest.raises(ParameterError, match="BANK"):
        load_checkpoint(bad)
    empty = tmp_path / "empty.txt"
    empty.write_text("# resolved-config\n# seed = 0\n")
    with pytest.raises(ParameterError):
        load_checkpoint(empty)


def test_gradient_check_passes_and_reports_frozen_inputs(cache):
    cfg = small_cfg()
    report = run_gradient_check(cache, cfg)
    assert report.passed, (report.worst_param, report.worst_error)
    assert report.excluded == FROZEN_INPUTS
    assert set(report.per_param) == set(init_state(cache, cfg).params)
