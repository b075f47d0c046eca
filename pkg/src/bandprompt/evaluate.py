"""Base-to-novel evaluation protocol, accuracy metrics, and inference path.

Inference is deliberately narrow: a prediction is a function of the visual
embedding, the raw text rows, the bank, the aggregator, and the mixing
weight. The granule branch and the teacher latents do not exist here.

Novel classes never train. Their raw rows are frozen prototype means of a
few held-out shots, refined through the same bank/aggregator as base rows,
and scored on disjoint samples. Base and novel accuracies are computed in
their own label spaces.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from . import autodiff as ad
from .bands import head_graph
from .errors import ParameterError, ProtocolError
from .granules import check_permutation, film_rows, fuse_rows
from .refine import TextFeatureSet, build_text_features
from .teacher import LatentCache
from .trainer import (
    TrainConfig,
    TrainState,
    _check_labels,
    _group,
    _seed_streams,
    compute_features,
    fit,
)

DEFAULT_SHOTS = 16


# ---------------------------------------------------------------------------
# metrics


def harmonic_mean(base: float, novel: float) -> float:
    """2bn/(b+n) in the inputs' units; 0 when both are 0."""
    if base < 0 or novel < 0:
        raise ParameterError("accuracies must be >= 0")
    if base + novel == 0:
        return 0.0
    return 2.0 * base * novel / (base + novel)


def generalization_gap(base: float, novel: float) -> float:
    """100 * (base - novel) / base; positive means novel lags base."""
    if base <= 0:
        raise ProtocolError("generalization gap needs base accuracy > 0")
    return 100.0 * (base - novel) / base


@dataclass(frozen=True)
class EvalResult:
    base_acc: float
    novel_acc: float
    hm: float
    gap_percent: float
    base_classes: tuple[int, ...]
    novel_classes: tuple[int, ...]
    base_count: int
    novel_count: int


# ---------------------------------------------------------------------------
# inference


def predict(visual, text, scale: float = 100.0):
    """Scaled similarities against mixed text rows; argmax, ties to the lowest
    class index. Accepts a single embedding or a batch of rows."""
    rows = text.mixed if isinstance(text, TextFeatureSet) else np.asarray(text, dtype=np.float64)
    if rows.ndim != 2:
        raise ParameterError("text rows must be a (C, d) matrix")
    v = np.asarray(visual, dtype=np.float64)
    single = v.ndim == 1
    v2 = v[None, :] if single else v
    if v2.ndim != 2 or v2.shape[1] != rows.shape[1]:
        raise ParameterError("visual embeddings do not match the text dim")
    logits = scale * (v2 @ rows.T)
    labels = np.argmax(logits, axis=1)
    if single:
        return logits[0], int(labels[0])
    return logits, labels


def accuracy_percent(predicted: np.ndarray, labels: np.ndarray) -> float:
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    if predicted.shape != labels.shape or predicted.size == 0:
        raise ParameterError("predictions and labels must be equal-length and non-empty")
    return 100.0 * float(np.mean(predicted == labels))


# ---------------------------------------------------------------------------
# protocol


def split_base_novel(num_classes: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Even class indices train (base); odd classes are held out (novel)."""
    if num_classes < 2:
        raise ProtocolError(f"base-to-novel needs at least 2 classes, got {num_classes}")
    ids = range(num_classes)
    return tuple(c for c in ids if c % 2 == 0), tuple(c for c in ids if c % 2 == 1)


@dataclass
class ProtocolOutput:
    state: TrainState
    result: EvalResult
    base_classes: tuple[int, ...]
    novel_classes: tuple[int, ...]
    shot_indices: dict[int, np.ndarray]
    eval_indices: dict[int, np.ndarray]
    val_history: list[float]


def _subsample_shots(labels: np.ndarray, shots: int,
                     rng: np.random.Generator) -> tuple[dict[int, np.ndarray], dict[int, np.ndarray]]:
    shot_idx: dict[int, np.ndarray] = {}
    eval_idx: dict[int, np.ndarray] = {}
    for c in range(int(labels.max()) + 1):
        pool = np.flatnonzero(labels == c)
        if len(pool) <= shots:
            raise ProtocolError(
                f"class {c} has {len(pool)} samples; need more than {shots} "
                "to keep a held-out evaluation set"
            )
        sel = np.sort(rng.choice(pool, size=shots, replace=False))
        shot_idx[c] = sel
        eval_idx[c] = np.setdiff1d(pool, sel)
    return shot_idx, eval_idx


def run_base_to_novel(cache: LatentCache, cfg: TrainConfig,
                      shots: int = DEFAULT_SHOTS,
                      select_by_base_val: bool = False) -> ProtocolOutput:
    """Split, train on base shots, score held-out base and novel samples.

    With `select_by_base_val` a quarter of each base class's shots becomes a
    validation split; the parameters with the best (earliest on ties) post-fill
    validation accuracy are restored before scoring.
    """
    if shots < 1:
        raise ParameterError("shots must be >= 1")
    labels = cache.labels()
    num_classes = _check_labels(labels)
    base_classes, novel_classes = split_base_novel(num_classes)
    arrays = cache.arrays()

    rng = np.random.default_rng(_seed_streams(cfg.seed)["shots"])
    shot_idx, eval_idx = _subsample_shots(labels, shots, rng)
    base_map = {c: i for i, c in enumerate(base_classes)}

    val_idx: dict[int, np.ndarray] = {}
    train_idx: dict[int, np.ndarray] = {}
    for c in base_classes:
        if select_by_base_val:
            n_val = max(1, shots // 4)
            val_idx[c] = shot_idx[c][:n_val]
            train_idx[c] = shot_idx[c][n_val:]
        else:
            train_idx[c] = shot_idx[c]

    train_records = [
        replace(cache.records[j], class_label=base_map[c])
        for c in base_classes
        for j in train_idx[c]
    ]
    train_cache = LatentCache(train_records)

    val_history: list[float] = []
    best: tuple[float, dict[str, np.ndarray], np.ndarray | None] | None = None
    callback = None
    if select_by_base_val:
        v_val = np.concatenate([val_idx[c] for c in base_classes])
        val_visual = None
        val_labels = np.concatenate(
            [np.full(len(val_idx[c]), base_map[c]) for c in base_classes]
        )

        def callback(state: TrainState, epoch: int) -> None:
            nonlocal best, val_visual
            if cfg.use_bank and (state.bank is None or not state.bank.full):
                return  # still in the fill phase; nothing comparable yet
            if val_visual is None:
                val_visual = state.encoder.encode_batch(arrays[v_val])
            _, pred = predict(val_visual, state.text_features(cfg), cfg.logit_scale)
            acc = accuracy_percent(pred, val_labels)
            val_history.append(acc)
            if best is None or acc > best[0]:
                bank_copy = state.bank.entries.copy() if state.bank is not None else None
                best = (acc, state.param_values(), bank_copy)

    state = fit(train_cache, cfg, epoch_callback=callback)
    if best is not None:
        state.set_param_values(best[1])
        if state.bank is not None and best[2] is not None:
            state.bank.entries = best[2]

    # Base accuracy: held-out base samples against the trained mixed rows.
    base_eval = np.concatenate([eval_idx[c] for c in base_classes])
    base_labels = np.concatenate(
        [np.full(len(eval_idx[c]), base_map[c]) for c in base_classes]
    )
    base_visual = state.encoder.encode_batch(arrays[base_eval])
    _, base_pred = predict(base_visual, state.text_features(cfg), cfg.logit_scale)
    base_acc = accuracy_percent(base_pred, base_labels)

    # Novel accuracy: frozen prototype rows from novel shots, refined through
    # the same bank/aggregator, scored on the remaining novel samples.
    proto = np.stack([
        state.encoder.encode_batch(arrays[shot_idx[c]]).mean(axis=0)
        for c in novel_classes
    ])
    novel_text = build_text_features(proto, state.bank, state.aggregator(),
                                     cfg.eta, use_bank=cfg.use_bank)
    novel_eval = np.concatenate([eval_idx[c] for c in novel_classes])
    novel_labels = np.concatenate(
        [np.full(len(eval_idx[c]), i) for i, c in enumerate(novel_classes)]
    )
    novel_visual = state.encoder.encode_batch(arrays[novel_eval])
    _, novel_pred = predict(novel_visual, novel_text, cfg.logit_scale)
    novel_acc = accuracy_percent(novel_pred, novel_labels)

    result = EvalResult(
        base_acc=base_acc, novel_acc=novel_acc,
        hm=harmonic_mean(base_acc, novel_acc),
        gap_percent=generalization_gap(base_acc, novel_acc) if base_acc > 0 else float("nan"),
        base_classes=base_classes, novel_classes=novel_classes,
        base_count=len(base_eval), novel_count=len(novel_eval),
    )
    return ProtocolOutput(
        state=state, result=result, base_classes=base_classes,
        novel_classes=novel_classes, shot_indices=shot_idx,
        eval_indices=eval_idx, val_history=val_history,
    )


# ---------------------------------------------------------------------------
# counterfactual probe (training-time mechanism, never part of inference)


def granule_source_accuracy(state: TrainState, cfg: TrainConfig,
                            arrays: np.ndarray, labels: np.ndarray,
                            num_batches: int = 8, batch_size: int | None = None,
                            seed: int | None = None) -> float:
    """How often swapped-granule embeddings classify as their donor's class.

    Batches are drawn and permuted by a seeded generator; each position i
    keeps its own anchor but receives the high-band granule of donor pi(i),
    and a hit means the modulated embedding lands on the donor's label under
    the raw text rows. High accuracy means the modulation actually carries
    granule content instead of echoing the anchor.
    """
    if num_batches < 1:
        raise ParameterError("num_batches must be >= 1")
    labels = np.asarray(labels, dtype=np.intp)
    feats = compute_features(state.encoder, arrays, labels, cfg.kernel)
    bs = min(batch_size or cfg.batch_size, len(labels))
    rng = np.random.default_rng(
        np.random.SeedSequence([seed if seed is not None else cfg.seed, 0xCF])
    )
    text_raw = state.params["text_raw"].value
    high_params = tuple(ad.constant(t.value) for t in _group(state.params, "proj_high"))
    fuse_params = tuple(ad.constant(t.value) for t in _group(state.params, "fuse"))
    film_params = tuple(ad.constant(t.value) for t in _group(state.params, "film"))
    if cfg.anchor == "refined_text_by_label":
        anchor_rows = state.text_features(cfg).refined
    else:
        anchor_rows = text_raw

    hits = 0
    total = 0
    for _ in range(num_batches):
        idx = rng.choice(len(labels), size=bs, replace=False)
        pi = check_permutation(rng.permutation(bs), bs)
        y = feats.labels[idx]
        t_high = head_graph(ad.constant(feats.phi_detail[idx]), *high_params).value
        if cfg.anchor == "image_embedding":
            anchors = feats.visual[idx]
        else:
            anchors = anchor_rows[y]
        codes = fuse_rows(ad.constant(anchors), ad.constant(t_high[pi]), *fuse_params)
        v_cf = film_rows(codes, ad.constant(feats.visual[idx]), *film_params).value
        _, pred = predict(v_cf, text_raw, cfg.logit_scale)
        hits += int(np.sum(pred == y[pi]))
        total += bs
    return 100.0 * hits / total
