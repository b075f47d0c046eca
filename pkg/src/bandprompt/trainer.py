"""Desk-scale training loop over a frozen random visual backbone.

The visual encoder is a fixed seeded linear map followed by L2
normalization; it never trains. Trainable state is exactly: the raw class
text rows, both band projection heads, the refinement aggregator, and the
granule fusion/modulation nets. The bank and all teacher latents are frozen
inputs.

Every forward pass is built on the autodiff tape in float64, so seeded runs
are bitwise reproducible and the finite-difference harness below can check
the analytic gradient of every trainable scalar.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .bands import band_stats, factorize, head_graph, uniform_init
from .bank import SemanticBank, absorb, format_bank, parse_bank
from .errors import BankStateError, NumericalDegeneracyError, ParameterError
from .granules import check_permutation, film_rows, fuse_rows
from .losses import LossBreakdown, combine, loss_cls, loss_granule, loss_sem, pseudo_labels
from .refine import Aggregator, TextFeatureSet, build_text_features, refined_text_graph
from .teacher import LatentCache

ANCHOR_POLICIES = ("raw_text_by_label", "refined_text_by_label", "image_embedding")

_HEAD_KEYS = ("w1", "b1", "w2", "b2")
_RESIDUAL_KEYS = ("w1", "b1", "w2", "b2", "ln_gain", "ln_bias")
_GROUP_KEYS = {
    "proj_low": _HEAD_KEYS,
    "proj_high": _HEAD_KEYS,
    "agg": _RESIDUAL_KEYS,
    "fuse": _RESIDUAL_KEYS,
    "film": _HEAD_KEYS,
}

# Inputs that carry values but are excluded from the trainable set by
# construction; their analytic gradient is identically zero.
FROZEN_INPUTS = ("bank.entries", "teacher.latents", "encoder.weight")


@dataclass(frozen=True)
class TrainConfig:
    embed_dim: int = 16
    kernel: int = 7
    lambda_sem: float = 0.1
    lambda_gf: float = 0.1
    lambda_gcf: float = 0.1
    bank_size: int = 64
    bank_tau: float = 0.07
    bank_momentum: float = 0.1
    bank_refresh: bool = False
    eta: float = 1.0
    logit_scale: float = 100.0
    epochs: int = 30
    batch_size: int = 16
    learning_rate: float = 1e-3
    seed: int = 0
    use_bank: bool = True
    use_sem: bool = True
    use_gf: bool = True
    use_gcf: bool = True
    anchor: str = "raw_text_by_label"

    def __post_init__(self):
        if self.embed_dim < 1:
            raise ParameterError("embed_dim must be >= 1")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ParameterError("kernel must be odd and >= 1")
        for name in ("lambda_sem", "lambda_gf", "lambda_gcf"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        if not 0.0 <= self.eta <= 1.0:
            raise ParameterError("eta must be in [0, 1]")
        if self.logit_scale <= 0:
            raise ParameterError("logit_scale must be > 0")
        if self.epochs < 0 or self.batch_size < 1:
            raise ParameterError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate < 0:
            raise ParameterError("learning_rate must be >= 0")
        if self.bank_size < 1 or self.bank_tau <= 0 or not 0 < self.bank_momentum <= 1:
            raise ParameterError("invalid bank settings")
        if self.anchor not in ANCHOR_POLICIES:
            raise ParameterError(f"anchor must be one of {ANCHOR_POLICIES}, got {self.anchor!r}")


@dataclass(frozen=True)
class ToyVisualEncoder:
    """Frozen seeded linear map R^{C*h*w} -> R^d with unit-norm outputs."""

    weight: np.ndarray
    grid: tuple[int, int, int]
    seed: int

    @classmethod
    def create(cls, dim: int, grid: tuple[int, int, int], seed: int) -> "ToyVisualEncoder":
        c, h, w = grid
        n_in = c * h * w
        rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE11C]))
        weight = rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(dim, n_in))
        return cls(weight=weight, grid=(c, h, w), seed=seed)

    def encode(self, z) -> np.ndarray:
        return self.encode_batch(np.asarray(z)[None])[0]

    def encode_batch(self, arrays) -> np.ndarray:
        x = np.asarray(arrays, dtype=np.float64)
        if x.ndim != 4 or x.shape[1:] != self.grid:
            raise ParameterError(f"expected (n, {self.grid}) latents, got {x.shape}")
        flat = x.reshape(x.shape[0], -1)
        raw = flat @ self.weight.T
        norms = np.linalg.norm(raw, axis=1, keepdims=True)
        if np.any(norms < ad.MIN_NORM):
            raise NumericalDegeneracyError("encoder produced a zero-length embedding")
        return raw / norms


@dataclass
class TrainState:
    params: dict[str, ad.Tensor]
    bank: SemanticBank | None
    encoder: ToyVisualEncoder
    optimizer: "Adam"
    num_classes: int
    step: int = 0
    step_history: list[LossBreakdown] = field(default_factory=list)
    epoch_history: list[LossBreakdown] = field(default_factory=list)

    def param_values(self) -> dict[str, np.ndarray]:
        return {k: np.array(v.value, copy=True) for k, v in self.params.items()}

    def set_param_values(self, values: dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            self.params[k].value = np.array(v, dtype=np.float64, copy=True)

    def aggregator(self) -> Aggregator:
        return Aggregator(*(self.params[f"agg.{k}"].value for k in _RESIDUAL_KEYS))

    def text_features(self, cfg: TrainConfig) -> TextFeatureSet:
        return build_text_features(
            self.params["text_raw"].value, self.bank, self.aggregator(),
            cfg.eta, use_bank=cfg.use_bank,
        )


class Adam:
    """Standard Adam; a missing gradient counts as exactly zero."""

    def __init__(self, params: dict[str, ad.Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(p.value) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.value) for k, p in params.items()}

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, p in self.params.items():
            g = p.grad if p.grad is not None else np.zeros_like(p.value)
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[name] / b1c
            v_hat = self.v[name] / b2c
            p.value = p.value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


# ---------------------------------------------------------------------------
# state construction


def _group(params: dict[str, ad.Tensor], prefix: str) -> tuple[ad.Tensor, ...]:
    return tuple(params[f"{prefix}.{k}"] for k in _GROUP_KEYS[prefix])


def _check_labels(labels: np.ndarray) -> int:
    classes = np.unique(labels)
    num = int(labels.max()) + 1 if len(labels) else 0
    if len(classes) != num or classes[0] != 0:
        raise ParameterError("labels must cover 0..K-1 with every class present")
    return num


def init_params(num_classes: int, channels: int, dim: int,
                class_means: np.ndarray, rng: np.random.Generator) -> dict[str, ad.Tensor]:
    """Trainable tensors; text rows start at per-class visual means plus noise."""
    if class_means.shape != (num_classes, dim):
        raise ParameterError("class means must be (num_classes, dim)")
    params: dict[str, np.ndarray] = {
        "text_raw": class_means + 0.01 * rng.normal(size=class_means.shape)
    }
    for prefix in ("proj_low", "proj_high"):
        params[f"{prefix}.w1"] = uniform_init(rng, channels, channels)
        params[f"{prefix}.b1"] = np.zeros(channels)
        params[f"{prefix}.w2"] = uniform_init(rng, channels, dim)
        params[f"{prefix}.b2"] = np.zeros(dim)
    for prefix in ("agg", "fuse"):
        params[f"{prefix}.w1"] = uniform_init(rng, 2 * dim, dim)
        params[f"{prefix}.b1"] = np.zeros(dim)
        params[f"{prefix}.w2"] = np.zeros((dim, dim))
        params[f"{prefix}.b2"] = np.zeros(dim)
        params[f"{prefix}.ln_gain"] = np.ones(dim)
        params[f"{prefix}.ln_bias"] = np.zeros(dim)
    params["film.w1"] = uniform_init(rng, dim, dim)
    params["film.b1"] = np.zeros(dim)
    params["film.w2"] = np.zeros((dim, 2 * dim))
    params["film.b2"] = np.zeros(2 * dim)
    return {k: ad.parameter(v) for k, v in params.items()}


@dataclass(frozen=True)
class CacheFeatures:
    """Frozen per-sample inputs: embeddings, band statistics, labels."""

    visual: np.ndarray
    phi_base: np.ndarray
    phi_detail: np.ndarray
    labels: np.ndarray


def compute_features(encoder: ToyVisualEncoder, arrays: np.ndarray,
                     labels: np.ndarray, kernel: int) -> CacheFeatures:
    visual = encoder.encode_batch(arrays)
    phi_base = np.empty((len(arrays), arrays.shape[1]))
    phi_detail = np.empty_like(phi_base)
    for i, arr in enumerate(arrays):
        pair = factorize(arr, kernel)
        phi_base[i] = band_stats(pair.base)
        phi_detail[i] = band_stats(pair.detail)
    return CacheFeatures(visual=visual, phi_base=phi_base, phi_detail=phi_detail,
                         labels=np.asarray(labels, dtype=np.intp))


def _seed_streams(seed: int) -> dict[str, np.random.SeedSequence]:
    children = np.random.SeedSequence(seed).spawn(4)
    return dict(zip(("init", "batch", "pi", "shots"), children))


def init_state(cache: LatentCache, cfg: TrainConfig) -> TrainState:
    if len(cache) == 0:
        raise ParameterError("cannot train on an empty cache")
    labels = cache.labels()
    num_classes = _check_labels(labels)
    encoder = ToyVisualEncoder.create(cfg.embed_dim, cache.grid, cfg.seed)
    arrays = cache.arrays()
    visual = encoder.encode_batch(arrays)
    means = np.stack([visual[labels == c].mean(axis=0) for c in range(num_classes)])
    streams = _seed_streams(cfg.seed)
    params = init_params(num_classes, cache.grid[0], cfg.embed_dim,
                         means, np.random.default_rng(streams["init"]))
    bank = (
        SemanticBank.create(cfg.bank_size, cfg.embed_dim, cfg.bank_momentum, cfg.bank_tau)
        if cfg.use_bank else None
    )
    return TrainState(
        params=params, bank=bank, encoder=encoder,
        optimizer=Adam(params, cfg.learning_rate), num_classes=num_classes,
    )


# ---------------------------------------------------------------------------
# forward graph


def low_band_rows(params: dict[str, ad.Tensor], phi_base: np.ndarray) -> np.ndarray:
    """Eager unit low-band embeddings for bank absorption (no gradients kept)."""
    consts = tuple(ad.constant(t.value) for t in _group(params, "proj_low"))
    return head_graph(ad.constant(phi_base), *consts).value


def forward_batch(params: dict[str, ad.Tensor], feats: CacheFeatures,
                  idx: np.ndarray, bank: SemanticBank | None, cfg: TrainConfig,
                  pi: np.ndarray | None,
                  probs_override: np.ndarray | None = None) -> tuple[ad.Tensor, LossBreakdown]:
    """Assemble the enabled objective terms for one batch on the tape.

    `probs_override` substitutes fixed pseudo-labels. The gradient checker
    needs it: the detached posteriors still *depend* on the parameters, so a
    naive finite difference would measure the very path the stop-gradient
    removes.
    """
    idx = np.asarray(idx, dtype=np.intp)
    y = feats.labels[idx]
    visual = ad.constant(feats.visual[idx])
    text_raw = params["text_raw"]

    if cfg.use_bank:
        if bank is None or not bank.full:
            raise BankStateError("forward pass needs a full bank when use_bank is on")
        text_pred = refined_text_graph(text_raw, bank.entries, bank.temperature,
                                       _group(params, "agg"))
    else:
        text_pred = text_raw

    cls_term = loss_cls(visual, text_pred, y, cfg.logit_scale)

    sem_term = None
    if cfg.use_sem:
        if probs_override is not None:
            probs = probs_override
        else:
            probs = pseudo_labels(visual.value, text_pred.value, cfg.logit_scale)
        t_low = head_graph(ad.constant(feats.phi_base[idx]), *_group(params, "proj_low"))
        sem_term = loss_sem(probs, text_raw, t_low)

    gf_term = gcf_term = None
    if cfg.use_gf or cfg.use_gcf:
        t_high = head_graph(ad.constant(feats.phi_detail[idx]), *_group(params, "proj_high"))
        if cfg.anchor == "raw_text_by_label":
            anchors = ad.take_rows(text_raw, y)
        elif cfg.anchor == "refined_text_by_label":
            anchors = ad.take_rows(text_pred, y)
        else:
            anchors = visual
        if cfg.use_gf:
            codes = fuse_rows(anchors, t_high, *_group(params, "fuse"))
            v_mod = film_rows(codes, visual, *_group(params, "film"))
            gf_term = loss_granule(v_mod, text_raw, y, cfg.logit_scale)
        if cfg.use_gcf:
            if pi is None:
                raise ParameterError("counterfactual term needs a permutation")
            pi = check_permutation(pi, len(idx))
            codes_cf = fuse_rows(anchors, ad.take_rows(t_high, pi), *_group(params, "fuse"))
            v_cf = film_rows(codes_cf, visual, *_group(params, "film"))
            gcf_term = loss_granule(v_cf, text_raw, y[pi], cfg.logit_scale)

    return combine(cls_term, sem_term, gf_term, gcf_term,
                   cfg.lambda_sem, cfg.lambda_gf, cfg.lambda_gcf)


def _apply_step(state: TrainState, feats: CacheFeatures, idx: np.ndarray,
                cfg: TrainConfig, pi: np.ndarray | None) -> LossBreakdown:
    total, parts = forward_batch(state.params, feats, idx, state.bank, cfg, pi)
    ad.zero_grads(state.params.values())
    ad.backward(total)
    state.optimizer.step()
    state.step += 1
    state.step_history.append(parts)
    return parts


def train_step(state: TrainState, batch, cfg: TrainConfig) -> tuple[TrainState, LossBreakdown]:
    """One optimizer update on an explicit (latents, labels) batch.

    The bank must already be full when enabled; `fit` handles the fill phase.
    """
    latents, labels = batch
    arrays = np.stack([np.asarray(getattr(z, "data", z), dtype=np.float64) for z in latents])
    feats = compute_features(state.encoder, arrays, labels, cfg.kernel)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, state.step, 0x9C]))
    pi = rng.permutation(len(arrays)) if cfg.use_gcf else None
    parts = _apply_step(state, feats, np.arange(len(arrays)), cfg, pi)
    return state, parts


def _stratified_order(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Round-robin over class-shuffled index queues: batches stay class-balanced."""
    classes = np.unique(labels)
    queues = {c: list(rng.permutation(np.flatnonzero(labels == c))) for c in classes}
    order: list[int] = []
    remaining = len(labels)
    while remaining:
        for c in rng.permutation(classes):
            if queues[c]:
                order.append(queues[c].pop())
                remaining -= 1
    return np.asarray(order, dtype=np.intp)


def _mean_breakdown(parts: list[LossBreakdown]) -> LossBreakdown:
    def avg(name):
        vals = [getattr(p, name) for p in parts]
        if any(v is None for v in vals):
            return None
        return float(np.mean(vals))

    first = parts[0]
    return LossBreakdown(
        cls=avg("cls"), sem=avg("sem"), granule_f=avg("granule_f"),
        granule_cf=avg("granule_cf"), lambda_sem=first.lambda_sem,
        lambda_gf=first.lambda_gf, lambda_gcf=first.lambda_gcf, total=avg("total"),
    )


def fit(cache: LatentCache, cfg: TrainConfig, epoch_callback=None) -> TrainState:
    """Full training loop: fill the bank, then stratified mini-batch updates."""
    state = init_state(cache, cfg)
    feats = compute_features(state.encoder, cache.arrays(), cache.labels(), cfg.kernel)
    streams = _seed_streams(cfg.seed)
    rng_batch = np.random.default_rng(streams["batch"])
    rng_pi = np.random.default_rng(streams["pi"])
    n = len(cache)

    for epoch in range(cfg.epochs):
        order = _stratified_order(feats.labels, rng_batch)
        epoch_parts: list[LossBreakdown] = []
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            if cfg.use_bank and state.bank is not None and not state.bank.full:
                # Fill phase: absorb only, no optimizer update.
                for row in low_band_rows(state.params, feats.phi_base[idx]):
                    absorb(state.bank, row)
                continue
            pi = rng_pi.permutation(len(idx)) if cfg.use_gcf else None
            epoch_parts.append(_apply_step(state, feats, idx, cfg, pi))
        if cfg.use_bank and cfg.bank_refresh and state.bank is not None and state.bank.full:
            sub = np.sort(rng_batch.choice(n, size=max(1, n // 2), replace=False))
            for row in low_band_rows(state.params, feats.phi_base[sub]):
                absorb(state.bank, row)
        if epoch_parts:
            state.epoch_history.append(_mean_breakdown(epoch_parts))
        if epoch_callback is not None:
            epoch_callback(state, epoch)
    return state


# ---------------------------------------------------------------------------
# gradient checking

FD_STEP = 3e-5
FD_TOLERANCE = 1e-4
# Central differences cancel ~16 digits of an O(10) objective, leaving
# ~1e-10 absolute noise at this step. Coordinates whose true gradient sits
# below the floor are compared against it instead, so measurement noise on
# near-dead coordinates cannot read as a mismatch; systematic errors on live
# coordinates are orders of magnitude above both.
_REL_FLOOR = 1e-5


@dataclass(frozen=True)
class GradCheckReport:
    per_param: dict[str, float]
    worst_param: str
    worst_error: float
    excluded: tuple[str, ...]
    step: float

    @property
    def passed(self) -> bool:
        return self.worst_error < FD_TOLERANCE


def gradient_check(state: TrainState, feats: CacheFeatures, idx: np.ndarray,
                   cfg: TrainConfig, step: float = FD_STEP) -> GradCheckReport:
    """Analytic vs central-difference gradients for every trainable scalar.

    The batch, permutation, and bank are held fixed across evaluations. Bank
    entries, teacher latents, and the encoder are reported as excluded: they
    are not in the trainable set and their analytic gradient is identically
    zero by construction.
    """
    idx = np.asarray(idx, dtype=np.intp)
    pi = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xF0])).permutation(len(idx))

    # Pin the detached posteriors at the base point so both sides of the
    # comparison honor the stop-gradient.
    probs = None
    if cfg.use_sem:
        visual = feats.visual[idx]
        if cfg.use_bank:
            text_pred = refined_text_graph(
                state.params["text_raw"], state.bank.entries, state.bank.temperature,
                _group(state.params, "agg"),
            ).value
        else:
            text_pred = state.params["text_raw"].value
        probs = pseudo_labels(visual, text_pred, cfg.logit_scale)

    def objective() -> float:
        total, _ = forward_batch(state.params, feats, idx, state.bank, cfg, pi,
                                 probs_override=probs)
        return total.item()

    total, _ = forward_batch(state.params, feats, idx, state.bank, cfg, pi,
                             probs_override=probs)
    ad.zero_grads(state.params.values())
    ad.backward(total)
    analytic = {
        k: (p.grad.copy() if p.grad is not None else np.zeros_like(p.value))
        for k, p in state.params.items()
    }

    per_param: dict[str, float] = {}
    for name, p in state.params.items():
        flat = p.value.reshape(-1)
        grad_flat = analytic[name].reshape(-1)
        worst = 0.0
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + step
            f_plus = objective()
            flat[j] = keep - step
            f_minus = objective()
            flat[j] = keep
            numeric = (f_plus - f_minus) / (2.0 * step)
            denom = max(abs(grad_flat[j]), abs(numeric), _REL_FLOOR)
            worst = max(worst, abs(grad_flat[j] - numeric) / denom)
        per_param[name] = worst

    worst_param = max(per_param, key=per_param.get)
    return GradCheckReport(
        per_param=per_param, worst_param=worst_param,
        worst_error=per_param[worst_param], excluded=FROZEN_INPUTS, step=step,
    )


def fill_bank(state: TrainState, feats: CacheFeatures) -> None:
    """Absorb low-band embeddings (cycling over samples) until the bank fills."""
    if state.bank is None or state.bank.full:
        return
    n = feats.phi_base.shape[0]
    rows = low_band_rows(state.params, feats.phi_base)
    i = 0
    while not state.bank.full:
        absorb(state.bank, rows[i % n])
        i += 1


def run_gradient_check(cache: LatentCache, cfg: TrainConfig,
                       warmup_steps: int = 2, step: float = FD_STEP) -> GradCheckReport:
    """End-to-end harness: init, fill the bank, take a few warmup steps so the
    zero-initialized residual paths carry signal, then check one batch."""
    state = init_state(cache, cfg)
    feats = compute_features(state.encoder, cache.arrays(), cache.labels(), cfg.kernel)
    if cfg.use_bank:
        fill_bank(state, feats)
    rng_batch = np.random.default_rng(_seed_streams(cfg.seed)["batch"])
    rng_pi = np.random.default_rng(_seed_streams(cfg.seed)["pi"])
    order = _stratified_order(feats.labels, rng_batch)
    idx = order[: cfg.batch_size]
    for _ in range(warmup_steps):
        pi = rng_pi.permutation(len(idx)) if cfg.use_gcf else None
        _apply_step(state, feats, idx, cfg, pi)
    return gradient_check(state, feats, idx, cfg, step=step)


# ---------------------------------------------------------------------------
# checkpoint format: optional "# resolved-config" comment header, then the
# bank dump, then one text block per parameter tensor (name, shape, rows).


def format_checkpoint(state: TrainState, header: dict[str, str] | None = None) -> str:
    lines: list[str] = []
    if header:
        lines.append("# resolved-config")
        for k in sorted(header):
            lines.append(f"# {k} = {header[k]}")
    if state.bank is not None:
        lines.append("BANK")
        lines.append(format_bank(state.bank).rstrip("\n"))
    else:
        lines.append("BANK none")
    for name in sorted(state.params):
        value = state.params[name].value
        lines.append(f"PARAM {name}")
        lines.append(" ".join(str(d) for d in value.shape))
        rows = value[None, :] if value.ndim == 1 else value
        for row in rows:
            lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def save_checkpoint(path, state: TrainState, header: dict[str, str] | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_checkpoint(state, header))


def load_checkpoint(path) -> tuple[dict[str, str], dict[str, np.ndarray], SemanticBank | None]:
    with open(path, "r", encoding="utf-8") as fh:
        raw_lines = [ln.rstrip("\n") for ln in fh]
    header: dict[str, str] = {}
    body: list[str] = []
    for ln in raw_lines:
        if ln.startswith("#"):
            text = ln[1:].strip()
            if "=" in text:
                k, _, v = text.partition("=")
                header[k.strip()] = v.strip()
            continue
        if ln.strip():
            body.append(ln)
    if not body:
        raise ParameterError(f"{path}: empty checkpoint")
    pos = 0
    bank: SemanticBank | None = None
    if body[pos] == "BANK none":
        pos += 1
    elif body[pos] == "BANK":
        size = int(body[pos + 1].split()[0])
        bank = parse_bank(body[pos + 1 : pos + 2 + size])
        pos += 2 + size
    else:
        raise ParameterError(f"{path}: expected a BANK block, got {body[pos]!r}")
    params: dict[str, np.ndarray] = {}
    while pos < len(body):
        tag = body[pos]
        if not tag.startswith("PARAM "):
            raise ParameterError(f"{path}: expected a PARAM block, got {tag!r}")
        name = tag[len("PARAM "):]
        shape = tuple(int(d) for d in body[pos + 1].split())
        n_rows = 1 if len(shape) == 1 else shape[0]
        rows = [
            np.array([float(v) for v in body[pos + 2 + r].split()])
            for r in range(n_rows)
        ]
        params[name] = np.stack(rows).reshape(shape)
        pos += 2 + n_rows
    return header, params, bank


def state_from_values(param_values: dict[str, np.ndarray], bank: SemanticBank | None,
                      encoder: ToyVisualEncoder, cfg: TrainConfig) -> TrainState:
    """Rebuild a usable state from checkpoint contents."""
    params = {k: ad.parameter(v) for k, v in param_values.items()}
    num_classes = params["text_raw"].value.shape[0]
    return TrainState(params=params, bank=bank, encoder=encoder,
                      optimizer=Adam(params, cfg.learning_rate), num_classes=num_classes)
