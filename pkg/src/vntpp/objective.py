"""Training loss (reconstruction, KL, event log-intensity, Monte Carlo compensator) and the trainer."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Batch, Dataset, batchify, trainable
from .errors import NonFiniteError
from .model import VNTPP, intensity_tensor, kl_terms, reconstruction_terms

log = logging.getLogger(__name__)


@dataclass
class MCEstimate:
    value: Tensor | np.ndarray | float
    stderr: np.ndarray | float


def mc_compensator(intensity: Callable, spans, M: int, rng: np.random.Generator, weights=None) -> MCEstimate:
    """Monte Carlo integral ``sum_i span_i * mean_m lambda_i(u_m span_i)`` over the last axis.

    ``intensity(s)`` receives the elapsed times ``s`` of shape ``spans.shape + (M,)``
    (``s = u * span`` with ``u ~ Unif(0, 1)``) and returns the total intensity
    at those points, as an array or a differentiable Tensor. ``weights``
    (same shape as ``spans``) switches intervals off. Returns the estimate and
    its standard error, both reduced over the last axis.
    """
    if M < 1:
        raise ValueError("M must be >= 1")
    spans = np.asarray(spans, dtype=float)
    u = rng.random(spans.shape + (M,))
    lam = intensity(u * spans[..., None])
    w = spans / M if weights is None else spans * np.asarray(weights, dtype=float) / M
    lam_data = lam.data if isinstance(lam, Tensor) else np.asarray(lam)
    if isinstance(lam, Tensor):
        value = (lam * w[..., None]).sum(axis=-1).sum(axis=-1)
    else:
        value = (lam_data * w[..., None]).sum(axis=(-1, -2))
    per_sample = lam_data * spans[..., None]
    var = per_sample.var(axis=-1, ddof=1) / M if M > 1 else np.zeros_like(spans)
    if weights is not None:
        var = var * np.asarray(weights, dtype=float) ** 2
    return MCEstimate(value, np.sqrt(var.sum(axis=-1)))


@dataclass
class LossBreakdown:
    recon: float
    kl: float
    event_loglik: float
    compensator: float
    total: Tensor | float
    per_sequence: dict = field(default_factory=dict, repr=False)

    def as_dict(self) -> dict:
        return {
            "recon": self.recon,
            "kl": self.kl,
            "event_ll": self.event_loglik,
            "comp": self.compensator,
            "total": float(self.total.item() if isinstance(self.total, Tensor) else self.total),
        }


@dataclass
class TrainConfig:
    epochs: int = 300
    batch_size: int = 32
    learning_rate: float = 5e-4
    mc_samples: int = 20
    grad_clip_norm: float = 5.0
    seed: int = 0
    latent_dim: int = 20
    variant: str = "exponential"
    check_finite: bool = False
    log_path: str | None = None
    checkpoint_path: str | None = None
    best_path: str | None = None
    val_every: int = 1
    bucket: bool = True
    kl_weight: float = 1.0  # diagnostic knob; anything but 1.0 no longer optimizes a lower bound

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.mc_samples) < 1:
            raise ValueError("epochs, batch_size and mc_samples must be >= 1")
        if not self.kl_weight >= 0:
            raise ValueError("kl_weight must be >= 0")

    def to_json(self) -> dict:
        return asdict(self)


def elbo_loss(model: VNTPP, batch: Batch, mc_samples: int = 20, train: bool = True,
              rng: np.random.Generator | None = None, eps: np.ndarray | None = None,
              kl_weight: float = 1.0) -> LossBreakdown:
    """Negative per-sequence objective, averaged over the batch.

    ``kl_weight`` scales the KL term in ``total`` only (the reported ``kl``
    component is always unweighted); 1.0 is the plain evidence lower bound.

    Noise is drawn from ``rng`` in a fixed order: latent noise, then the
    Monte Carlo uniforms, then dropout masks.
    """
    if rng is None:
        rng = np.random.Generator(np.random.Philox(0))
    B, L = batch.types.shape
    if train and eps is None:
        eps = rng.standard_normal((B, L, model.cfg.J))
    u_rng = np.random.Generator(np.random.Philox(rng.integers(2**63)))
    out = model.forward(batch, train=train, rng=rng, eps=eps)
    alpha = model.params["head.alpha"]
    variant = model.cfg.variant
    valid = out.target_mask.astype(float)

    lam_events = intensity_tensor(out.base, alpha, out.gaps, variant)
    onehot = np.zeros(lam_events.shape)
    b, p = np.nonzero(out.target_mask)
    onehot[b, p, out.target_types[b, p]] = 1.0
    # log of the observed type's intensity; padding rows read a harmless 1.0
    lam_obs = (lam_events * onehot).sum(axis=-1) + (1.0 - valid)
    event_ll = (ad.log(lam_obs) * valid).sum(axis=-1)

    interval = valid.copy()
    interval[:, 0] = 0.0  # the paper's span starts at the first event

    def total_rate(s):
        return intensity_tensor(out.base[:, :, None, :], alpha, s, variant).sum(axis=-1)

    comp = mc_compensator(total_rate, out.gaps, mc_samples, u_rng, weights=interval).value

    recon = reconstruction_terms(out, model.cfg.K, model.cfg.gap_likelihood)
    kl = kl_terms(out.posterior, out.mask)
    objective = recon - kl * kl_weight + event_ll - comp
    total = objective.mean() * -1.0
    if not np.isfinite(total.data).all():
        raise NonFiniteError("non-finite loss")
    return LossBreakdown(
        recon=float(recon.data.mean()),
        kl=float(kl.data.mean()),
        event_loglik=float(event_ll.data.mean()),
        compensator=float(comp.data.mean()),
        total=total,
        per_sequence={
            "recon": recon.data.copy(),
            "kl": kl.data.copy(),
            "event_ll": event_ll.data.copy(),
            "comp": comp.data.copy(),
        },
    )


def _philox(*key) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(key))))


def epoch_batches(dataset: Dataset, cfg: TrainConfig, epoch: int) -> list[Batch]:
    """Seeded shuffle; with ``bucket`` the shuffled order is sorted by length inside
    windows of 8 batches (less padding), then the batch order is shuffled again."""
    rng = _philox(cfg.seed, epoch, 1)
    order = rng.permutation(len(dataset))
    if cfg.bucket:
        window = 8 * cfg.batch_size
        lengths = np.array([len(dataset[i]) for i in order])
        chunks = []
        for s in range(0, len(order), window):
            idx = order[s : s + window]
            chunks.append(idx[np.argsort(lengths[s : s + window], kind="stable")])
        order = np.concatenate(chunks)
    batches = batchify([dataset[i] for i in order], cfg.batch_size, dataset.num_types)
    if cfg.bucket:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


def evaluate_loss(model: VNTPP, dataset: Dataset, cfg: TrainConfig, train: bool = False, seed_tag: int = 7) -> dict:
    """Size-weighted mean loss breakdown over ``dataset`` (eval mode by default)."""
    sums = {"recon": 0.0, "kl": 0.0, "event_ll": 0.0, "comp": 0.0, "total": 0.0}
    n = 0
    with ad.no_grad():
        for i, batch in enumerate(batchify(dataset, max(cfg.batch_size, 64))):
            rng = _philox(cfg.seed, seed_tag, i)
            br = elbo_loss(model, batch, cfg.mc_samples, train=train, rng=rng, kl_weight=cfg.kl_weight)
            for k, v in br.as_dict().items():
                sums[k] += v * batch.size
            n += batch.size
    return {k: v / n for k, v in sums.items()}


@dataclass
class TrainResult:
    best_params: dict
    best_epoch: int
    best_val: float
    history: list
    adam: ad.AdamState


def train(model: VNTPP, train_set: Dataset, val_set: Dataset, cfg: TrainConfig,
          resume: str | Path | None = None, callback: Callable | None = None) -> TrainResult:
    """Minimize the negative objective with Adam, logging one record per epoch.

    Keeps the best validation parameters (restored into ``model`` at the end).
    Resuming from a checkpoint written by this function continues bit-exactly,
    since every batch draws its noise from a generator keyed by
    ``(seed, epoch, batch)``.
    """
    train_set = trainable(train_set)
    val_set = trainable(val_set)
    if len(train_set) == 0 or len(val_set) == 0:
        raise ValueError("training and validation sets must contain multi-event sequences")
    model.mean_gap = train_set.mean_gap()
    adam = ad.AdamState(lr=cfg.learning_rate)
    start_epoch = 1
    best_val, best_epoch, best_params = np.inf, 0, model.copy_params()
    history: list = []
    if resume is not None:
        arrays, meta, saved_adam = ad.load_checkpoint(resume)
        model.set_params(arrays)
        if saved_adam is not None:
            adam = saved_adam
        start_epoch = int(meta.get("epoch", 0)) + 1
        best_val = float(meta.get("best_val", np.inf))
        best_epoch = int(meta.get("best_epoch", 0))
        best_params = model.copy_params()
        if cfg.best_path and Path(cfg.best_path).exists():
            best_params, _, _ = ad.load_checkpoint(cfg.best_path)
    log_fh = open(cfg.log_path, "a", encoding="utf-8") if cfg.log_path else None
    params = model.params
    try:
        with ad.check_finite(cfg.check_finite):
            for epoch in range(start_epoch, cfg.epochs + 1):
                t0 = time.perf_counter()
                sums = {"recon": 0.0, "kl": 0.0, "event_ll": 0.0, "comp": 0.0, "total": 0.0}
                n = 0
                for bi, batch in enumerate(epoch_batches(train_set, cfg, epoch)):
                    rng = _philox(cfg.seed, epoch, 2, bi)
                    ad.current_tape().clear()
                    try:
                        br = elbo_loss(model, batch, cfg.mc_samples, train=True, rng=rng, kl_weight=cfg.kl_weight)
                    except NonFiniteError as exc:
                        raise NonFiniteError(f"epoch {epoch}, batch {bi}: {exc}") from exc
                    ad.backward(br.total)
                    ad.clip_grad_norm(params, cfg.grad_clip_norm)
                    ad.adam_step(adam, params)
                    ad.zero_grad(params)
                    for k, v in br.as_dict().items():
                        sums[k] += v * batch.size
                    n += batch.size
                record = {"epoch": epoch, "train": {k: v / n for k, v in sums.items()}}
                if epoch % cfg.val_every == 0 or epoch == cfg.epochs:
                    record["val"] = evaluate_loss(model, val_set, cfg)
                    if record["val"]["total"] < best_val:
                        best_val, best_epoch = record["val"]["total"], epoch
                        best_params = model.copy_params()
                        if cfg.best_path:
                            model.save(cfg.best_path, extra_meta={"epoch": epoch, "val_total": best_val})
                record["wall_ms"] = round(1000 * (time.perf_counter() - t0), 1)
                history.append(record)
                log.info("epoch %d train %.4f val %s", epoch, record["train"]["total"],
                         f"{record['val']['total']:.4f}" if "val" in record else "-")
                if log_fh:
                    log_fh.write(json.dumps(record) + "\n")
                    log_fh.flush()
                if cfg.checkpoint_path:
                    model.save(cfg.checkpoint_path, adam,
                               {"epoch": epoch, "best_val": best_val, "best_epoch": best_epoch})
                if callback is not None:
                    callback(epoch, record, model)
    finally:
        if log_fh:
            log_fh.close()
    model.set_params(best_params)
    return TrainResult(best_params, best_epoch, float(best_val), history, adam)
