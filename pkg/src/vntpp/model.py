"""The variational intensity model.

Inputs are shifted right behind a learned begin-of-sequence vector, so
position ``i`` of every stack sees events ``0 .. i-1`` only. The latent at
position ``i`` therefore describes the history before event ``i`` and drives
the intensity on ``(t_{i-1}, t_i]`` (``t_{-1} = 0``). With ``extend=True`` one
more position is appended that has seen the whole sequence, which is what
next-event prediction after the last event needs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Batch, Dataset, EventSequence, make_batch
from .encoder import EncoderConfig, embed_events, encode, init_encoder_params, xavier
from .errors import ShapeError, ValidationError

VARIANTS = ("linear", "exponential")
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ModelConfig:
    K: int
    variant: str = "exponential"
    J: int = 20
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    seed: int = 0
    gap_likelihood: str = "gaussian"  # or "lognormal"
    alpha_init: float = 1.0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.gap_likelihood not in ("gaussian", "lognormal"):
            raise ValidationError(f"unknown gap likelihood {self.gap_likelihood!r}")
        if self.K < 1 or self.J < 1:
            raise ValidationError("K and J must be positive")

    def to_json(self) -> dict:
        return {
            "K": self.K,
            "variant": self.variant,
            "J": self.J,
            "encoder": self.encoder.to_json(),
            "seed": self.seed,
            "gap_likelihood": self.gap_likelihood,
            "alpha_init": self.alpha_init,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ModelConfig":
        enc = obj.get("encoder", {})
        return cls(
            K=int(obj["K"]),
            variant=obj.get("variant", "exponential"),
            J=int(obj.get("J", 20)),
            encoder=EncoderConfig(**enc),
            seed=int(obj.get("seed", 0)),
            gap_likelihood=obj.get("gap_likelihood", "gaussian"),
            alpha_init=float(obj.get("alpha_init", 1.0)),
        )


@dataclass
class LatentPosterior:
    mu: Tensor  # [B, P, J]
    log_var: Tensor  # [B, P, J]

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(0.5 * self.log_var.data)


@dataclass
class ForwardOutput:
    posterior: LatentPosterior
    z: Tensor  # [B, P, J]
    base: Tensor  # [B, P, K], beta + w^T z
    type_logits: Tensor  # [B, P, K]
    time_pred: Tensor  # [B, P]
    mask: np.ndarray  # [B, P] real positions
    target_mask: np.ndarray  # [B, P] positions that have a next event
    target_types: np.ndarray  # [B, P] (K where none)
    gaps: np.ndarray  # [B, P] elapsed time from previous event to the target
    t_prev: np.ndarray  # [B, P] time of the previous event (0 at position 0)


def softplus_np(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def intensity_np(base, alpha, dt, variant: str) -> np.ndarray:
    """Per-type intensity for pre-activation ``base = beta + w^T z`` after elapsed time ``dt``.

    ``base`` has shape ``[..., K]`` and ``dt`` broadcasts against ``[...]``.
    """
    base = np.asarray(base, dtype=float)
    dt = np.asarray(dt, dtype=float)[..., None]
    if variant == "linear":
        return softplus_np(base - alpha * dt)
    return softplus_np(base + np.exp(-alpha * dt))


def intensity(z, head: dict, dt, variant: str) -> np.ndarray:
    """``lambda_k`` for latent ``z`` ([..., J]) under head params ``beta``, ``w`` ([J, K]), ``alpha``."""
    base = np.asarray(z) @ np.asarray(head["w"]) + np.asarray(head["beta"])
    return intensity_np(base, np.asarray(head["alpha"]), dt, variant)


def intensity_tensor(base: Tensor, alpha: Tensor, dt: np.ndarray, variant: str) -> Tensor:
    """Differentiable version of :func:`intensity_np`; ``dt`` broadcasts against ``base[..., 0]``."""
    dt = np.asarray(dt, dtype=float)[..., None]
    if variant == "linear":
        return ad.softplus(base - alpha * dt)
    return ad.softplus(base + ad.exp(alpha * (-dt)))


def kl_terms(post: LatentPosterior, mask: np.ndarray) -> Tensor:
    """Per-sequence KL to the unit Gaussian, summed over real positions: shape ``[B]``."""
    mu, lv = post.mu, post.log_var
    per_dim = (1.0 + lv - mu * mu - ad.exp(lv)) * -0.5
    per_pos = per_dim.sum(axis=-1)
    return (per_pos * np.asarray(mask, dtype=float)).sum(axis=-1)


def kl_divergence(post: LatentPosterior, mask: np.ndarray | None = None) -> float:
    if mask is None:
        mask = np.ones(post.mu.shape[:-1], dtype=bool)
    with ad.no_grad():
        return float(kl_terms(post, mask).sum().item())


def sample_latent(post: LatentPosterior, eps: np.ndarray | None = None, train: bool = True,
                  rng: np.random.Generator | None = None) -> Tensor:
    """Reparameterized draw ``mu + sigma * eps`` in train mode; the mean in eval mode."""
    if not train:
        return post.mu
    if eps is None:
        if rng is None:
            raise ValueError("need eps or rng in train mode")
        eps = rng.standard_normal(post.mu.shape)
    eps = np.asarray(eps, dtype=float)
    if eps.shape != post.mu.shape:
        raise ShapeError(f"eps shape {eps.shape} does not match posterior {post.mu.shape}")
    return post.mu + ad.exp(post.log_var * 0.5) * eps


def reconstruction_terms(out: ForwardOutput, K: int, gap_likelihood: str = "gaussian") -> Tensor:
    """Per-sequence ``log p(next type) + log p(next gap)`` over target positions: shape ``[B]``."""
    onehot = np.zeros(out.type_logits.shape)
    valid = out.target_mask
    b, p = np.nonzero(valid)
    onehot[b, p, out.target_types[b, p]] = 1.0
    type_ll = (ad.log_softmax(out.type_logits) * onehot).sum(axis=-1)
    gaps = out.gaps
    if gap_likelihood == "lognormal":
        lg = np.log(np.where(valid, gaps, 1.0))
        resid = out.time_pred - lg
        gap_ll = resid * resid * -0.5 - HALF_LOG_2PI - lg
    else:
        resid = out.time_pred - gaps
        gap_ll = resid * resid * -0.5 - HALF_LOG_2PI
    return ((type_ll + gap_ll) * valid.astype(float)).sum(axis=-1)


class VNTPP:
    """Inference network, intensity heads and generative network with their parameters."""

    def __init__(self, cfg: ModelConfig, params: dict[str, Tensor] | None = None, mean_gap: float = 1.0):
        self.cfg = cfg
        self.mean_gap = float(mean_gap)
        self.params = params if params is not None else self.init_params(cfg)

    # ------------------------------------------------------------------ params
    @staticmethod
    def init_params(cfg: ModelConfig) -> dict[str, Tensor]:
        rng = np.random.Generator(np.random.Philox(cfg.seed))
        D, K, J = cfg.encoder.D, cfg.K, cfg.J
        p: dict[str, np.ndarray] = {}
        for net in ("inf", "gen"):
            p[f"{net}.U"] = rng.normal(0.0, 1.0 / math.sqrt(D), size=(K + 1, D))
            p[f"{net}.bos"] = rng.normal(0.0, 1.0 / math.sqrt(D), size=(D,))
        p["post.w_mu"] = xavier(rng, D, J)
        p["post.b_mu"] = np.zeros(J)
        p["post.w_lv"] = xavier(rng, D, J)
        p["post.b_lv"] = np.zeros(J)
        p["head.w"] = xavier(rng, J, K)
        p["head.beta"] = np.zeros(K)
        p["head.alpha"] = np.full(K, cfg.alpha_init)
        p["gen.wz"] = xavier(rng, J, D)
        p["gen.bz"] = np.zeros(D)
        p["gen.w_type"] = xavier(rng, D, K)
        p["gen.b_type"] = np.zeros(K)
        p["gen.w_time"] = xavier(rng, D, 1)
        p["gen.b_time"] = np.zeros(1)
        params = {k: Tensor(v, requires_grad=True, name=k) for k, v in p.items()}
        params.update(init_encoder_params(cfg.encoder, rng, "inf.enc"))
        params.update(init_encoder_params(cfg.encoder, rng, "gen.enc"))
        return dict(sorted(params.items()))

    def head(self) -> dict[str, np.ndarray]:
        return {"w": self.params["head.w"].data, "beta": self.params["head.beta"].data,
                "alpha": self.params["head.alpha"].data}

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    # ----------------------------------------------------------------- forward
    def _shifted_input(self, net: str, batch: Batch, extend: bool) -> tuple[Tensor, np.ndarray]:
        B, L = batch.types.shape
        D = self.cfg.encoder.D
        if extend:
            types, times = batch.types, batch.times
            mask = np.concatenate([np.ones((B, 1), dtype=bool), batch.mask], axis=1)
        else:
            types, times = batch.types[:, : L - 1], batch.times[:, : L - 1]
            mask = batch.mask
        bos = self.params[f"{net}.bos"].reshape(1, 1, D) + np.zeros((B, 1, D))
        if types.shape[1] == 0:
            return bos, mask
        emb = embed_events(types, times, self.params[f"{net}.U"])
        return ad.concat([bos, emb], axis=1), mask

    def posterior(self, batch: Batch, train: bool = False, rng=None, extend: bool = False) -> tuple[LatentPosterior, np.ndarray]:
        x, mask = self._shifted_input("inf", batch, extend)
        h = encode(x, mask, self.params, self.cfg.encoder, "inf.enc", train, rng)
        p = self.params
        post = LatentPosterior(h @ p["post.w_mu"] + p["post.b_mu"], h @ p["post.w_lv"] + p["post.b_lv"])
        return post, mask

    def forward(self, batch: Batch, train: bool = False, rng: np.random.Generator | None = None,
                extend: bool = False, eps: np.ndarray | None = None) -> ForwardOutput:
        if train and rng is None and (eps is None or self.cfg.encoder.dropout > 0):
            raise ValueError("train mode needs an rng")
        p = self.params
        K = self.cfg.K
        B, L = batch.types.shape
        P = L + 1 if extend else L
        if train and eps is None:
            eps = rng.standard_normal((B, P, self.cfg.J))
        post, mask = self.posterior(batch, train, rng, extend)
        z = sample_latent(post, eps, train)
        base = z @ p["head.w"] + p["head.beta"]

        xg, _ = self._shifted_input("gen", batch, extend)
        xg = xg + (z @ p["gen.wz"] + p["gen.bz"])
        hg = encode(xg, mask, p, self.cfg.encoder, "gen.enc", train, rng)
        logits = hg @ p["gen.w_type"] + p["gen.b_type"]
        time_pred = (hg @ p["gen.w_time"] + p["gen.b_time"]).reshape(B, P)

        target_types = np.full((B, P), K, dtype=np.int64)
        target_types[:, :L] = batch.types
        target_mask = np.zeros((B, P), dtype=bool)
        target_mask[:, :L] = batch.mask
        t_prev = np.zeros((B, P))
        t_prev[:, 1:] = batch.times[:, : P - 1]
        t_prev[~mask] = 0.0
        times_pad = np.zeros((B, P))
        times_pad[:, :L] = batch.times
        gaps = np.where(target_mask, times_pad - t_prev, 0.0)
        return ForwardOutput(post, z, base, logits, time_pred, mask, target_mask, target_types, gaps, t_prev)

    # -------------------------------------------------------------- eval helpers
    def latent_means(self, seqs, batch_size: int = 64, extend: bool = True) -> list[np.ndarray]:
        """Eval-mode posterior means per sequence, ``[len + 1, J]`` each when ``extend``."""
        seqs = list(seqs)
        out = []
        with ad.no_grad():
            for i in range(0, len(seqs), batch_size):
                chunk = seqs[i : i + batch_size]
                post, _ = self.posterior(make_batch(chunk, self.cfg.K), False, None, extend)
                for b, s in enumerate(chunk):
                    out.append(post.mu.data[b, : len(s) + (1 if extend else 0)].copy())
        return out

    def head_bases(self, seqs, batch_size: int = 64) -> list[np.ndarray]:
        """Eval-mode pre-activations ``beta + w^T mu_z`` per sequence, shape ``[len + 1, K]``."""
        w, beta = self.params["head.w"].data, self.params["head.beta"].data
        return [m @ w + beta for m in self.latent_means(seqs, batch_size)]

    def intensity_on_grid(self, seq: EventSequence, grid: np.ndarray, base: np.ndarray | None = None) -> np.ndarray:
        """Eval-mode learned intensity ``[len(grid), K]``; right-continuous in event times."""
        if base is None:
            base = self.head_bases([seq])[0]
        grid = np.asarray(grid, dtype=float)
        pos = np.searchsorted(seq.times, grid, side="right")
        prev = np.where(pos > 0, seq.times[np.maximum(pos - 1, 0)], 0.0)
        return intensity_np(base[pos], self.params["head.alpha"].data, grid - prev, self.cfg.variant)

    # --------------------------------------------------------------- persistence
    def save(self, path, adam=None, extra_meta: dict | None = None):
        meta = {"model": self.cfg.to_json(), "mean_gap": self.mean_gap}
        meta.update(extra_meta or {})
        return ad.save_checkpoint(path, self.params, meta, adam)

    @classmethod
    def load(cls, path) -> "VNTPP":
        arrays, meta, _ = ad.load_checkpoint(path)
        if "model" not in meta:
            raise ValidationError(f"{path} holds no model config")
        cfg = ModelConfig.from_json(meta["model"])
        params = {k: Tensor(v, requires_grad=True, name=k) for k, v in sorted(arrays.items())}
        expected = cls.init_params(cfg)
        if set(params) != set(expected):
            raise ValidationError(f"{path}: parameter names do not match the model config")
        return cls(cfg, params, meta.get("mean_gap", 1.0))

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def set_params(self, arrays: dict[str, np.ndarray]) -> None:
        for k, v in arrays.items():
            self.params[k].data = np.array(v, dtype=np.float64, copy=True)


def model_config_from_file(path) -> ModelConfig:
    return ModelConfig.from_json(json.loads(Path(path).read_text()))


def default_model(dataset: Dataset, variant: str = "exponential", J: int = 20, seed: int = 0,
                  encoder: EncoderConfig | None = None) -> VNTPP:
    cfg = ModelConfig(K=dataset.num_types, variant=variant, J=J, encoder=encoder or EncoderConfig(), seed=seed)
    return VNTPP(cfg, mean_gap=dataset.mean_gap())
