"""Classical Hawkes baselines (exponential and Gaussian kernels) fitted by maximum likelihood."""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .data import Dataset, EventSequence
from .errors import NonFiniteError, ValidationError
from .hawkes import ExponentialKernel, GaussianKernel, HawkesSpec, save_spec
from .kernels import hawkes as hk
from .predict import (
    HawkesState,
    PositionPrediction,
    PredictionGrid,
    PredictionResult,
    hawkes_predict_sequences,
    predict_state,
)

log = logging.getLogger(__name__)

KERNELS = ("exponential", "gaussian")


@dataclass
class FitOptions:
    max_iter: int = 500
    lr: float = 0.01
    tol: float = 1e-6
    train_decay: bool = True  # fit beta (or center/width); False keeps the init values
    excitation: bool = True  # False pins a = 0, i.e. a homogeneous Poisson fit
    beta: float | None = None  # exponential decay; default 1 / mean gap
    center: float | None = None  # gaussian kernel; default 0
    width: float | None = None  # gaussian kernel; default mean gap
    mc_samples: int = 20
    seed: int = 0
    patience: int = 20
    mu_init: np.ndarray | None = None
    a_init: np.ndarray | None = None


@dataclass
class HawkesFit:
    spec: HawkesSpec
    train_loglik: float
    converged: bool
    iterations: int
    history: list = field(default_factory=list, repr=False)

    def fit_meta(self) -> dict:
        return {"train_loglik": self.train_loglik, "converged": self.converged, "iterations": self.iterations}

    def save(self, path) -> Path:
        meta = dict(self.spec.meta)
        meta["fit_meta"] = self.fit_meta()
        spec = HawkesSpec(self.spec.mu, self.spec.a, self.spec.kernel, self.spec.horizon, meta)
        return save_spec(spec, path)


def load_fit(path) -> HawkesFit:
    obj = json.loads(Path(path).read_text())
    spec = HawkesSpec.from_json(obj)
    fm = spec.meta.get("fit_meta")
    if fm is None:
        raise ValidationError(f"{path} has no fit_meta block")
    return HawkesFit(spec, float(fm["train_loglik"]), bool(fm["converged"]), int(fm["iterations"]))


def _softplus(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _softplus_inv(y):
    y = np.asarray(y, dtype=float)
    return np.where(y > 30, y, np.log(np.expm1(np.maximum(y, 1e-12))))


class _Packed:
    """Concatenated event arrays in the layout the likelihood kernels expect."""

    def __init__(self, data: Dataset):
        seqs = list(data)
        self.types = np.concatenate([s.types for s in seqs]).astype(np.int64)
        self.times = np.concatenate([s.times for s in seqs])
        self.offsets = np.concatenate([[0], np.cumsum([len(s) for s in seqs])]).astype(np.int64)
        self.horizons = np.array([s.horizon for s in seqs], dtype=float)
        self.n_events = len(self.types)


def loglik(spec: HawkesSpec, data: Dataset, mc_samples: int = 20, seed: int = 0) -> float:
    """Total log-likelihood over ``[0, T]`` of every sequence (Monte Carlo compensator for Gaussian kernels)."""
    pk = _Packed(data)
    kind, p1, p2 = spec.kernel.code
    if kind == hk.EXPONENTIAL:
        return hk.exp_loglik(pk.types, pk.times, pk.offsets, pk.horizons, spec.mu, spec.a, p1)[0]
    u = np.random.Generator(np.random.Philox(seed)).random((pk.n_events + len(data), mc_samples))
    return hk.gauss_loglik(pk.types, pk.times, pk.offsets, pk.horizons, spec.mu, spec.a, p1, p2, u)[0]


def _initial(data: Dataset, kernel: str, opts: FitOptions):
    K = data.num_types
    span = sum(s.horizon for s in data)
    mu0 = opts.mu_init if opts.mu_init is not None else 0.5 * data.type_counts() / span
    mu0 = np.maximum(np.asarray(mu0, dtype=float), 1e-6)
    a0 = np.asarray(opts.a_init, dtype=float) if opts.a_init is not None else np.full((K, K), 0.1)
    gap = data.mean_gap()
    if kernel == "exponential":
        decay = [opts.beta if opts.beta is not None else 1.0 / gap]
    else:
        decay = [opts.center if opts.center is not None else 0.0, opts.width if opts.width is not None else gap]
    return mu0, np.maximum(a0, 1e-9), np.array(decay, dtype=float)


def fit_hawkes(data: Dataset, kernel: str = "exponential", opts: FitOptions | None = None) -> HawkesFit:
    """Maximize the log-likelihood with Adam on softplus-mapped raw parameters.

    The loss is the negative log-likelihood per event. The returned spec
    holds the best iterate seen; ``converged`` is True when the best
    log-likelihood improved by at most ``tol`` (relative) over the last
    ``patience`` iterations before ``max_iter``. A single small step is not
    enough: Adam's momentum makes the objective oscillate, and its turning
    points produce near-zero changes well short of the optimum.
    """
    if kernel not in KERNELS:
        raise ValidationError(f"kernel must be one of {KERNELS}")
    if len(data) == 0:
        raise ValidationError("cannot fit an empty dataset")
    opts = opts or FitOptions()
    pk = _Packed(data)
    mu0, a0, d0 = _initial(data, kernel, opts)
    params = {
        "mu": Tensor(_softplus_inv(mu0), requires_grad=True, name="mu"),
        "a": Tensor(_softplus_inv(a0), requires_grad=opts.excitation, name="a"),
        "decay": Tensor(_softplus_inv(d0), requires_grad=opts.train_decay, name="decay"),
    }
    if kernel == "gaussian":
        u = np.random.Generator(np.random.Philox(opts.seed)).random((pk.n_events + len(data), opts.mc_samples))

    def positive(raw):
        a = _softplus(raw["a"]) if opts.excitation else np.zeros_like(raw["a"])
        return _softplus(raw["mu"]), a, _softplus(raw["decay"])

    def objective():
        raw = {k: p.data for k, p in params.items()}
        mu, a, dec = positive(raw)
        if kernel == "exponential":
            ll, dmu, da, dbeta = hk.exp_loglik(pk.types, pk.times, pk.offsets, pk.horizons, mu, a, dec[0])
            ddec = np.array([dbeta])
        else:
            ll, dmu, da, dc, dw = hk.gauss_loglik(pk.types, pk.times, pk.offsets, pk.horizons, mu, a, dec[0], dec[1], u)
            ddec = np.array([dc, dw])
        scale = -1.0 / pk.n_events
        grads = (scale * dmu * _sigmoid(raw["mu"]), scale * da * _sigmoid(raw["a"]), scale * ddec * _sigmoid(raw["decay"]))
        if not math.isfinite(ll):
            raise NonFiniteError("non-finite Hawkes log-likelihood")
        out = ad.custom((params["mu"], params["a"], params["decay"]), scale * ll,
                        lambda g: tuple(g * x for x in grads), "hawkes_nll")
        return out, ll

    def to_spec(raw):
        mu, a, dec = positive(raw)
        k = ExponentialKernel(float(dec[0])) if kernel == "exponential" else GaussianKernel(float(dec[0]), float(dec[1]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return HawkesSpec(np.maximum(mu, 1e-300), a, k, None, {"name": f"hp-{'ek' if kernel == 'exponential' else 'gk'}"})

    adam = ad.AdamState(lr=opts.lr)
    best_ll, best_raw = -np.inf, None
    best_trace = []
    converged = False
    history = []
    it = 0
    trainable = {k: p for k, p in params.items() if p.requires_grad}
    for it in range(1, opts.max_iter + 1):
        ad.current_tape().clear()
        loss, ll = objective()
        history.append(ll)
        if ll > best_ll:
            best_ll, best_raw = ll, {k: p.data.copy() for k, p in params.items()}
        best_trace.append(best_ll)
        if len(best_trace) > opts.patience:
            then = best_trace[-1 - opts.patience]
            if best_ll - then <= opts.tol * abs(then):
                converged = True
                break
        ad.backward(loss)
        ad.adam_step(adam, trainable)
        ad.zero_grad(params)
    log.info("hawkes fit (%s): loglik %.4f after %d iterations (converged=%s)", kernel, best_ll, it, converged)
    return HawkesFit(to_spec(best_raw), float(best_ll), converged, it, history)


def hawkes_predict(fit: HawkesFit | HawkesSpec, history: EventSequence | None, grid: PredictionGrid) -> PredictionResult:
    spec = fit.spec if isinstance(fit, HawkesFit) else fit
    return predict_state(HawkesState(spec, history), grid)


def predict_sequences(fit: HawkesFit | HawkesSpec, seqs, mean_gap: float, n_points: int = 1000,
                      scheme: str = "right_riemann", first_pos: int = 1) -> list[PositionPrediction]:
    spec = fit.spec if isinstance(fit, HawkesFit) else fit
    return hawkes_predict_sequences(spec, seqs, mean_gap, n_points, scheme, first_pos)
