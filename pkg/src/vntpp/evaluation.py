"""Evaluation: type F1, time errors, intensity errors, latent SVD, time-rescaling goodness of fit."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, stats

from .data import EventSequence
from .errors import UnsupportedDataset, ValidationError
from .hawkes import ExponentialKernel, HawkesSpec, compensator_closed_form, compensator_increments, intensity_on_grid
from .kernels.svd import jacobi_svd
from .model import VNTPP, intensity_np
from .predict import PositionPrediction

AVERAGES = ("micro", "macro", "weighted")


@dataclass
class MetricsReport:
    f1: float
    time_rmse: float
    time_mae: float
    diversity: list
    n_events: int
    f1_macro: float = math.nan
    f1_weighted: float = math.nan
    intensity_rmse: float | None = None
    intensity_mae: float | None = None
    average: str = "micro"
    time_scale: float = 1.0  # errors are divided by this (1.0 = raw times)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = asdict(self)
        out.update(out.pop("extra"))
        return out

    def save(self, path) -> Path:
        p = Path(path)
        p.write_text(json.dumps(self.to_json(), indent=2))
        return p


def confusion(y_true, y_pred, K: int) -> np.ndarray:
    cm = np.zeros((K, K), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def f1_scores(y_true, y_pred, K: int) -> dict:
    """Micro, macro and support-weighted F1 of a multi-class prediction."""
    cm = confusion(y_true, y_pred, K)
    tp = np.diag(cm).astype(float)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    denom = 2 * tp + fp + fn
    per = np.divide(2 * tp, denom, out=np.zeros(K), where=denom > 0)
    support = cm.sum(axis=1)
    micro = 2 * tp.sum() / max(2 * tp.sum() + fp.sum() + fn.sum(), 1)
    present = support > 0
    macro = float(per[present].mean()) if present.any() else 0.0
    weighted = float((per * support).sum() / max(support.sum(), 1))
    return {"micro": float(micro), "macro": macro, "weighted": weighted}


def compute_metrics(predictions: Sequence[PositionPrediction], K: int, average: str = "micro",
                    time_scale: float = 1.0) -> MetricsReport:
    """Aggregate next-event predictions.

    ``time_scale`` divides the time errors (pass the training mean gap for
    normalized errors; the default 1.0 reports raw times).
    """
    if average not in AVERAGES:
        raise ValidationError(f"average must be one of {AVERAGES}")
    if len(predictions) == 0:
        raise ValidationError("no predictions to score")
    k_true = np.array([p.k_true for p in predictions])
    k_hat = np.array([p.result.predicted_type for p in predictions])
    err = (np.array([p.result.expected_time for p in predictions]) - np.array([p.t_true for p in predictions])) / time_scale
    f1 = f1_scores(k_true, k_hat, K)
    hit = k_true == k_hat
    diversity = np.bincount(k_true[hit], minlength=K).tolist()
    return MetricsReport(
        f1=f1[average],
        time_rmse=float(np.sqrt(np.mean(err**2))),
        time_mae=float(np.mean(np.abs(err))),
        diversity=diversity,
        n_events=len(predictions),
        f1_macro=f1["macro"],
        f1_weighted=f1["weighted"],
        average=average,
        time_scale=float(time_scale),
    )


# ---------------------------------------------------------------- intensities
IntensityFn = Callable[[EventSequence, np.ndarray], np.ndarray]


def intensity_fn(source) -> IntensityFn:
    """Adapt a model, spec or callable to ``f(seq, grid) -> [len(grid), K]``."""
    if isinstance(source, VNTPP):
        return source.intensity_on_grid
    if isinstance(source, HawkesSpec):
        return lambda seq, grid: intensity_on_grid(source, seq, grid)
    if callable(source):
        return source
    raise TypeError(f"cannot evaluate intensities of {type(source).__name__}")


def _grid(seq: EventSequence, resolution: int) -> np.ndarray:
    return np.linspace(0.0, seq.horizon, resolution)


def intensity_error(model, spec: HawkesSpec | None, seqs, resolution: int = 500) -> tuple[float, float]:
    """RMSE and MAE between learned and true intensities on a shared uniform grid over ``[0, T]``.

    Errors pool all ``(type, grid point)`` pairs of a sequence and are then
    averaged over sequences.
    """
    if spec is None:
        raise UnsupportedDataset("intensity error needs the generating Hawkes spec")
    f = intensity_fn(model)
    if isinstance(model, VNTPP):
        bases = model.head_bases(list(seqs))
        f = lambda seq, grid, _it=iter(bases): model.intensity_on_grid(seq, grid, next(_it))  # noqa: E731
    rmse, mae = [], []
    for seq in seqs:
        g = _grid(seq, resolution)
        d = f(seq, g) - intensity_on_grid(spec, seq, g)
        rmse.append(math.sqrt(float(np.mean(d * d))))
        mae.append(float(np.mean(np.abs(d))))
    return float(np.mean(rmse)), float(np.mean(mae))


def constant_intensity_error(spec: HawkesSpec, seqs, resolution: int = 500) -> dict:
    """Errors of the best per-type constant intensity, chosen with the truth in hand.

    The RMSE constant is the pooled mean of the true intensity and the MAE
    constant is its pooled median, so no constant does better on either.
    """
    truth = [intensity_on_grid(spec, s, _grid(s, resolution)) for s in seqs]
    pooled = np.concatenate(truth)
    c_mean, c_median = pooled.mean(axis=0), np.median(pooled, axis=0)
    rmse = float(np.mean([math.sqrt(float(np.mean((t - c_mean) ** 2))) for t in truth]))
    mae = float(np.mean([float(np.mean(np.abs(t - c_median))) for t in truth]))
    return {"rmse": rmse, "mae": mae, "rmse_constant": c_mean.tolist(), "mae_constant": c_median.tolist()}


# ------------------------------------------------------------------- latents
@dataclass
class SvdReport:
    singular_values: np.ndarray
    projections: np.ndarray  # [N, 3]
    labels: np.ndarray

    @property
    def energy_top3(self) -> float:
        s2 = self.singular_values**2
        return float(s2[:3].sum() / s2.sum()) if s2.sum() > 0 else 0.0

    def to_json(self) -> dict:
        return {
            "singular_values": self.singular_values.tolist(),
            "energy_top3": self.energy_top3,
            "n_points": int(len(self.labels)),
        }

    def to_csv(self, path) -> Path:
        p = Path(path)
        cols = np.zeros((len(self.labels), 3))
        cols[:, : self.projections.shape[1]] = self.projections
        with p.open("w") as fh:
            fh.write("x,y,z,label\n")
            for (x, y, z), lab in zip(cols, self.labels):
                fh.write(f"{x!r},{y!r},{z!r},{int(lab)}\n")
        return p


def latent_points(model: VNTPP, seqs, first_pos: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Eval-mode posterior means at every position ``i >= first_pos`` with the type of event ``i`` as label."""
    seqs = list(seqs)
    feats, labels = [], []
    for seq, mu in zip(seqs, model.latent_means(seqs)):
        feats.append(mu[first_pos : len(seq)])
        labels.append(seq.types[first_pos:])
    return np.concatenate(feats), np.concatenate(labels).astype(np.int64)


def svd_report(X: np.ndarray, labels: np.ndarray) -> SvdReport:
    Xc = X - X.mean(axis=0, keepdims=True)
    U, s, _ = jacobi_svd(Xc)
    r = min(3, len(s))
    return SvdReport(s, U[:, :r] * s[:r], np.asarray(labels))


def latent_svd(model: VNTPP, seqs, max_points: int | None = None, seed: int = 0) -> SvdReport:
    X, y = latent_points(model, seqs)
    if len(y) == 0:
        raise ValidationError("no latent points (every sequence has a single event)")
    if max_points is not None and len(y) > max_points:
        idx = np.sort(np.random.Generator(np.random.Philox(seed)).choice(len(y), max_points, replace=False))
        X, y = X[idx], y[idx]
    return svd_report(X, y)


@dataclass
class ProbeResult:
    accuracy: float
    majority_accuracy: float
    n_train: int
    n_test: int


def _softmax_regression(X, y, K, l2):
    n, d = X.shape
    Xb = np.hstack([X, np.ones((n, 1))])
    Y = np.zeros((n, K))
    Y[np.arange(n), y] = 1.0

    def loss(wflat):
        W = wflat.reshape(d + 1, K)
        Z = Xb @ W
        Z -= Z.max(axis=1, keepdims=True)
        logp = Z - np.log(np.exp(Z).sum(axis=1, keepdims=True))
        val = -(Y * logp).sum() / n + 0.5 * l2 * (W[:-1] ** 2).sum()
        grad = Xb.T @ (np.exp(logp) - Y) / n
        grad[:-1] += l2 * W[:-1]
        return val, grad.ravel()

    res = optimize.minimize(loss, np.zeros((d + 1) * K), jac=True, method="L-BFGS-B")
    return res.x.reshape(d + 1, K)


def linear_probe(features: np.ndarray, labels: np.ndarray, K: int, train_frac: float = 0.5,
                 seed: int = 0, l2: float = 1e-4) -> ProbeResult:
    """Multinomial logistic regression fitted on a random part, scored on the rest.

    Features are standardized with training statistics. The majority
    baseline predicts the most common training label.
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int64)
    perm = np.random.Generator(np.random.Philox(seed)).permutation(len(y))
    n_tr = int(round(train_frac * len(y)))
    tr, te = perm[:n_tr], perm[n_tr:]
    if len(tr) == 0 or len(te) == 0:
        raise ValidationError("linear probe needs points on both sides of the split")
    m, sd = X[tr].mean(axis=0), X[tr].std(axis=0)
    sd[sd == 0] = 1.0
    W = _softmax_regression((X[tr] - m) / sd, y[tr], K, l2)
    Xte = np.hstack([(X[te] - m) / sd, np.ones((len(te), 1))])
    acc = float(np.mean(np.argmax(Xte @ W, axis=1) == y[te]))
    majority = int(np.argmax(np.bincount(y[tr], minlength=K)))
    return ProbeResult(acc, float(np.mean(y[te] == majority)), len(tr), len(te))


# ------------------------------------------------------------ goodness of fit
@dataclass
class GofReport:
    ks: float
    p: float
    n: int

    def to_json(self) -> dict:
        return {"ks": self.ks, "p": self.p, "n": self.n}


def model_increments(model: VNTPP, seq: EventSequence, base: np.ndarray | None = None, n_sub: int = 65) -> np.ndarray:
    """Integrated learned intensity over ``(t_{i-1}, t_i]`` for every event, then over ``(t_L, T]``.

    Trapezoid rule with ``n_sub`` nodes per interval; returns ``len(seq) + 1`` values.
    """
    if base is None:
        base = model.head_bases([seq])[0]
    alpha = model.params["head.alpha"].data
    spans = np.append(seq.gaps(), seq.horizon - seq.times[-1])
    u = np.linspace(0.0, 1.0, n_sub)
    lam = intensity_np(base[: len(seq) + 1, None, :], alpha, spans[:, None] * u[None, :], model.cfg.variant).sum(axis=-1)
    inner = lam[:, 1:-1].sum(axis=1) + 0.5 * (lam[:, 0] + lam[:, -1])
    return inner * spans / (n_sub - 1)


def spec_increments(spec: HawkesSpec, seq: EventSequence, n_sub: int = 257) -> np.ndarray:
    """Same layout as :func:`model_increments` for a Hawkes spec (exact for the exponential kernel)."""
    head = compensator_increments(spec, seq, n_sub)
    t_last, T = float(seq.times[-1]), float(seq.horizon)
    if T <= t_last:
        tail = 0.0
    elif isinstance(spec.kernel, ExponentialKernel):
        tail = compensator_closed_form(spec, seq, t_last, T)
    else:
        g = np.linspace(t_last, T, n_sub)
        lam = intensity_on_grid(spec, seq, g).sum(axis=1)
        tail = float((lam[1:-1].sum() + 0.5 * (lam[0] + lam[-1])) * (g[1] - g[0]))
    return np.append(head, tail)


def rescaling_gof(source, seqs, pooling: str = "concat", n_sub: int = 65) -> GofReport:
    """KS test of time-rescaled inter-event gaps against Exp(1).

    A fixed observation horizon is a stopping time in rescaled time, so
    the gaps that end before it are biased short by about ``1 / Lambda(T)``
    per sequence. With ``pooling="concat"`` (default) the rescaled
    sequences are laid end to end: the unfinished tail of each sequence is
    added to the first gap of the next, which makes the pooled gaps exactly
    Exp(1) under the true model. ``pooling="per_sequence"`` tests the raw
    within-sequence increments (first one measured from 0) instead.
    """
    seqs = list(seqs)
    if not seqs:
        raise ValidationError("no sequences")
    if pooling not in ("concat", "per_sequence"):
        raise ValidationError("pooling must be 'concat' or 'per_sequence'")
    if isinstance(source, VNTPP):
        bases = source.head_bases(seqs)
        incs = [model_increments(source, s, b, n_sub) for s, b in zip(seqs, bases)]
    else:
        spec = source.spec if hasattr(source, "spec") else source
        incs = [spec_increments(spec, s) for s in seqs]
    parts, carry = [], 0.0
    for inc in incs:
        gaps = inc[:-1].copy()
        if pooling == "concat":
            gaps[0] += carry
            carry = inc[-1]
        parts.append(gaps)
    x = np.concatenate(parts)
    res = stats.kstest(x, "expon")
    return GofReport(float(res.statistic), float(res.pvalue), int(len(x)))
