"""Next-event prediction by numerical integration of the intensity.

Given the intensity after the last observed event ``t_i``, the next event
time has density ``f(t) = lambda(t) exp(-int_{t_i}^t lambda)``. The expected
time and the marginal type distribution are grid sums of ``t f(t)`` and
``(lambda_k / lambda) f(t)``, both divided by the probability mass the grid
captured, so truncating the infinite integral biases nothing to first order.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .data import EventSequence
from .errors import LowMassWarning, ValidationError
from .hawkes import HawkesSpec, intensity_on_grid
from .kernels import quadrature as qd
from .model import VNTPP, intensity_np

TARGET_MASS = 0.999
WARN_MASS = 0.99
MAX_EXTENSIONS = 4


@dataclass(frozen=True)
class PredictionGrid:
    t_start: float
    t_end: float
    n_points: int = 1000
    scheme: str = "right_riemann"

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValidationError("t_end must exceed t_start")
        if self.n_points < 2:
            raise ValidationError("n_points must be >= 2")
        if self.scheme not in qd.SCHEMES:
            raise ValidationError(f"scheme must be one of {sorted(qd.SCHEMES)}")

    @property
    def step(self) -> float:
        return (self.t_end - self.t_start) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return self.t_start + np.arange(self.n_points) * self.step

    def extended(self, factor: float = 2.0) -> "PredictionGrid":
        return PredictionGrid(self.t_start, self.t_start + factor * (self.t_end - self.t_start), self.n_points, self.scheme)


@dataclass(frozen=True)
class PredictionResult:
    expected_time: float
    type_probs: np.ndarray
    predicted_type: int
    pdf_mass: float
    t_end: float = math.nan

    def to_json(self) -> dict:
        return {
            "t_hat": self.expected_time,
            "k_hat": self.predicted_type,
            "type_probs": [float(p) for p in self.type_probs],
            "pdf_mass": self.pdf_mass,
        }


class IntensityState(Protocol):
    """Intensity after a fixed history: ``rates(t)`` gives ``[len(t), K]`` for ``t >= t_last``."""

    t_last: float
    K: int

    def rates(self, t: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True)
class HeadState:
    """A softplus head frozen at one latent: only the elapsed time varies."""

    base: np.ndarray  # beta + w^T z, [K]
    alpha: np.ndarray
    variant: str
    t_last: float

    @property
    def K(self) -> int:
        return len(self.base)

    def rates(self, t) -> np.ndarray:
        return intensity_np(self.base, self.alpha, np.asarray(t, dtype=float) - self.t_last, self.variant)

    def quadrature(self, grid: PredictionGrid):
        code = qd.LINEAR if self.variant == "linear" else qd.EXPONENTIAL
        return qd.head_quadrature(self.base, self.alpha, code, grid.step, grid.n_points,
                                  qd.SCHEMES[grid.scheme])


@dataclass(frozen=True)
class HawkesState:
    spec: HawkesSpec
    history: EventSequence | None

    @property
    def K(self) -> int:
        return self.spec.K

    @property
    def t_last(self) -> float:
        return 0.0 if self.history is None else float(self.history.times[-1])

    def rates(self, t) -> np.ndarray:
        return intensity_on_grid(self.spec, self.history, np.atleast_1d(np.asarray(t, dtype=float)))


def _quadrature(state: IntensityState, grid: PredictionGrid):
    if hasattr(state, "quadrature"):
        return state.quadrature(grid)
    return qd.accumulate(state.rates(grid.points), grid.step, qd.SCHEMES[grid.scheme])


def _check_grid(state: IntensityState, grid: PredictionGrid) -> None:
    if grid.t_start < state.t_last:
        raise ValidationError(f"grid starts at {grid.t_start}, before the last event at {state.t_last}")


def time_pdf(state: IntensityState, t, n_points: int = 1000, scheme: str = "right_riemann") -> np.ndarray:
    """``f(t)`` for each requested ``t > t_last``; the inner integral uses ``n_points`` grid nodes."""
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    code = qd.SCHEMES[scheme]
    out = np.empty(ts.shape)
    for i, ti in enumerate(ts):
        if ti <= state.t_last:
            raise ValidationError("time_pdf needs t after the last event")
        g = state.t_last + np.linspace(0.0, 1.0, n_points) * (ti - state.t_last)
        total = state.rates(g).sum(axis=1)
        h = g[1] - g[0]
        if code == qd.RIGHT_RIEMANN:
            cum = total[1:].sum() * h
        else:
            cum = (0.5 * (total[0] + total[-1]) + total[1:-1].sum()) * h
        out[i] = total[-1] * math.exp(-cum)
    return out if np.ndim(t) else out[0]


def _integrate(state: IntensityState, grid: PredictionGrid, extensions: int = 0):
    _check_grid(state, grid)
    for attempt in range(extensions + 1):
        if attempt:
            grid = grid.extended()
        s_t, s_f, s_k, cum = _quadrature(state, grid)
        mass = -math.expm1(-cum)
        if mass >= TARGET_MASS:
            break
    if mass < WARN_MASS:
        warnings.warn(f"captured probability mass {mass:.4f} below {WARN_MASS} on [{grid.t_start}, {grid.t_end}]",
                      LowMassWarning, stacklevel=3)
    return s_t, s_f, np.asarray(s_k), mass, grid


def expected_time(state: IntensityState, grid: PredictionGrid) -> float:
    """Grid estimate of the mean next event time, divided by the captured mass."""
    s_t, _, _, mass, _ = _integrate(state, grid)
    return grid.t_start + s_t / mass if mass > 0 else math.nan


def type_marginal(state: IntensityState, grid: PredictionGrid) -> np.ndarray:
    """Marginal next-type distribution (sums to one)."""
    _, s_f, s_k, _, _ = _integrate(state, grid)
    return s_k / s_f if s_f > 0 else np.full(state.K, 1.0 / state.K)


def conditional_type_probs(state: IntensityState, t: float) -> np.ndarray:
    """Type distribution given that the next event happens exactly at ``t`` (diagnostic only)."""
    lam = state.rates(np.array([float(t)]))[0]
    return lam / lam.sum()


def default_grid(t_last: float, mean_gap: float, n_points: int = 1000, scheme: str = "right_riemann") -> PredictionGrid:
    return PredictionGrid(float(t_last), float(t_last) + 10.0 * float(mean_gap), n_points, scheme)


def predict_state(state: IntensityState, grid: PredictionGrid, auto_extend: bool = True) -> PredictionResult:
    """Expected time, marginal types and argmax type in one integration pass.

    With ``auto_extend`` the grid length doubles (at most four times) until
    the captured mass reaches 0.999.
    """
    s_t, s_f, s_k, mass, used = _integrate(state, grid, MAX_EXTENSIONS if auto_extend else 0)
    if s_f > 0 and mass > 0:
        probs = s_k / s_f
        t_hat = used.t_start + s_t / mass
    else:
        probs = np.full(state.K, 1.0 / state.K)
        t_hat = math.nan
    return PredictionResult(float(t_hat), probs, int(np.argmax(probs)), float(mass), used.t_end)


def model_state(model: VNTPP, history: EventSequence | None, base: np.ndarray | None = None) -> HeadState:
    """Eval-mode head state after ``history`` (``None`` means before the first event)."""
    if base is None:
        if history is None:
            raise ValidationError("pass a base vector for an empty history")
        base = model.head_bases([history])[0][-1]
    t_last = 0.0 if history is None else float(history.times[-1])
    return HeadState(np.asarray(base, dtype=float), model.params["head.alpha"].data.copy(), model.cfg.variant, t_last)


def predict_next(model: VNTPP, history: EventSequence, grid: PredictionGrid | None = None,
                 n_points: int = 1000, scheme: str = "right_riemann") -> PredictionResult:
    state = model_state(model, history)
    if grid is None:
        grid = default_grid(state.t_last, model.mean_gap, n_points, scheme)
    return predict_state(state, grid)


@dataclass(frozen=True)
class PositionPrediction:
    seq_id: int
    pos: int
    t_prev: float
    t_true: float
    k_true: int
    result: PredictionResult

    def to_json(self) -> dict:
        rec = {"seq_id": self.seq_id, "pos": self.pos, "t_true": self.t_true, "k_true": self.k_true}
        rec.update(self.result.to_json())
        return rec


def _positions(seqs, states_for, mean_gap, n_points, scheme, first_pos):
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", LowMassWarning)
        for sid, seq in enumerate(seqs):
            for pos, state in states_for(seq):
                if pos < first_pos:
                    continue
                grid = default_grid(state.t_last, mean_gap, n_points, scheme)
                res = predict_state(state, grid)
                out.append(PositionPrediction(sid, pos, state.t_last, float(seq.times[pos]), int(seq.types[pos]), res))
    return out


def predict_sequences(model: VNTPP, seqs, n_points: int = 1000, scheme: str = "right_riemann",
                      first_pos: int = 1, mean_gap: float | None = None) -> list[PositionPrediction]:
    """Predict every event at index ``>= first_pos`` from the events before it.

    Low-mass warnings are suppressed per position; callers can check
    ``pdf_mass`` on the results.
    """
    seqs = list(seqs)
    bases = model.head_bases(seqs)
    alpha = model.params["head.alpha"].data.copy()
    by_id = {id(s): b for s, b in zip(seqs, bases)}

    def states_for(seq):
        b = by_id[id(seq)]
        for pos in range(len(seq)):
            t_last = float(seq.times[pos - 1]) if pos > 0 else 0.0
            yield pos, HeadState(b[pos], alpha, model.cfg.variant, t_last)

    return _positions(seqs, states_for, mean_gap or model.mean_gap, n_points, scheme, first_pos)


def hawkes_predict_sequences(spec: HawkesSpec, seqs, mean_gap: float, n_points: int = 1000,
                             scheme: str = "right_riemann", first_pos: int = 1) -> list[PositionPrediction]:
    def states_for(seq):
        for pos in range(len(seq)):
            yield pos, HawkesState(spec, seq.prefix(pos) if pos > 0 else None)

    return _positions(list(seqs), states_for, mean_gap, n_points, scheme, first_pos)
