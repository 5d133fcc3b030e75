"""Multivariate Hawkes processes: specification, exact simulation, intensities, compensators."""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import Dataset, EventSequence
from .errors import ExplosionGuard, StabilityWarning, TimeOrderError, UnsupportedKernel, ValidationError
from .kernels import hawkes as hk


@dataclass(frozen=True)
class ExponentialKernel:
    beta: float

    type = "exponential"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValidationError(f"exponential kernel needs beta > 0, got {self.beta}")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        return np.where(s >= 0, self.beta * np.exp(-self.beta * np.maximum(s, 0.0)), 0.0)

    @property
    def code(self):
        return hk.EXPONENTIAL, self.beta, 1.0

    def to_json(self) -> dict:
        return {"type": "exponential", "beta": self.beta}


@dataclass(frozen=True)
class GaussianKernel:
    center: float
    width: float

    type = "gaussian"

    def __post_init__(self):
        if self.center < 0 or not self.width > 0:
            raise ValidationError("gaussian kernel needs center >= 0 and width > 0")

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        z = (s - self.center) / self.width
        return np.where(s >= 0, np.exp(-0.5 * z * z) / (self.width * math.sqrt(2 * math.pi)), 0.0)

    @property
    def code(self):
        return hk.GAUSSIAN, self.center, self.width

    def to_json(self) -> dict:
        return {"type": "gaussian", "center": self.center, "width": self.width}


Kernel = ExponentialKernel | GaussianKernel


def kernel_from_json(obj: dict) -> Kernel:
    kind = obj.get("type")
    if kind == "exponential":
        return ExponentialKernel(float(obj["beta"]))
    if kind == "gaussian":
        return GaussianKernel(float(obj["center"]), float(obj["width"]))
    raise ValidationError(f"unknown kernel type {kind!r}")


@dataclass(frozen=True)
class HawkesSpec:
    """Ground-truth model: ``lambda_k(t) = mu_k + sum_j a[k, k_j] f(t - t_j)``.

    ``a[k, k']`` is the strength of ``k'`` exciting ``k``. Both kernels
    integrate to (at most) one, so ``a`` is the branching matrix.
    """

    mu: np.ndarray
    a: np.ndarray
    kernel: Kernel
    horizon: float | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        mu = np.array(self.mu, dtype=np.float64)
        a = np.array(self.a, dtype=np.float64)
        K = mu.shape[0]
        if mu.ndim != 1 or a.shape != (K, K):
            raise ValidationError(f"mu has shape {mu.shape} but a has shape {a.shape}")
        if np.any(mu <= 0):
            raise ValidationError("base intensities must be > 0")
        if np.any(a < 0):
            raise ValidationError("excitation entries must be >= 0 (inhibition is not supported)")
        mu.flags.writeable = False
        a.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "a", a)
        if a.sum(axis=1).max(initial=0.0) >= 1.0:
            warnings.warn(
                f"largest row sum of a is {a.sum(axis=1).max():.3f} >= 1; the process may be explosive",
                StabilityWarning,
                stacklevel=3,
            )

    @property
    def K(self) -> int:
        return self.mu.shape[0]

    def stationary_rates(self) -> np.ndarray:
        """Long-run per-type event rates ``(I - a)^{-1} mu`` (valid when stable)."""
        return np.linalg.solve(np.eye(self.K) - self.a, self.mu)

    def to_json(self) -> dict:
        out = {"K": self.K, "mu": self.mu.tolist(), "a": self.a.tolist(), "kernel": self.kernel.to_json()}
        if self.horizon is not None:
            out["horizon"] = self.horizon
        out.update(self.meta)
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "HawkesSpec":
        try:
            mu = obj["mu"]
            a = obj["a"]
            kernel = kernel_from_json(obj["kernel"])
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"malformed Hawkes spec ({exc})") from exc
        if "K" in obj and int(obj["K"]) != len(mu):
            raise ValidationError(f"K={obj['K']} disagrees with len(mu)={len(mu)}")
        horizon = obj.get("horizon")
        meta = {k: v for k, v in obj.items() if k not in {"K", "mu", "a", "kernel", "horizon"}}
        return cls(mu, a, kernel, None if horizon is None else float(horizon), meta)


def load_spec(path: str | Path) -> HawkesSpec:
    """Load a spec file; bare names ``synthetic1``/``synthetic2`` resolve to the bundled specs."""
    p = Path(path)
    if not p.exists() and p.suffix in ("", ".json") and p.parent == Path("."):
        bundled = resources.files("vntpp.specs").joinpath(p.stem + ".json")
        if bundled.is_file():
            return HawkesSpec.from_json(json.loads(bundled.read_text()))
    return HawkesSpec.from_json(json.loads(p.read_text()))


def save_spec(spec: HawkesSpec, path: str | Path) -> Path:
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(spec.to_json(), indent=2))
    return p


@dataclass(frozen=True)
class IntensityTrace:
    grid: np.ndarray
    values: np.ndarray  # [K, len(grid)]

    def to_csv(self, path: str | Path, prefix: str = "lambda", extra: "IntensityTrace | None" = None,
               extra_prefix: str = "lambda_true") -> Path:
        cols = [self.grid] + list(self.values)
        header = ["t"] + [f"{prefix}_{k}" for k in range(self.values.shape[0])]
        if extra is not None:
            cols += list(extra.values)
            header += [f"{extra_prefix}_{k}" for k in range(extra.values.shape[0])]
        path = Path(path)
        np.savetxt(path, np.column_stack(cols), delimiter=",", header=",".join(header), comments="", fmt="%.17g")
        return path


def _history_arrays(history) -> tuple[np.ndarray, np.ndarray]:
    if history is None:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    if isinstance(history, EventSequence):
        return np.asarray(history.types), np.asarray(history.times)
    types, times = history
    return np.asarray(types, dtype=np.int64), np.asarray(times, dtype=float)


def true_intensity(spec: HawkesSpec, history, t: float) -> np.ndarray:
    """Per-type intensity at ``t`` given every event in ``history`` (all at or before ``t``)."""
    types, times = _history_arrays(history)
    if len(times) and times[-1] > t:
        raise TimeOrderError(f"t={t} precedes history event at {times[-1]}")
    kind, p1, p2 = spec.kernel.code
    return hk.grid_intensity(types, times, np.array([float(t)]), spec.mu, spec.a, kind, p1, p2, right=True)[0]


def intensity_on_grid(spec: HawkesSpec, seq, grid, right: bool = True) -> np.ndarray:
    """Intensities ``[len(grid), K]`` at the grid points, history taken from ``seq``."""
    types, times = _history_arrays(seq)
    kind, p1, p2 = spec.kernel.code
    return hk.grid_intensity(types, times, np.asarray(grid, dtype=float), spec.mu, spec.a, kind, p1, p2, right=right)


def intensity_trace(spec: HawkesSpec, seq: EventSequence, resolution: int = 500, horizon: float | None = None) -> IntensityTrace:
    if resolution < 2:
        raise ValueError("resolution must be >= 2")
    T = seq.horizon if horizon is None else horizon
    grid = np.linspace(0.0, T, resolution)
    return IntensityTrace(grid, intensity_on_grid(spec, seq, grid).T.copy())


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    entropy = list(seed) if isinstance(seed, (tuple, list)) else int(seed)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def simulate_arrays(spec: HawkesSpec, horizon: float, seed=0, cap: int = 1_000_000) -> tuple[np.ndarray, np.ndarray]:
    """Ogata thinning on ``(0, horizon]``; returns ``(types, times)`` (possibly empty).

    The uniform stream comes from a Philox generator keyed by ``seed``.
    When the stream runs dry the draw is repeated with a longer stream from
    the same key; Philox prefixes are stable so the result does not depend
    on the buffer size.
    """
    if not horizon > 0:
        raise ValueError("horizon must be > 0")
    kind, p1, p2 = spec.kernel.code
    expected = float(np.sum(spec.mu)) * horizon / max(1e-3, 1.0 - min(0.999, spec.a.sum(axis=1).max(initial=0.0)))
    n_u = int(8 * expected + 64)
    if kind == hk.GAUSSIAN:
        n_u += int(8 * horizon / spec.kernel.width)
    while True:
        u = _rng(seed).random(n_u)
        types, times, status = hk.thin(kind, spec.mu, spec.a, p1, p2, horizon, u, cap)
        if status == hk.OK:
            return types, times
        if status == hk.CAP_EXCEEDED:
            raise ExplosionGuard(f"simulation exceeded {cap} events before t={horizon}")
        n_u *= 2


def simulate(spec: HawkesSpec, horizon: float, seed=0, cap: int = 1_000_000) -> EventSequence | None:
    """Draw one sequence; ``None`` when no event falls in ``(0, horizon]``."""
    types, times = simulate_arrays(spec, horizon, seed, cap)
    if len(times) == 0:
        return None
    return EventSequence(types, times, horizon)


def generate_dataset(spec: HawkesSpec, n_sequences: int, horizon: float | None = None, seed: int = 0,
                     name: str = "hawkes", cap: int = 1_000_000) -> Dataset:
    """Simulate ``n_sequences`` non-empty sequences, sequence ``i`` keyed by ``(seed, i)``.

    Empty draws are skipped and the index advances, so the count is exact.
    """
    if n_sequences < 1:
        raise ValueError("n_sequences must be >= 1")
    horizon = horizon if horizon is not None else spec.horizon
    if horizon is None:
        raise ValueError("no horizon given and the spec has none")
    seqs = []
    i = 0
    while len(seqs) < n_sequences:
        s = simulate(spec, horizon, (seed, i), cap)
        i += 1
        if s is not None:
            seqs.append(s)
    return Dataset(tuple(seqs), spec.K, name)


def compensator_closed_form(spec: HawkesSpec, seq, t0: float, t1: float) -> float:
    """Exact ``int_{t0}^{t1} sum_k lambda_k(t) dt`` for the exponential kernel."""
    if not isinstance(spec.kernel, ExponentialKernel):
        raise UnsupportedKernel("closed-form compensator needs the exponential kernel; integrate numerically instead")
    if t1 < t0:
        raise ValueError("t0 must not exceed t1")
    if t1 == t0:
        return 0.0
    types, times = _history_arrays(seq)
    beta = spec.kernel.beta
    keep = times < t1
    tj = times[keep]
    col = spec.a.sum(axis=0)[types[keep]]
    lo = np.exp(-beta * np.maximum(0.0, t0 - tj))
    hi = np.exp(-beta * (t1 - tj))
    return float(spec.mu.sum() * (t1 - t0) + np.sum(col * (lo - hi)))


def compensator_increments(spec: HawkesSpec, seq: EventSequence, n_sub: int = 257) -> np.ndarray:
    """Integrated intensity between consecutive events, first interval starting at 0."""
    kind, p1, p2 = spec.kernel.code
    return hk.compensator_increments(seq.types, seq.times, spec.mu, spec.a, kind, p1, p2, n_sub)


def bundled_spec_names() -> Sequence[str]:
    return sorted(p.name[:-5] for p in resources.files("vntpp.specs").iterdir() if p.name.endswith(".json"))
