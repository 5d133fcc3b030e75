"""Central finite-difference gradient checking."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .tensor import Tensor, backward, current_tape, no_grad


@dataclass
class GradCheckReport:
    errors: dict = field(default_factory=dict)  # name -> max relative error
    tol: float = 1e-6

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tol

    def failures(self) -> dict:
        return {k: v for k, v in self.errors.items() if not v < self.tol}

    def __str__(self) -> str:
        lines = [f"grad_check {'PASS' if self.passed else 'FAIL'} (max rel err {self.max_error:.3e}, tol {self.tol:g})"]
        for name, err in sorted(self.errors.items(), key=lambda kv: -kv[1]):
            lines.append(f"  {name:<40s} {err:.3e}")
        return "\n".join(lines)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8, scaled: bool = False) -> float:
    """Max relative discrepancy between two gradient arrays.

    Elementwise mode divides each ``|a - b|`` by ``max(|a|, |b|, floor)``.
    ``scaled=True`` divides the largest absolute discrepancy by the largest
    gradient magnitude of the tensor instead, which is insensitive to
    finite-difference roundoff on entries whose gradient is near zero.
    """
    a = np.asarray(analytic, dtype=float).ravel()
    b = np.asarray(numeric, dtype=float).ravel()
    diff = np.abs(a - b)
    if scaled:
        return float(diff.max(initial=0.0) / max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), floor))
    return float((diff / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)).max(initial=0.0))


def numeric_grad(f: Callable[[], Tensor], p: Tensor, h: float) -> np.ndarray:
    out = np.zeros(p.shape)
    flat = p.data.reshape(-1)
    grad_flat = out.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            fp = f().item()
            flat[i] = orig - h
            fm = f().item()
            flat[i] = orig
            grad_flat[i] = (fp - fm) / (2.0 * h)
    return out


def grad_check(
    f: Callable[[], Tensor],
    params: dict[str, Tensor],
    h: float = 1e-5,
    tol: float = 1e-6,
    floor: float = 1e-8,
    scaled: bool = False,
) -> GradCheckReport:
    """Compare backward-pass gradients of ``f()`` with central differences.

    ``f`` must be a deterministic function of the tensors in ``params``
    (fix any noise it draws). Parameter data is perturbed in place and
    restored.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-7, 1e-3]")
    for p in params.values():
        p.data = np.array(p.data, dtype=np.float64, copy=True)
        p.grad = None
    current_tape().clear()
    backward(f())
    analytic = {name: (p.grad if p.grad is not None else np.zeros(p.shape)).copy() for name, p in params.items()}
    report = GradCheckReport(tol=tol)
    for name, p in params.items():
        num = numeric_grad(f, p, h)
        report.errors[name] = relative_error(analytic[name], num, floor, scaled)
    for p in params.values():
        p.grad = None
    return report
