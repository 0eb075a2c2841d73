"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass
class GradCheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    checked: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, tol: float) -> bool:
        return self.max_error < tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor_frac: float = 1e-3) -> float:
    """Max elementwise ``|a - n| / max(|a|, |n|, floor)``.

    ``floor`` is ``floor_frac`` times the largest gradient magnitude in the
    tensor, so components that are numerically zero do not blow up the ratio.
    """
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    if a.size == 0:
        return 0.0
    scale = max(np.abs(a).max(), np.abs(n).max())
    floor = max(floor_frac * scale, 1e-30)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(np.abs(a - n) / denom))


def numeric_grad(loss_fn: Callable[[], float], x: np.ndarray, coords, h: float = 1e-4) -> np.ndarray:
    """Central differences of ``loss_fn`` w.r.t. ``x`` (perturbed in place) at flat ``coords``."""
    flat = x.reshape(-1)
    out = np.empty(len(coords))
    for n, i in enumerate(coords):
        old = flat[i]
        flat[i] = old + h
        fp = float(loss_fn())
        flat[i] = old - h
        fm = float(loss_fn())
        flat[i] = old
        out[n] = (fp - fm) / (2 * h)
    return out


def grad_check(
    loss_fn: Callable[[], float],
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    h: float = 1e-4,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
) -> GradCheckReport:
    """Compare ``analytic`` gradients with central differences of ``loss_fn``.

    ``loss_fn`` must read the arrays in ``params`` (they are perturbed in
    place and restored). Large tensors are subsampled to ``max_coords``
    random coordinates. ``analytic`` may come from a different precision than
    ``params``; that is how 32-bit kernels are checked against a 64-bit oracle.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    report = GradCheckReport()
    for name, p in params.items():
        size = p.size
        if max_coords is not None and size > max_coords:
            coords = np.sort(rng.choice(size, size=max_coords, replace=False))
        else:
            coords = np.arange(size)
        num = numeric_grad(loss_fn, p, coords, h)
        ana = np.asarray(analytic[name]).reshape(-1)[coords]
        report.errors[name] = relative_error(ana, num)
        report.checked[name] = len(coords)
    return report
