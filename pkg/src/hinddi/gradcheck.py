"""Central finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .autodiff import NonFiniteError, PrecisionError, Tensor, backward, zero_grad

__all__ = ["GradCheckRecord", "GradCheckReport", "finite_diff_check"]


@dataclass
class GradCheckRecord:
    """One probed coordinate: analytic vs numeric derivative."""
    name: str
    index: tuple
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_by_param: dict[str, GradCheckRecord] = field(default_factory=dict)
    records: list[GradCheckRecord] = field(default_factory=list)


def _rel_error(a: float, n: float) -> float:
    # Relative error with a unit floor so exact-zero gradients are not
    # flagged by finite-difference rounding noise.
    return abs(a - n) / max(1.0, abs(a), abs(n))


def finite_diff_check(forward: Callable[[], Tensor],
                      params: Mapping[str, Tensor],
                      probes: int = 5,
                      epsilon: float = 1e-5,
                      rng: np.random.Generator | None = None) -> GradCheckReport:
    """Compare backward() gradients against central finite differences.

    `forward` must rebuild the loss graph from the current parameter values
    on every call. For each parameter up to `probes` coordinates are
    sampled; each is perturbed by +/-epsilon and the central difference
    (f(x+eps) - f(x-eps)) / (2 eps) is compared with the analytic gradient.

    Parameters must be float64: finite differences are unreliable at
    float32 resolution.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    named = list(params.items())
    for name, p in named:
        if p.dtype != np.float64:
            raise PrecisionError(f"finite_diff_check requires float64 parameters ({name} is {p.dtype})")

    tensors = [p for _, p in named]
    zero_grad(tensors)
    loss = forward()
    if not np.isfinite(loss.data):
        raise NonFiniteError("finite_diff_check: loss is non-finite at the probe point")
    backward(loss, tensors)
    analytic = {name: p.grad.copy() for name, p in named}

    report = GradCheckReport(max_rel_error=0.0)
    for name, p in named:
        flat_size = p.data.size
        if flat_size <= probes:
            coords = np.arange(flat_size)
        else:
            coords = rng.choice(flat_size, size=probes, replace=False)
        flat = p.data.reshape(-1)
        for c in coords:
            original = flat[c]
            flat[c] = original + epsilon
            loss_plus = forward().item()
            flat[c] = original - epsilon
            loss_minus = forward().item()
            flat[c] = original
            if not (np.isfinite(loss_plus) and np.isfinite(loss_minus)):
                raise NonFiniteError(f"finite_diff_check: non-finite loss probing {name}")
            numeric = (loss_plus - loss_minus) / (2.0 * epsilon)
            a = float(analytic[name].reshape(-1)[c])
            index = tuple(int(v) for v in np.unravel_index(int(c), p.data.shape))
            rec = GradCheckRecord(name=name, index=index,
                                  analytic=a, numeric=numeric,
                                  rel_error=_rel_error(a, numeric))
            report.records.append(rec)
            worst = report.worst_by_param.get(name)
            if worst is None or rec.rel_error > worst.rel_error:
                report.worst_by_param[name] = rec
            report.max_rel_error = max(report.max_rel_error, rec.rel_error)
    return report
