"""Consistency and alignment analogs for edited latents."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .fields import GaussianModel
from .flow_core import Condition


@dataclass(frozen=True)
class MetricReport:
    """Per-run metric bundle; psnr is +inf when mse is exactly zero."""

    mse: float
    psnr: float
    consistency: float
    alignment: float
    roundtrip: float
    nfe: int


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b, peak: float) -> float:
    """10 log10(peak^2 / mse), with a +inf sentinel at mse = 0."""
    if not (np.isfinite(peak) and peak > 0):
        raise DomainError("peak must be positive and finite")
    m = mse(a, b)
    if m == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / m)


def consistency(a, b, mask) -> float:
    """MSE restricted to the dimensions excluded by the mask (mask == 0).

    A mask of all ones leaves an empty region, defined as 0 so fully-masked
    sweeps stay plottable.
    """
    a, b = _pair(a, b)
    sel = np.asarray(mask, dtype=float) == 0.0
    if sel.shape != a.shape:
        raise DomainError(f"mask shape {sel.shape} does not match {a.shape}")
    if not np.any(sel):
        return 0.0
    return float(np.mean((a[sel] - b[sel]) ** 2))


def alignment(z, model: GaussianModel, c_tgt: Condition) -> float:
    """Log-density analog of prompt alignment: -||z - m_tgt||^2 / (2 sigma^2);
    higher is better, maximum 0 at the component mean."""
    m = model.mean_for(c_tgt)
    z = np.asarray(z, dtype=float)
    d = z - m
    return float(-np.dot(d, d) / (2.0 * model.sigma ** 2))


def default_peak(model: GaussianModel) -> float:
    """Stable PSNR scale for toy latents: the largest absolute coordinate the
    data model reaches within three standard deviations."""
    top = max(float(np.max(np.abs(m))) for m in model.means.values())
    return top + 3.0 * model.sigma
