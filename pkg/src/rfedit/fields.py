"""Velocity and noise-prediction fields.

Closed-form conditional Gaussian flow fields (a straight-path field and a
schedule-driven curved field), noise schedules, conversions between the
velocity and noise-prediction parametrizations, a window-wise trajectory
straightening operator, and an auxiliary drift hook toward a reference
trajectory.

All velocity fields share the engine's denoising orientation (see
``flow_core``): adding ``v * dt`` moves a latent toward the data end t=0.
For the Gaussian data model ``x0 ~ N(m_c, sigma^2 I)``, ``eps ~ N(0, I)``
that orientation makes the straight-path field the posterior-mean velocity
``v(z, t, c) = E[x0 - eps | z_t = z]`` under ``z_t = (1-t) x0 + t eps``.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import ConfigurationError, DomainError
from .flow_core import Condition, TimeGrid, TimeSide

SCHEDULE_NAMES = ("cosine", "linear")
STRAIGHTEN_SUBSTEPS = 256


@dataclass(frozen=True)
class NoiseSchedule:
    """Cumulative signal level ab(t): smooth, strictly decreasing on (0, 1),
    ab(0) = 1, truncated to ab(1) = alpha_min."""

    name: str
    alpha_min: float = 1e-4

    def __post_init__(self):
        if self.name not in SCHEDULE_NAMES:
            raise ConfigurationError(f"unknown schedule {self.name!r}; choose from {SCHEDULE_NAMES}")
        if not 0.0 < self.alpha_min < 1.0:
            raise ConfigurationError("alpha_min must lie in (0, 1)")

    def alpha_bar(self, t):
        span = 1.0 - self.alpha_min
        if self.name == "cosine":
            return self.alpha_min + span * np.cos(0.5 * math.pi * np.asarray(t)) ** 2
        return 1.0 - span * np.asarray(t)

    def d_alpha_bar(self, t):
        span = 1.0 - self.alpha_min
        if self.name == "cosine":
            return -span * 0.5 * math.pi * np.sin(math.pi * np.asarray(t))
        return -span * np.ones_like(np.asarray(t, dtype=float))


def make_schedule(name: str = "cosine", alpha_min: float = 1e-4) -> NoiseSchedule:
    return NoiseSchedule(name=name, alpha_min=alpha_min)


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """Isotropic Gaussian mixture stand-in for the data distribution, one
    component per condition id; the component mean doubles as the condition
    embedding."""

    means: dict[str, np.ndarray]
    sigma: float = 1.0

    def __post_init__(self):
        if not self.means:
            raise ConfigurationError("model needs at least one component mean")
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigurationError("sigma must be positive and finite")
        converted = {}
        dim = None
        for cid, m in self.means.items():
            arr = np.asarray(m, dtype=float)
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"mean for component {cid!r} must be a finite vector")
            if dim is None:
                dim = arr.size
            elif arr.size != dim:
                raise ConfigurationError("all component means must share one dimension")
            arr.setflags(write=False)
            converted[cid] = arr
        object.__setattr__(self, "means", converted)

    @property
    def dim(self) -> int:
        return next(iter(self.means.values())).size

    def condition(self, cid: str) -> Condition:
        return Condition(id=cid, embedding=self.mean(cid))

    def mean(self, cid: str) -> np.ndarray:
        try:
            return self.means[cid]
        except KeyError:
            raise DomainError(f"unknown condition id {cid!r}") from None

    def mean_for(self, c: Condition) -> np.ndarray:
        return self.mean(c.id)


class VelocityField(abc.ABC):
    """Deterministic velocity field v(z, t, c), oriented toward data."""

    dim: int

    @abc.abstractmethod
    def evaluate(self, z, t: float, c: Condition, side: TimeSide = TimeSide.BELOW) -> np.ndarray:
        """Velocity in latent units per unit time; finite for finite input."""


class AffineVelocityField(VelocityField):
    """Field that is affine in z at fixed (t, c): v = alpha(t, c) * z + beta(t, c)
    with scalar alpha (isotropic)."""

    @abc.abstractmethod
    def affine_coefficients(self, t: float, c: Condition) -> tuple[float, np.ndarray]:
        ...

    def evaluate(self, z, t, c, side=TimeSide.BELOW):
        alpha, beta = self.affine_coefficients(float(t), c)
        return alpha * np.asarray(z, dtype=float) + beta


class EpsilonField(abc.ABC):
    """Noise-prediction field with its cumulative signal schedule."""

    dim: int

    @abc.abstractmethod
    def evaluate_eps(self, z, t: float, c: Condition) -> np.ndarray:
        ...

    @abc.abstractmethod
    def alpha_bar(self, t: float) -> float:
        ...


class GaussianRFField(AffineVelocityField):
    """Exact posterior-mean velocity for the straight interpolation path
    z_t = (1-t) x0 + t eps over a Gaussian component.

    With a = 1-t, b = t, P = a^2 sigma^2 + b^2 the field is affine:

        v(z, t, c) = m_c + ((a sigma^2 - b) / P) * (z - a m_c)

    which equals E[x0 - eps | z_t = z].  The marginals are
    N((1-t) m_c, P I); the exact flow map between times is the affine
    transport between those marginals.
    """

    def __init__(self, model: GaussianModel):
        self.model = model
        self.dim = model.dim

    def _slope(self, t: float) -> float:
        a = 1.0 - t
        b = t
        s2 = self.model.sigma ** 2
        return (a * s2 - b) / (a * a * s2 + b * b)

    def affine_coefficients(self, t, c):
        m = self.model.mean_for(c)
        q = self._slope(float(t))
        return q, m * (1.0 - q * (1.0 - float(t)))

    def marginal(self, t: float, c: Condition) -> tuple[np.ndarray, float]:
        m = self.model.mean_for(c)
        a = 1.0 - t
        return a * m, math.sqrt(a * a * self.model.sigma ** 2 + t * t)

    def flow_map(self, t_from: float, t_to: float, z, c: Condition) -> np.ndarray:
        """Exact transport of a state from t_from to t_to along the field."""
        mu_f, s_f = self.marginal(float(t_from), c)
        mu_t, s_t = self.marginal(float(t_to), c)
        return mu_t + (s_t / s_f) * (np.asarray(z, dtype=float) - mu_f)


class GaussianVPField(AffineVelocityField):
    """Probability-flow velocity for the schedule-driven noising path
    z_t = sqrt(ab) x0 + sqrt(1-ab) eps over a Gaussian component.

    Marginals are N(sqrt(ab) m_c, (ab sigma^2 + 1 - ab) I); the field is the
    (data-oriented) affine transport velocity of that marginal path.  Its
    integral curves are genuinely curved whenever sigma != 1.
    """

    def __init__(self, model: GaussianModel, schedule: NoiseSchedule):
        self.model = model
        self.schedule = schedule
        self.dim = model.dim

    def _parts(self, t: float) -> tuple[float, float, float]:
        ab = float(self.schedule.alpha_bar(t))
        dab = float(self.schedule.d_alpha_bar(t))
        s2 = self.model.sigma ** 2
        var = ab * s2 + 1.0 - ab
        sdot_over_s = dab * (s2 - 1.0) / (2.0 * var)
        return ab, dab, sdot_over_s

    def affine_coefficients(self, t, c):
        m = self.model.mean_for(c)
        ab, dab, sdot_over_s = self._parts(float(t))
        mu = math.sqrt(ab) * m
        mudot = dab / (2.0 * math.sqrt(ab)) * m
        alpha = -sdot_over_s
        beta = -mudot - alpha * mu
        return alpha, beta

    def marginal(self, t: float, c: Condition) -> tuple[np.ndarray, float]:
        m = self.model.mean_for(c)
        ab = float(self.schedule.alpha_bar(t))
        var = ab * self.model.sigma ** 2 + 1.0 - ab
        return math.sqrt(ab) * m, math.sqrt(var)

    def flow_map(self, t_from: float, t_to: float, z, c: Condition) -> np.ndarray:
        mu_f, s_f = self.marginal(float(t_from), c)
        mu_t, s_t = self.marginal(float(t_to), c)
        return mu_t + (s_t / s_f) * (np.asarray(z, dtype=float) - mu_f)


class GaussianEpsField(EpsilonField):
    """Exact posterior-mean noise prediction E[eps | z_t] for the
    schedule-driven path, playing the noise-prediction network."""

    def __init__(self, model: GaussianModel, schedule: NoiseSchedule):
        self.model = model
        self.schedule = schedule
        self.dim = model.dim

    def alpha_bar(self, t):
        return float(self.schedule.alpha_bar(t))

    def evaluate_eps(self, z, t, c):
        m = self.model.mean_for(c)
        ab = self.alpha_bar(t)
        var = ab * self.model.sigma ** 2 + 1.0 - ab
        root = math.sqrt(1.0 - ab)
        return root / var * (np.asarray(z, dtype=float) - math.sqrt(ab) * m)


def _split_coefficients(schedule: NoiseSchedule, t: float) -> tuple[float, float, float]:
    ab = float(schedule.alpha_bar(t))
    dab = float(schedule.d_alpha_bar(t))
    if 1.0 - ab <= 0.0:
        raise DomainError(f"noise level vanishes at t={t:g} (alpha_bar=1); eps split undefined")
    return ab, -dab / (2.0 * math.sqrt(ab)), dab / (2.0 * math.sqrt(1.0 - ab))


def velocity_from_eps(schedule: NoiseSchedule, z, t: float, eps_hat) -> np.ndarray:
    """Velocity implied by a noise prediction under z = sqrt(ab) x0_hat +
    sqrt(1-ab) eps_hat: differentiate the path holding the split fixed and
    orient toward data."""
    ab, coef_x0, coef_eps = _split_coefficients(schedule, float(t))
    z = np.asarray(z, dtype=float)
    eps_hat = np.asarray(eps_hat, dtype=float)
    x0_hat = (z - math.sqrt(1.0 - ab) * eps_hat) / math.sqrt(ab)
    return coef_x0 * x0_hat + coef_eps * eps_hat


def eps_from_velocity(schedule: NoiseSchedule, z, t: float, v) -> np.ndarray:
    """Noise prediction implied by a velocity: solve the 2x2 system
    {z = sqrt(ab) x0_hat + sqrt(1-ab) eps_hat, v = coef_x0 x0_hat + coef_eps eps_hat}."""
    ab, coef_x0, coef_eps = _split_coefficients(schedule, float(t))
    if float(schedule.d_alpha_bar(t)) >= 0.0:
        raise DomainError(f"schedule is not strictly decreasing at t={t:g}; eps extraction undefined")
    z = np.asarray(z, dtype=float)
    v = np.asarray(v, dtype=float)
    det = math.sqrt(ab) * coef_eps - math.sqrt(1.0 - ab) * coef_x0
    return (math.sqrt(ab) * v - coef_x0 * z) / det


@dataclass(frozen=True, eq=False)
class AuxHook:
    """Reference trajectory for auxiliary structural conditioning.

    ``reference(t)`` interpolates the anchors linearly in time (clamped at the
    ends); the hooked field drifts toward it with strength ``scale``.
    """

    times: np.ndarray
    anchors: np.ndarray
    scale: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        anchors = np.asarray(self.anchors, dtype=float)
        if times.ndim != 1 or anchors.shape[0] != times.size:
            raise ConfigurationError("hook needs one anchor per time")
        if not np.all(np.diff(times) > 0):
            raise ConfigurationError("hook anchor times must be strictly increasing")
        if not (np.all(np.isfinite(anchors)) and np.isfinite(self.scale) and self.scale >= 0):
            raise ConfigurationError("hook anchors and scale must be finite, scale >= 0")
        times.setflags(write=False)
        anchors.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "anchors", anchors)

    @classmethod
    def from_latents(cls, grid: TimeGrid, latents: np.ndarray, scale: float) -> "AuxHook":
        n = np.asarray(latents).shape[0]
        return cls(times=grid.times[:n], anchors=np.asarray(latents, dtype=float), scale=scale)

    def reference(self, t: float) -> np.ndarray:
        cols = [np.interp(t, self.times, self.anchors[:, d]) for d in range(self.anchors.shape[1])]
        return np.asarray(cols, dtype=float)


class HookedField(VelocityField):
    """Base field plus the drift scale * (reference(t) - z)."""

    def __init__(self, base: VelocityField, hook: AuxHook):
        self.base = base
        self.hook = hook
        self.dim = base.dim

    def evaluate(self, z, t, c, side=TimeSide.BELOW):
        v = self.base.evaluate(z, t, c, side=side)
        return v + self.hook.scale * (self.hook.reference(float(t)) - np.asarray(z, dtype=float))


def with_aux_hook(field: VelocityField, hook: AuxHook) -> VelocityField:
    """Wrap a field with an auxiliary anchor drift; scale 0 reproduces the
    base field bit-exactly."""
    return HookedField(field, hook)


def _window_flow_map(base: AffineVelocityField, c: Condition, t_hi: float, t_lo: float,
                     substeps: int) -> tuple[float, np.ndarray]:
    """Integrate dA/dt = -alpha A, db/dt = -(alpha b + beta) from t_hi down to
    t_lo with classic RK4 on a fixed sub-grid; (A, b) is the affine map
    carrying a window-entry state to time t_lo along the base field."""
    h = (t_lo - t_hi) / substeps
    A = 1.0
    b = np.zeros(base.dim)

    def deriv(t, A_val, b_val):
        alpha, beta = base.affine_coefficients(t, c)
        return -alpha * A_val, -(alpha * b_val + beta)

    t = t_hi
    for _ in range(substeps):
        k1A, k1b = deriv(t, A, b)
        k2A, k2b = deriv(t + 0.5 * h, A + 0.5 * h * k1A, b + 0.5 * h * k1b)
        k3A, k3b = deriv(t + 0.5 * h, A + 0.5 * h * k2A, b + 0.5 * h * k2b)
        k4A, k4b = deriv(t + h, A + h * k3A, b + h * k3b)
        A = A + h / 6.0 * (k1A + 2.0 * k2A + 2.0 * k3A + k4A)
        b = b + h / 6.0 * (k1b + 2.0 * k2b + 2.0 * k3b + k4b)
        t += h
    return A, b


class StraightenedField(VelocityField):
    """Window-wise straight-line transport field.

    Within each window [t_a, t_b] the field moves every state along the
    straight line joining a window-entry state X_b (at t_b) to the base
    field's exit state A*X_b + b (at t_a), at constant velocity.  The affine
    window maps (A, b) are integrated once per (window, condition) at
    construction; evaluation inverts the line through (z, t) and returns its
    chord velocity, an explicit affine function of z.

    The field is two-valued exactly at interior window joints; the ``side``
    argument of ``evaluate`` selects the segment (see flow_core.TimeSide).
    """

    def __init__(self, base: AffineVelocityField, window_bounds: np.ndarray,
                 substeps: int = STRAIGHTEN_SUBSTEPS):
        if not isinstance(base, AffineVelocityField):
            raise ConfigurationError("straightening requires an affine base field")
        model = getattr(base, "model", None)
        if model is None:
            raise ConfigurationError("straightening requires a field with a Gaussian model")
        self.base = base
        self.dim = base.dim
        bounds = np.asarray(window_bounds, dtype=float)
        if bounds.ndim != 1 or bounds.size < 2 or not np.all(np.diff(bounds) > 0):
            raise ConfigurationError("window bounds must be a sorted vector with >= 2 entries")
        bounds.setflags(write=False)
        self.bounds = bounds
        self._maps: dict[tuple[int, str], tuple[float, np.ndarray]] = {}
        for w in range(bounds.size - 1):
            t_lo, t_hi = float(bounds[w]), float(bounds[w + 1])
            for cid in model.means:
                cond = model.condition(cid)
                self._maps[(w, cid)] = _window_flow_map(base, cond, t_hi, t_lo, substeps)

    def n_windows(self) -> int:
        return self.bounds.size - 1

    def window_map(self, w: int, c: Condition) -> tuple[float, np.ndarray]:
        try:
            return self._maps[(w, c.id)]
        except KeyError:
            raise DomainError(f"unknown condition id {c.id!r}") from None

    def _window_index(self, t: float, side: TimeSide) -> int:
        b = self.bounds
        if t < b[0] or t > b[-1]:
            raise DomainError(f"t={t:g} outside the straightened span [{b[0]:g}, {b[-1]:g}]")
        idx = int(np.searchsorted(b, t, side="left"))
        if idx < b.size and b[idx] == t:
            w = idx if side is TimeSide.ABOVE else idx - 1
        else:
            w = idx - 1
        return min(max(w, 0), b.size - 2)

    def evaluate(self, z, t, c, side=TimeSide.BELOW):
        t = float(t)
        w = self._window_index(t, side)
        t_lo, t_hi = float(self.bounds[w]), float(self.bounds[w + 1])
        A, b = self.window_map(w, c)
        lam = (t - t_lo) / (t_hi - t_lo)
        den = (1.0 - lam) * A + lam
        x_entry = (np.asarray(z, dtype=float) - (1.0 - lam) * b) / den
        return ((A - 1.0) * x_entry + b) / (t_hi - t_lo)


def straighten(field: AffineVelocityField, grid: TimeGrid) -> StraightenedField:
    """Straighten an affine field window-by-window on the grid's windows."""
    grid.require_windows()
    return StraightenedField(field, grid.window_bounds)
