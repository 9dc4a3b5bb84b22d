"""Time discretization, Euler denoise/invert stepping, inversion and sampling
loops, and the one-shot DDIM-inversion baseline with evaluation accounting.

Conventions used throughout the engine:

* time runs from t=0 (data) to t=1 (noise);
* velocity fields point along the denoising direction, so a denoise step is
  ``z_{t_k} = z_{t_{k+1}} + v(z_{t_{k+1}}, t_{k+1}, c) * dt_k`` and an
  inversion step is ``z_{t_{k+1}} = z_{t_k} - v(z_{t_k}, t_k, c) * dt_k``;
* states are float64 arrays of shape ``(D,)``; every stepping routine also
  broadcasts over a leading batch axis ``(n, D)``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from .errors import ConfigurationError, DomainError, NumericalError

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .fields import EpsilonField, VelocityField

Latent = np.ndarray


class TimeSide(enum.Enum):
    """Which side of an evaluation time the current Euler step lies on.

    Piecewise fields (window-wise straightened ones) are two-valued exactly at
    window joints; the side picks the segment the step belongs to.  Denoise
    steps evaluate at their upper node, so the step interval lies BELOW the
    evaluation time; inversion steps evaluate at their lower node (ABOVE).
    """

    BELOW = -1
    ABOVE = 1


def as_state(z, name: str = "latent") -> np.ndarray:
    """Validate and convert a latent state to a float64 array."""
    arr = np.asarray(z, dtype=float)
    if arr.ndim == 0 or arr.shape[-1] < 1:
        raise DomainError(f"{name} must have at least one dimension")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} has non-finite entries")
    return arr


@dataclass(frozen=True, eq=False)
class Condition:
    """A prompt token: opaque id plus the embedding vector fields consume.

    Equality and hashing are by id only.
    """

    id: str
    embedding: np.ndarray

    def __post_init__(self):
        emb = np.asarray(self.embedding, dtype=float)
        if not np.all(np.isfinite(emb)):
            raise DomainError(f"condition {self.id!r} has a non-finite embedding")
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)

    def __eq__(self, other):
        return isinstance(other, Condition) and self.id == other.id

    def __hash__(self):
        return hash(self.id)


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Ordered discretization of t in [0, 1], optionally partitioned into
    windows whose bounds coincide with grid nodes (steps never straddle a
    window)."""

    times: np.ndarray
    window_bounds: np.ndarray | None = None

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 2:
            raise ConfigurationError("grid needs at least two time nodes")
        if not np.all(np.diff(times) > 0):
            raise ConfigurationError("grid times must be strictly increasing")
        if times[0] < 0.0 or times[-1] > 1.0:
            raise DomainError("grid times must lie in [0, 1]")
        times.setflags(write=False)
        object.__setattr__(self, "times", times)
        if self.window_bounds is not None:
            bounds = np.asarray(self.window_bounds, dtype=float)
            if bounds.ndim != 1 or bounds.size < 2 or not np.all(np.diff(bounds) > 0):
                raise ConfigurationError("window bounds must be a sorted vector with >= 2 entries")
            if bounds[0] != times[0] or bounds[-1] != times[-1]:
                raise ConfigurationError("window bounds must span the whole grid")
            if not np.all(np.isin(bounds, times)):
                raise ConfigurationError("every window bound must coincide with a grid node")
            bounds.setflags(write=False)
            object.__setattr__(self, "window_bounds", bounds)

    @property
    def n_steps(self) -> int:
        return self.times.size - 1

    def dt(self, k: int) -> float:
        if not 0 <= k < self.n_steps:
            raise DomainError(f"step index {k} outside [0, {self.n_steps})")
        return float(self.times[k + 1] - self.times[k])

    def windows(self) -> list[tuple[float, float]]:
        self.require_windows()
        b = self.window_bounds
        return [(float(b[i]), float(b[i + 1])) for i in range(b.size - 1)]

    def require_windows(self) -> None:
        if self.window_bounds is None:
            raise ConfigurationError("grid has no window bounds")


def make_uniform_grid(n_steps: int, t_lo: float = 0.0, t_hi: float = 1.0,
                      n_windows: int = 1) -> TimeGrid:
    """Equispaced grid of n_steps+1 nodes with window bounds at every
    n_steps/n_windows-th node."""
    if n_steps < 1 or n_windows < 1:
        raise ConfigurationError("n_steps and n_windows must be positive")
    if not (0.0 <= t_lo and t_hi <= 1.0):
        raise DomainError("time range must lie in [0, 1]")
    if t_lo >= t_hi:
        raise DomainError(f"t_lo={t_lo} must be below t_hi={t_hi}")
    if n_steps % n_windows != 0:
        raise ConfigurationError(f"n_steps={n_steps} not divisible by n_windows={n_windows}")
    times = np.linspace(t_lo, t_hi, n_steps + 1)
    bounds = times[:: n_steps // n_windows]
    return TimeGrid(times=times, window_bounds=bounds)


class NfeCounter:
    """Counts field evaluations; one increment per forward pass.

    Counters are per-run: pass the same counter through composed operations
    to get additive totals.
    """

    __slots__ = ("count",)

    def __init__(self) -> None:
        self.count = 0

    def add(self, n: int = 1) -> None:
        self.count += n

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"NfeCounter(count={self.count})"


@dataclass(frozen=True, eq=False)
class TrajectoryRecord:
    """Inverted latents plus cached source-branch velocities.

    ``latents[k]`` is the state at ``grid.times[k]``; ``velocities[k]`` is the
    field evaluation at ``(latents[k], times[k])`` under ``condition`` — the
    cacheable quantity regeneration reuses.  The record satisfies
    ``latents[k+1] == latents[k] - velocities[k]*dt_k`` exactly.
    """

    grid: TimeGrid
    condition: Condition
    latents: np.ndarray
    velocities: np.ndarray
    nfe: int

    def __post_init__(self):
        lat = np.asarray(self.latents, dtype=float)
        vel = np.asarray(self.velocities, dtype=float)
        if lat.shape[0] != vel.shape[0] + 1:
            raise DomainError("record needs exactly one more latent than velocities")
        if self.nfe < vel.shape[0]:
            raise DomainError("record nfe below its velocity count")
        lat.setflags(write=False)
        vel.setflags(write=False)
        object.__setattr__(self, "latents", lat)
        object.__setattr__(self, "velocities", vel)

    @property
    def k_max(self) -> int:
        return self.latents.shape[0] - 1

    def consistency_residual(self) -> float:
        """Max relative residual of latents[k+1] = latents[k] - velocities[k]*dt_k."""
        worst = 0.0
        for k in range(self.k_max):
            expect = self.latents[k] - self.velocities[k] * self.grid.dt(k)
            scale = max(float(np.max(np.abs(self.latents[k + 1]))), 1.0)
            worst = max(worst, float(np.max(np.abs(self.latents[k + 1] - expect))) / scale)
        return worst


def eval_velocity(field: "VelocityField", z: np.ndarray, t: float, c: Condition,
                  k: int, counter: NfeCounter | None,
                  side: TimeSide = TimeSide.BELOW) -> np.ndarray:
    """Evaluate a velocity field once, counting the evaluation and rejecting
    non-finite output."""
    v = field.evaluate(z, t, c, side=side)
    if counter is not None:
        counter.add()
    if not np.all(np.isfinite(v)):
        raise NumericalError(f"non-finite velocity at step k={k}, t={t:.6g}, condition={c.id!r}")
    return v


def denoise_step(field: "VelocityField", z: np.ndarray, k: int, grid: TimeGrid,
                 c: Condition, counter: NfeCounter | None = None) -> np.ndarray:
    """One Euler update toward data: z + v(z, t_{k+1}, c) * dt_k."""
    if not 0 <= k < grid.n_steps:
        raise DomainError(f"step index {k} outside [0, {grid.n_steps})")
    v = eval_velocity(field, z, float(grid.times[k + 1]), c, k, counter, TimeSide.BELOW)
    return z + v * grid.dt(k)


def invert_step(field: "VelocityField", z: np.ndarray, k: int, grid: TimeGrid,
                c: Condition, counter: NfeCounter | None = None) -> np.ndarray:
    """One Euler update toward noise: z - v(z, t_k, c) * dt_k."""
    if not 0 <= k < grid.n_steps:
        raise DomainError(f"step index {k} outside [0, {grid.n_steps})")
    v = eval_velocity(field, z, float(grid.times[k]), c, k, counter, TimeSide.ABOVE)
    return z - v * grid.dt(k)


def invert(field: "VelocityField", z0, c: Condition, grid: TimeGrid, k_max: int,
           counter: NfeCounter | None = None) -> TrajectoryRecord:
    """Invert z0 from t_0 up to t_{k_max}, recording every intermediate latent
    and the velocity evaluation that produced it.  Costs exactly k_max
    evaluations."""
    if not 0 <= k_max <= grid.n_steps:
        raise DomainError(f"k_max={k_max} outside [0, {grid.n_steps}]")
    z = as_state(z0, "z0")
    own = counter if counter is not None else NfeCounter()
    latents = [z]
    velocities = []
    for k in range(k_max):
        v = eval_velocity(field, latents[-1], float(grid.times[k]), c, k, own, TimeSide.ABOVE)
        velocities.append(v)
        latents.append(latents[-1] - v * grid.dt(k))
    vel = np.stack(velocities) if velocities else np.zeros((0,) + z.shape)
    return TrajectoryRecord(grid=grid, condition=c, latents=np.stack(latents),
                            velocities=vel, nfe=k_max)


def sample(field: "VelocityField", z_init, c: Condition, grid: TimeGrid, k_start: int,
           counter: NfeCounter | None = None) -> np.ndarray:
    """Denoise from t_{k_start} down to t_0; returns the k_start+1 trajectory
    states ending at the t_0 state.  Costs exactly k_start evaluations."""
    if not 0 <= k_start <= grid.n_steps:
        raise DomainError(f"k_start={k_start} outside [0, {grid.n_steps}]")
    traj = [as_state(z_init, "z_init")]
    for k in range(k_start - 1, -1, -1):
        traj.append(denoise_step(field, traj[-1], k, grid, c, counter))
    return np.stack(traj)


def _check_ddim_schedule(eps_field: "EpsilonField", grid: TimeGrid, k_hi: int) -> np.ndarray:
    ab = np.asarray([eps_field.alpha_bar(float(t)) for t in grid.times[: k_hi + 1]])
    if np.any(ab <= 0.0) or np.any(ab > 1.0):
        raise ConfigurationError("schedule alpha_bar must lie in (0, 1] on the grid")
    if not np.all(np.diff(ab) < 0.0):
        raise ConfigurationError("schedule alpha_bar must be strictly decreasing on the grid")
    return ab


def ddim_invert(eps_field: "EpsilonField", z0, c: Condition, grid: TimeGrid, k_max: int,
                counter: NfeCounter | None = None) -> TrajectoryRecord:
    """One-shot DDIM inversion baseline.

    Each inverted latent is ``sqrt(ab)*z0 + sqrt(1-ab)*eps(z_prev, t)``: the
    recursion is resolved by evaluating the noise prediction at the previous
    latent, one evaluation per step.  The returned record stores the implied
    per-step velocities so it is self-consistent with the Euler relation.
    """
    if not 0 <= k_max <= grid.n_steps:
        raise DomainError(f"k_max={k_max} outside [0, {grid.n_steps}]")
    z = as_state(z0, "z0")
    ab = _check_ddim_schedule(eps_field, grid, k_max)
    own = counter if counter is not None else NfeCounter()
    latents = [z]
    for k in range(k_max):
        t_next = float(grid.times[k + 1])
        eps = eps_field.evaluate_eps(latents[-1], t_next, c)
        own.add()
        if not np.all(np.isfinite(eps)):
            raise NumericalError(f"non-finite noise prediction at step k={k}, t={t_next:.6g}")
        latents.append(np.sqrt(ab[k + 1]) * z + np.sqrt(1.0 - ab[k + 1]) * eps)
    lat = np.stack(latents)
    if k_max > 0:
        dts = np.asarray([grid.dt(k) for k in range(k_max)])
        dts = dts.reshape((k_max,) + (1,) * (lat.ndim - 1))
        vel = (lat[:-1] - lat[1:]) / dts
    else:
        vel = np.zeros((0,) + z.shape)
    return TrajectoryRecord(grid=grid, condition=c, latents=lat, velocities=vel, nfe=k_max)


def ddim_sample(eps_field: "EpsilonField", z_init, c: Condition, grid: TimeGrid, k_start: int,
                counter: NfeCounter | None = None) -> np.ndarray:
    """Deterministic DDIM regeneration: split the current latent into its
    implied (x0_hat, eps_hat) pair at the upper node and reassemble it at the
    lower node's noise level.  One evaluation per step."""
    if not 0 <= k_start <= grid.n_steps:
        raise DomainError(f"k_start={k_start} outside [0, {grid.n_steps}]")
    ab = _check_ddim_schedule(eps_field, grid, k_start)
    traj = [as_state(z_init, "z_init")]
    for k in range(k_start - 1, -1, -1):
        t_hi = float(grid.times[k + 1])
        eps = eps_field.evaluate_eps(traj[-1], t_hi, c)
        if counter is not None:
            counter.add()
        if not np.all(np.isfinite(eps)):
            raise NumericalError(f"non-finite noise prediction at step k={k}, t={t_hi:.6g}")
        x0_hat = (traj[-1] - np.sqrt(1.0 - ab[k + 1]) * eps) / np.sqrt(ab[k + 1])
        traj.append(np.sqrt(ab[k]) * x0_hat + np.sqrt(1.0 - ab[k]) * eps)
    return np.stack(traj)


def ddim_fixed_point(eps_field: "EpsilonField", z0, t: float, c: Condition,
                     z_init=None, tol: float = 1e-10, max_iter: int = 100):
    """Oracle-only resolution of the implicit DDIM-inversion relation:
    iterate z <- sqrt(ab)*z0 + sqrt(1-ab)*eps(z, t) to convergence.

    Returns (z, iterations).  Used to measure the one-shot approximation
    error; the production baseline never calls this.
    """
    ab = eps_field.alpha_bar(float(t))
    if not 0.0 < ab <= 1.0:
        raise ConfigurationError("schedule alpha_bar must lie in (0, 1]")
    z0 = as_state(z0, "z0")
    z = as_state(z_init, "z_init") if z_init is not None else z0.copy()
    for i in range(max_iter):
        z_new = np.sqrt(ab) * z0 + np.sqrt(1.0 - ab) * eps_field.evaluate_eps(z, float(t), c)
        if float(np.max(np.abs(z_new - z))) < tol:
            return z_new, i + 1
        z = z_new
    return z, max_iter
