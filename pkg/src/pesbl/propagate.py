"""Forward uncertainty propagation and probabilistic system diagnosis.

Coefficient posterior draws are pushed through the forward solver as one
batch; envelope statistics are reported along a query section (fixed ``x``
or fixed ``t``).  Diagnosis compares two coefficient posteriors of the same
model form as independent Gaussians.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .dynamics import PdeModel, SolverConfig, solve_generic_batch
from .errors import ConfigError
from .fields import FieldSeries, GridSpec

__all__ = ["PredictiveEnvelope", "ShiftReport", "propagate", "diagnose"]


@dataclass
class PredictiveEnvelope:
    """Pointwise band of forward trajectories under posterior coefficient draws."""

    section_axis: str            # "x" (profile over t) or "t" (profile over x)
    section_value: float
    coord: np.ndarray            # the running coordinate along the section
    trajectories: np.ndarray     # (n_draws, len(coord))
    mean: np.ndarray
    std: np.ndarray
    truth: np.ndarray | None = None
    coverage3: float | None = None   # fraction of points with |truth-mean| <= 3 std
    n_dropped: int = 0
    flagged: bool = False            # more than 10% of draws were unstable

    def band(self, k: float = 3.0):
        return self.mean - k * self.std, self.mean + k * self.std


def _section_slice(values: np.ndarray, grid: GridSpec, axis: str, value: float):
    """Extract the section profile and its running coordinate."""
    if grid.is_2d:
        raise ConfigError("propagate: sections are defined for 1D systems")
    if axis == "x":
        xs = grid.x()
        j = int(np.argmin(np.abs(xs - value)))
        if abs(xs[j] - value) > grid.dx:
            raise ConfigError(f"section x={value} outside the grid")
        return values[..., :, j], grid.t()
    if axis == "t":
        ts = grid.t()
        n = int(np.argmin(np.abs(ts - value)))
        if abs(ts[n] - value) > grid.dt:
            raise ConfigError(f"section t={value} outside the grid")
        return values[..., n, :], grid.x()
    raise ConfigError(f"propagate: unknown section axis {axis!r}")


def propagate(samples: np.ndarray, model: PdeModel, ic: np.ndarray, grid: GridSpec,
              section: tuple[str, float], truth: FieldSeries | None = None,
              cfg: SolverConfig = SolverConfig(), min_draws: int = 30) -> PredictiveEnvelope:
    """One forward solve per posterior draw, summarized along a section.

    Unstable draws are dropped and counted; the envelope is flagged when
    more than 10% of draws fail.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.shape[0] < min_draws:
        raise ConfigError(f"propagate: need at least {min_draws} draws")
    vals, ok = solve_generic_batch(model, samples, np.asarray(ic, float), grid, cfg,
                                   raise_on_failure=False)
    n_dropped = int(np.sum(~ok))
    vals = vals[ok]
    if vals.shape[0] < 2:
        raise ConfigError("propagate: all draws unstable")
    axis, value = section
    traj, coord = _section_slice(vals, grid, axis, value)
    mean = traj.mean(axis=0)
    std = traj.std(axis=0, ddof=1)
    truth_sec = cov = None
    if truth is not None:
        if truth.grid != grid:
            raise ConfigError("propagate: truth grid must match the query grid")
        truth_sec, _ = _section_slice(truth.values, grid, axis, value)
        inside = np.abs(truth_sec - mean) <= 3.0 * std + 1e-15
        cov = float(np.mean(inside))
    return PredictiveEnvelope(
        section_axis=axis, section_value=value, coord=coord,
        trajectories=traj, mean=mean, std=std, truth=truth_sec, coverage3=cov,
        n_dropped=n_dropped, flagged=n_dropped > 0.1 * samples.shape[0],
    )


@dataclass
class ShiftReport:
    """Gaussian shift of each coefficient between two posteriors (B minus A)."""

    names: tuple[str, ...]
    delta_mean: np.ndarray
    delta_var: np.ndarray
    threshold: np.ndarray
    exceed_prob: np.ndarray      # P(|delta| > threshold)

    def shift(self, name: str) -> tuple[float, float]:
        i = self.names.index(name)
        return float(self.delta_mean[i]), float(self.delta_var[i])


def diagnose(post_a, post_b, threshold: float | np.ndarray = 0.0) -> ShiftReport:
    """Coefficient-shift distributions between two independent posteriors.

    ``delta_i ~ Normal(mean_b - mean_a, var_a + var_b)``; the exceedance
    probability uses the Gaussian CDF.  Mismatched term sets are an error.
    """
    names_a, names_b = tuple(post_a.names), tuple(post_b.names)
    if names_a != names_b:
        diff = set(names_a) ^ set(names_b)
        raise ConfigError(f"diagnose: term sets differ: {sorted(diff)}")
    d_mean = np.asarray(post_b.mean, float) - np.asarray(post_a.mean, float)
    d_var = np.asarray(post_a.std, float) ** 2 + np.asarray(post_b.std, float) ** 2
    thr = np.broadcast_to(np.asarray(threshold, dtype=float), d_mean.shape)
    sd = np.sqrt(d_var)
    inside = ndtr((thr - d_mean) / sd) - ndtr((-thr - d_mean) / sd)
    return ShiftReport(
        names=names_a,
        delta_mean=d_mean,
        delta_var=d_var,
        threshold=thr.copy(),
        exceed_prob=1.0 - inside,
    )
