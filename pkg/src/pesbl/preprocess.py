"""Turns noisy measurements into regression-ready quantities.

Denoising fits a small coordinate network (space-time inputs, field value
output) with early stopping so measurement noise is not memorized.  The
regression system is then built from numerical derivatives, projected onto
the low-frequency band of the multidimensional Fourier transform, and
column-normalized.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateDataError, TrainingError
from .fields import FieldSeries
from .library import Library
from .numdiff import fd_derivative, moving_average, poly_derivative

__all__ = [
    "DenoiserConfig", "SpectralStack", "denoise", "savgol_denoise",
    "differentiate", "spectral_project", "normalize_columns",
]


@dataclass(frozen=True)
class DenoiserConfig:
    """Hyperparameters of the coordinate-network denoiser."""

    hidden: tuple[int, ...] = (32, 32, 32)
    activation: str = "tanh"
    train_fraction: float = 0.8
    patience: int = 50
    max_epochs: int = 2000
    learning_rate: float = 1e-2
    seed: int = 0
    max_points: int | None = 12000  # cap on the training subset (keeps epochs cheap)

    def __post_init__(self):
        if len(self.hidden) < 1:
            raise ConfigError("denoiser: at least one hidden layer required")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("denoiser: train_fraction must leave a validation set")
        if self.activation not in ("tanh",):
            raise ConfigError(f"denoiser: unsupported activation {self.activation!r}")


def _init_params(widths, rng):
    params = []
    for n_in, n_out in zip(widths[:-1], widths[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-limit, limit, size=(n_in, n_out)).astype(np.float32)
        params.append([w, np.zeros(n_out, dtype=np.float32)])
    return params


def _forward(params, x):
    h = x
    acts = [h]
    for w, b in params[:-1]:
        h = np.tanh(h @ w + b)
        acts.append(h)
    w, b = params[-1]
    return (h @ w + b), acts


def _grads(params, acts, out, target):
    n = target.shape[0]
    delta = 2.0 * (out - target) / n
    grads = []
    for li in range(len(params) - 1, -1, -1):
        w, _ = params[li]
        a_prev = acts[li]
        gw = a_prev.T @ delta
        gb = delta.sum(axis=0)
        grads.append([gw, gb])
        if li > 0:
            delta = (delta @ w.T) * (1.0 - acts[li] ** 2)
    grads.reverse()
    return grads


def denoise(noisy: FieldSeries, cfg: DenoiserConfig = DenoiserConfig()) -> FieldSeries:
    """Fit the coordinate network to the measurements and return its prediction.

    Training runs full-batch with adaptive-moment gradient steps and stops
    once the validation loss has not improved for ``cfg.patience`` epochs;
    the best-validation parameters are restored.  Deterministic given the
    seed.
    """
    g = noisy.grid
    axes = [g.t(), g.y(), g.x()] if g.is_2d else [g.t(), g.x()]
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=1)
    target = noisy.values.ravel()[:, None]

    c_mean, c_std = coords.mean(axis=0), coords.std(axis=0)
    c_std[c_std == 0] = 1.0
    u_mean, u_std = float(target.mean()), float(target.std())
    if u_std == 0:
        u_std = 1.0
    # float32 keeps epochs cheap; the fit target is a noisy field, so single
    # precision is far below the residual noise floor
    x_all = ((coords - c_mean) / c_std).astype(np.float32)
    y_all = ((target - u_mean) / u_std).astype(np.float32)

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed)))
    n = x_all.shape[0]
    perm = rng.permutation(n)
    n_train = min(max(1, int(round(cfg.train_fraction * n))), n - 1)
    train_idx, val_idx = perm[:n_train], perm[n_train:]
    if cfg.max_points is not None and train_idx.size > cfg.max_points:
        train_idx = train_idx[: cfg.max_points]
    xt, yt = x_all[train_idx], y_all[train_idx]
    xv, yv = x_all[val_idx], y_all[val_idx]

    widths = (coords.shape[1],) + tuple(cfg.hidden) + (1,)
    params = _init_params(widths, rng)
    m_state = [[np.zeros_like(w), np.zeros_like(b)] for w, b in params]
    v_state = [[np.zeros_like(w), np.zeros_like(b)] for w, b in params]
    b1, b2, eps = 0.9, 0.999, 1e-8

    best_val = np.inf
    best_params = [[w.copy(), b.copy()] for w, b in params]
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        out, acts = _forward(params, xt)
        loss = float(np.mean((out - yt) ** 2))
        if not np.isfinite(loss):
            raise TrainingError(f"denoiser training diverged at epoch {epoch}")
        grads = _grads(params, acts, out, yt)
        for p, m, v, grd in zip(params, m_state, v_state, grads):
            for sl in range(2):
                m[sl] = b1 * m[sl] + (1 - b1) * grd[sl]
                v[sl] = b2 * v[sl] + (1 - b2) * grd[sl] ** 2
                mh = m[sl] / (1 - b1**epoch)
                vh = v[sl] / (1 - b2**epoch)
                p[sl] -= cfg.learning_rate * mh / (np.sqrt(vh) + eps)
        val_out, _ = _forward(params, xv)
        val = float(np.mean((val_out - yv) ** 2))
        if val < best_val - 1e-12:
            best_val = val
            best_params = [[w.copy(), b.copy()] for w, b in params]
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break

    pred, _ = _forward(best_params, x_all)
    smooth = (pred * u_std + u_mean).reshape(g.shape)
    return FieldSeries(grid=g, values=smooth, provenance="denoised", seed=noisy.seed)


def savgol_denoise(noisy: FieldSeries, window: int = 11, polyorder: int = 3) -> FieldSeries:
    """Polynomial-smoothing fallback denoiser (axis-by-axis sliding fits)."""
    from scipy.signal import savgol_filter

    g = noisy.grid
    out = noisy.values
    for axis_name in (("t", "y", "x") if g.is_2d else ("t", "x")):
        ax = g.axis_index(axis_name)
        wl = min(window, out.shape[ax] if out.shape[ax] % 2 else out.shape[ax] - 1)
        out = savgol_filter(out, window_length=wl, polyorder=min(polyorder, wl - 1), axis=ax)
    return FieldSeries(grid=g, values=out, provenance="denoised", seed=noisy.seed)


def differentiate(fs: FieldSeries, axis: str, order: int,
                  method: str = "fd", window: int | None = None) -> FieldSeries:
    """Derivative of a field along a named axis (``t``, ``x``, or ``y``).

    ``fd`` uses central stencils with one-sided edges; ``polynomial``
    differentiates a locally fitted sliding polynomial.
    """
    if order not in (1, 2, 3):
        raise ConfigError("differentiate: order must be 1..3")
    g = fs.grid
    if axis == "y" and not g.is_2d:
        raise ConfigError("differentiate: grid has no y axis")
    ax = g.axis_index(axis)
    h = g.axis_spacing(axis)
    if fs.values.shape[ax] < 2 * order + 1:
        raise ConfigError("differentiate: axis too short for requested order")
    if method == "fd":
        vals = fd_derivative(fs.values, h, order, axis=ax)
    elif method == "polynomial":
        vals = poly_derivative(fs.values, h, order, axis=ax, window=window)
    else:
        raise ConfigError(f"differentiate: unknown method {method!r}")
    return fs.with_values(vals)


@dataclass
class SpectralStack:
    """Low-frequency Fourier rows of the regression system.

    Complex target/columns restricted to the retained frequency set; the
    real regression problem stacks real parts over imaginary parts.
    """

    target: np.ndarray            # (R,) complex
    columns: np.ndarray           # (R, M) complex
    mask: np.ndarray              # boolean over the full frequency grid
    cutoff: tuple[float, ...]
    names: list[str]

    def design_matrix(self) -> np.ndarray:
        return np.concatenate([self.columns.real, self.columns.imag], axis=0)

    def target_vector(self) -> np.ndarray:
        return np.concatenate([self.target.real, self.target.imag], axis=0)


def _trim_slices(shape: tuple[int, ...], trim: int):
    return tuple(slice(trim, n - trim if trim else None) for n in shape)


def trim_boundary(values: np.ndarray, trim: int = 2) -> np.ndarray:
    """Drop ``trim`` layers from every boundary (the least accurate stencil rows)."""
    if trim == 0:
        return values
    if any(n <= 2 * trim for n in values.shape):
        raise ConfigError("trim_boundary: array too small for requested trim")
    return values[_trim_slices(values.shape, trim)]


def spectral_project(u_t: FieldSeries | np.ndarray, library: Library,
                     cutoff: float | tuple[float, ...] = 0.3,
                     trim: int = 0) -> SpectralStack:
    """Fourier-transform the target and every library column, keep low modes.

    Frequencies with ``|f| <= cutoff * Nyquist`` on every axis are retained;
    the transform is linear, so the regression solution is unchanged in form.
    """
    target_vals = u_t.values if isinstance(u_t, FieldSeries) else np.asarray(u_t)
    shape = library.field_shape
    if target_vals.shape != shape:
        raise ConfigError("spectral_project: target and library shapes differ")
    ndim = len(shape)
    cut = (cutoff,) * ndim if np.isscalar(cutoff) else tuple(cutoff)
    if len(cut) != ndim:
        raise ConfigError("spectral_project: one cutoff per axis required")
    if any(not 0 < c <= 1 for c in cut):
        raise ConfigError("spectral_project: cutoff fractions must lie in (0, 1]")

    target_vals = trim_boundary(target_vals, trim)
    col_fields = library.column_fields()
    if trim:
        col_fields = np.stack([trim_boundary(c, trim) for c in col_fields])
    tshape = target_vals.shape

    mask = np.ones(tshape, dtype=bool)
    for ax, (n, c) in enumerate(zip(tshape, cut)):
        f = np.abs(np.fft.fftfreq(n))
        nyq = 0.5
        keep = f <= c * nyq + 1e-12
        mask &= keep.reshape([-1 if a == ax else 1 for a in range(ndim)])

    t_hat = np.fft.fftn(target_vals)[mask]
    cols = np.stack([np.fft.fftn(cf)[mask] for cf in col_fields], axis=1)
    return SpectralStack(target=t_hat, columns=cols, mask=mask, cutoff=cut,
                         names=library.names())


def normalize_columns(matrix_or_stack, target: np.ndarray | None = None,
                      names: list[str] | None = None):
    """Divide every column and the target by its own L2 norm.

    Returns ``(matrix, target, scales)`` where ``scales=(column_norms,
    target_norm)`` lets learned coefficients be mapped back to physical
    units.  A zero-norm column aborts naming the offending term.
    """
    if isinstance(matrix_or_stack, SpectralStack):
        matrix = matrix_or_stack.design_matrix()
        target = matrix_or_stack.target_vector()
        names = matrix_or_stack.names
    else:
        matrix = np.asarray(matrix_or_stack, dtype=float)
        if target is None:
            raise ConfigError("normalize_columns: target required with a raw matrix")
        target = np.asarray(target, dtype=float)
    col_norms = np.linalg.norm(matrix, axis=0)
    if np.any(col_norms == 0):
        bad = int(np.argmax(col_norms == 0))
        label = names[bad] if names else f"column {bad}"
        raise DegenerateDataError(f"normalize_columns: zero-norm column for term {label}")
    t_norm = float(np.linalg.norm(target))
    if t_norm == 0:
        raise DegenerateDataError("normalize_columns: zero-norm target")
    return matrix / col_norms, target / t_norm, (col_norms, t_norm)
