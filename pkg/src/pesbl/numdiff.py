"""Array-level numerical differentiation.

Central second-order stencils in the interior with matching-order one-sided
stencils at the boundaries, plus a sliding-window polynomial alternative.
Works along any axis of an n-dimensional array.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import savgol_filter

from .errors import ConfigError


def fd_derivative(values: np.ndarray, spacing: float, order: int, axis: int = -1) -> np.ndarray:
    """Finite-difference derivative of ``values`` along ``axis``.

    Supports orders 1..3; interior points use central stencils, edges use
    one-sided stencils of matching accuracy so the array shape is preserved.
    """
    if order not in (1, 2, 3):
        raise ConfigError(f"fd_derivative: unsupported order {order}")
    v = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    n = v.shape[-1]
    if n < 2 * order + 1:
        raise ConfigError(f"fd_derivative: need at least {2 * order + 1} points, got {n}")
    h = float(spacing)
    out = np.empty_like(v)
    if order == 1:
        out[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2 * h)
        out[..., 0] = (-3 * v[..., 0] + 4 * v[..., 1] - v[..., 2]) / (2 * h)
        out[..., -1] = (3 * v[..., -1] - 4 * v[..., -2] + v[..., -3]) / (2 * h)
    elif order == 2:
        out[..., 1:-1] = (v[..., 2:] - 2 * v[..., 1:-1] + v[..., :-2]) / h**2
        out[..., 0] = (2 * v[..., 0] - 5 * v[..., 1] + 4 * v[..., 2] - v[..., 3]) / h**2
        out[..., -1] = (2 * v[..., -1] - 5 * v[..., -2] + 4 * v[..., -3] - v[..., -4]) / h**2
    else:
        out[..., 2:-2] = (v[..., 4:] - 2 * v[..., 3:-1] + 2 * v[..., 1:-3] - v[..., :-4]) / (2 * h**3)
        for i in (0, 1):
            out[..., i] = (
                -2.5 * v[..., i] + 9 * v[..., i + 1] - 12 * v[..., i + 2]
                + 7 * v[..., i + 3] - 1.5 * v[..., i + 4]
            ) / h**3
        for i in (-1, -2):
            out[..., i] = (
                2.5 * v[..., i] - 9 * v[..., i - 1] + 12 * v[..., i - 2]
                - 7 * v[..., i - 3] + 1.5 * v[..., i - 4]
            ) / h**3
    return np.moveaxis(out, -1, axis)


def spectral_derivative(values: np.ndarray, spacing: float, order: int, axis: int = -1) -> np.ndarray:
    """Fourier derivative along a periodic axis (odd orders zero the Nyquist mode)."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    n = v.shape[-1]
    k = 2.0 * np.pi * np.fft.rfftfreq(n, d=spacing)
    sym = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        sym[-1] = 0.0
    out = np.fft.irfft(sym * np.fft.rfft(v, axis=-1), n=n, axis=-1)
    return np.moveaxis(out, -1, axis)


def poly_derivative(values: np.ndarray, spacing: float, order: int, axis: int = -1,
                    window: int | None = None) -> np.ndarray:
    """Derivative of a locally fitted polynomial of degree ``order + 2``.

    A sliding window of ``window`` points (default ``2*order + 5``) is fitted
    by least squares and differentiated analytically; boundary windows reuse
    the nearest full-width polynomial fit.
    """
    if order not in (1, 2, 3):
        raise ConfigError(f"poly_derivative: unsupported order {order}")
    v = np.asarray(values, dtype=float)
    n = v.shape[axis]
    if window is None:
        window = 2 * order + 5
    if window % 2 == 0:
        window += 1
    if window > n:
        raise ConfigError(f"poly_derivative: window {window} exceeds axis length {n}")
    return savgol_filter(v, window_length=window, polyorder=order + 2, deriv=order,
                         delta=float(spacing), axis=axis, mode="interp")


def moving_average(values: np.ndarray, width: int = 5, axis: int = -1) -> np.ndarray:
    """Centered moving average with edge-shortened windows (shape preserved)."""
    v = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    n = v.shape[-1]
    half = width // 2
    out = np.empty_like(v)
    csum = np.cumsum(np.concatenate([np.zeros(v.shape[:-1] + (1,)), v], axis=-1), axis=-1)
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        out[..., i] = (csum[..., hi] - csum[..., lo]) / (hi - lo)
    return np.moveaxis(out, -1, axis)
