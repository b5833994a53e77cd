"""End-to-end orchestration: measurements in, learned sparse model out.

Chains the stages: optional denoising, numerical differentiation, library
construction, boundary trimming, low-frequency projection, column
normalization, and the sequential learner.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .fields import FieldSeries
from .library import Library, build_library_1d, build_library_2d
from .preprocess import (
    DenoiserConfig,
    denoise,
    differentiate,
    normalize_columns,
    spectral_project,
    trim_boundary,
)
from .sbl import PesblConfig, SparseModel, run


@dataclass(frozen=True)
class PreprocessOptions:
    """Knobs for the measurement-to-regression stages."""

    denoise: str = "auto"            # "auto" (from provenance) | "on" | "off"
    denoiser: DenoiserConfig = field(default_factory=DenoiserConfig)
    diff_method: str = "fd"          # "fd" | "polynomial"
    cutoff: float = 0.08             # retained fraction of each axis's spectrum
    trim: int = 2                    # boundary layers dropped before regression

    def wants_denoise(self, fs: FieldSeries) -> bool:
        if self.denoise == "on":
            return True
        if self.denoise == "off":
            return False
        if self.denoise == "auto":
            return fs.provenance == "noisy"
        raise ConfigError(f"preprocess: unknown denoise mode {self.denoise!r}")


@dataclass
class RegressionData:
    """Normalized regression system plus everything needed to interpret it."""

    Phi: np.ndarray
    target: np.ndarray
    scales: tuple[np.ndarray, float]
    library: Library
    u_used: FieldSeries       # field the system was built from (denoised or raw)
    u_t: FieldSeries


def prepare_regression(fs: FieldSeries, opts: PreprocessOptions = PreprocessOptions()) -> RegressionData:
    """Build the normalized low-frequency regression system from a field."""
    u = denoise(fs, opts.denoiser) if opts.wants_denoise(fs) else fs
    method = opts.diff_method
    u_t = differentiate(u, "t", 1, method)
    if fs.grid.is_2d:
        u_x = differentiate(u, "x", 1, method)
        u_y = differentiate(u, "y", 1, method)
        u_xx = differentiate(u, "x", 2, method)
        u_yy = differentiate(u, "y", 2, method)
        library = build_library_2d(u, u_x, u_y, u_xx, u_yy)
    else:
        u_x = differentiate(u, "x", 1, method)
        u_xx = differentiate(u, "x", 2, method)
        u_xxx = differentiate(u, "x", 3, method)
        library = build_library_1d(u, u_x, u_xx, u_xxx)
    stack = spectral_project(u_t, library, cutoff=opts.cutoff, trim=opts.trim)
    Phi, target, scales = normalize_columns(stack)
    return RegressionData(Phi=Phi, target=target, scales=scales,
                          library=library, u_used=u, u_t=u_t)


def learn_pde(fs: FieldSeries, opts: PreprocessOptions = PreprocessOptions(),
              cfg: PesblConfig = PesblConfig(), system: str = "generic") -> SparseModel:
    """Measurements to learned sparse model in one call."""
    reg = prepare_regression(fs, opts)
    return run(reg.Phi, reg.target, cfg, reg.library, scales=reg.scales, system=system)
