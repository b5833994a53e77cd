"""Forward solvers for the canonical dissipative/dispersive systems.

All solvers integrate in time with explicit RK4 and an automatic substep
count chosen from a CFL-like bound that is refreshed at every output step.
Periodic problems use pseudo-spectral space derivatives with an exact
integrating factor absorbing the stiff linear part; the Dirichlet problem
uses second-order central finite differences.  Every solver accepts a batch
of coefficient sets and integrates them in lockstep, which is what keeps
MCMC with forward solves in the likelihood affordable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SolverInstability
from .fields import FieldSeries, GridSpec
from .library import TermSpec, term_by_name
from .numdiff import fd_derivative, moving_average

_RK4_BOUND = 2.5  # conservative stable |lambda*h| for classical RK4
_MAX_SUBSTEPS = 200_000

USE_COMPILED_FD = True  # numpy reference path is kept for cross-checking


@dataclass(frozen=True)
class SolverConfig:
    """Time-integration controls shared by all solvers."""

    method: str = "auto"          # "spectral" | "fd" | "auto" (from boundary type)
    substeps: int | None = None   # fixed substeps per output step (overrides the bound)
    safety: float = 0.5           # fraction of the stability bound actually used
    blowup: float = 1e6           # |u| beyond this counts as instability

    def __post_init__(self):
        if not 0 < self.safety <= 1:
            raise ConfigError("solver: safety factor must be in (0, 1]")
        if self.substeps is not None and self.substeps < 1:
            raise ConfigError("solver: substeps must be >= 1")


@dataclass(frozen=True)
class PdeModel:
    """A sparse PDE right-hand side: named library terms with coefficients."""

    terms: tuple[str, ...]
    coefficients: tuple[float, ...]
    system: str = "generic"       # burgers1d | kdv | burgers2d | generic

    def __post_init__(self):
        if len(self.terms) == 0:
            raise ConfigError("model: at least one term required")
        if len(self.terms) != len(self.coefficients):
            raise ConfigError("model: one coefficient per term required")

    def term_specs(self, two_d: bool = False) -> list[TermSpec]:
        return [term_by_name(name, two_d=two_d) for name in self.terms]


# ---------------------------------------------------------------------------
# shared RK4 engines


def _classify(term: TermSpec) -> str:
    """linear terms go into the integrating factor, the rest into the RK4 RHS."""
    if term.power == 0 and term.deriv_order == 0:
        return "forcing"
    if term.power == 0 and term.deriv_order > 0:
        return "linear"
    if term.power == 1 and term.deriv_order == 0:
        return "linear"
    return "nonlinear"


def _fd_opnorm(order: int, dx: float) -> float:
    # spectral radii of the central stencils used by the FD engine
    return {0: 1.0, 1: 1.0 / dx, 2: 4.0 / dx**2, 3: 3.0 / dx**3}[order]


def _substeps_fd(terms, coeffs, umax, dx, dt_out, cfg) -> np.ndarray:
    """Per-row substep counts for the FD engine; 0 marks a hopeless row."""
    lam = np.zeros(coeffs.shape[0])
    for j, term in enumerate(terms):
        amp = np.maximum(1.0, umax) ** term.power
        lam += np.abs(coeffs[:, j]) * amp * _fd_opnorm(term.deriv_order, dx)
    h_max = _RK4_BOUND * cfg.safety / np.maximum(lam, 1e-30)
    steps = np.ceil(dt_out / h_max).astype(int)
    steps = np.maximum(steps, 1)
    if cfg.substeps is not None:
        steps[:] = cfg.substeps
    steps[steps > _MAX_SUBSTEPS] = 0
    return steps


def _integrate_fd_dirichlet(terms, coeffs, u0, grid, cfg, raise_on_failure=True):
    """RK4 + central finite differences, boundary values pinned at the IC edges.

    coeffs: (B, K); u0: (B, nx).  Returns (values (B, nt, nx), ok (B,)).
    Dispatches to the compiled kernel when available.
    """
    from . import _fdkernel

    if USE_COMPILED_FD and _fdkernel.HAVE_NUMBA:
        return _integrate_fd_compiled(terms, coeffs, u0, grid, cfg, raise_on_failure)
    return _integrate_fd_numpy(terms, coeffs, u0, grid, cfg, raise_on_failure)


def _integrate_fd_compiled(terms, coeffs, u0, grid, cfg, raise_on_failure=True):
    from ._fdkernel import integrate_row_fd

    t = grid.t()
    B, nx = u0.shape
    powers = np.array([term.power for term in terms], dtype=np.int64)
    orders = np.array([term.deriv_order for term in terms], dtype=np.int64)
    out = np.empty((B, len(t), nx))
    ok = np.ones(B, dtype=bool)
    scale0 = max(1.0, float(np.nanmax(np.abs(u0))))
    substeps_fixed = cfg.substeps if cfg.substeps is not None else 0
    for b in range(B):
        good = integrate_row_fd(u0[b], np.ascontiguousarray(coeffs[b]), powers, orders,
                                grid.dx, t, cfg.safety, cfg.blowup * scale0,
                                substeps_fixed, out[b])
        if not good:
            if raise_on_failure:
                raise SolverInstability(
                    "non-finite/runaway values; RK4 CFL-like step bound violated "
                    f"(grid nx={nx}, dx={grid.dx:.3e})"
                )
            ok[b] = False
            out[b] = np.nan
    return out, ok


def _integrate_fd_numpy(terms, coeffs, u0, grid, cfg, raise_on_failure=True):
    dx = grid.dx
    t = grid.t()
    B, nx = u0.shape
    orders = sorted({term.deriv_order for term in terms if term.deriv_order > 0})

    def rhs(u):
        derivs = {o: fd_derivative(u, dx, o, axis=-1) for o in orders}
        du = np.zeros_like(u)
        for j, term in enumerate(terms):
            if term.deriv_order == 1 and term.power >= 1:
                # skew-symmetric split of u^p u_x; plain central advection is
                # nonlinearly unstable once fronts sharpen to the grid scale
                p = term.power
                col = (u**p * derivs[1]
                       + fd_derivative(u**(p + 1), dx, 1, axis=-1)) / (p + 2)
            else:
                col = np.ones_like(u) if term.deriv_order == 0 else derivs[term.deriv_order]
                if term.power:
                    col = u**term.power * col
            du += coeffs[:, j, None] * col
        du[:, 0] = 0.0
        du[:, -1] = 0.0
        return du

    out = np.empty((B, len(t), nx))
    out[:, 0] = u0
    ok = np.ones(B, dtype=bool)
    u = u0.copy()
    scale0 = max(1.0, float(np.nanmax(np.abs(u0))))
    with np.errstate(all="ignore"):
        for n in range(len(t) - 1):
            dt_out = t[n + 1] - t[n]
            umax = np.nanmax(np.abs(u), axis=-1)
            umax = np.where(np.isfinite(umax), umax, 0.0)
            steps = _substeps_fd(terms, coeffs, umax, dx, dt_out, cfg)
            bad = ok & (steps == 0)
            if np.any(bad):
                ok[bad] = False
                u[bad] = np.nan
            live = steps[ok]
            n_sub = int(live.max()) if live.size else 1
            h = dt_out / n_sub
            for _ in range(n_sub):
                k1 = rhs(u)
                k2 = rhs(u + 0.5 * h * k1)
                k3 = rhs(u + 0.5 * h * k2)
                k4 = rhs(u + h * k3)
                u = u + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            row_bad = ~np.all(np.isfinite(u), axis=-1) | (
                np.nanmax(np.abs(u), axis=-1) > cfg.blowup * scale0
            )
            newly = ok & row_bad
            if np.any(newly):
                if raise_on_failure:
                    lam_msg = f"substeps={n_sub}, h={h:.3e}"
                    raise SolverInstability(
                        f"non-finite/runaway values at t={t[n + 1]:.4g}; "
                        f"RK4 CFL-like step bound violated ({lam_msg})"
                    )
                ok[newly] = False
                u[newly] = np.nan
            out[:, n + 1] = u
    return out, ok


def _spectral_symbols_1d(grid: GridSpec):
    k = 2.0 * np.pi * np.fft.rfftfreq(grid.nx, d=grid.dx)
    syms = {}
    for o in (1, 2, 3):
        s = (1j * k) ** o
        if o % 2 == 1 and grid.nx % 2 == 0:
            s = s.copy()
            s[-1] = 0.0
        syms[o] = s
    kmax = np.abs(k).max()
    dealias = np.abs(k) <= (2.0 / 3.0) * kmax
    return k, syms, dealias, kmax


def _integrate_spectral_1d(terms, coeffs, u0, grid, cfg, raise_on_failure=True):
    """Integrating-factor RK4 with rfft space derivatives on a periodic grid."""
    t = grid.t()
    B, nx = u0.shape
    _, syms, dealias, kmax = _spectral_symbols_1d(grid)

    lin = np.zeros((B, syms[1].size), dtype=complex)
    nonlin = []
    forcing = np.zeros(B)
    for j, term in enumerate(terms):
        kind = _classify(term)
        if kind == "linear":
            sym = syms[term.deriv_order] if term.deriv_order else 1.0
            lin += coeffs[:, j, None] * sym
        elif kind == "forcing":
            forcing += coeffs[:, j]
        else:
            nonlin.append((term.power, term.deriv_order, j))

    def nl_hat(u_hat):
        if not nonlin and not forcing.any():
            return np.zeros_like(u_hat)
        u = np.fft.irfft(u_hat, n=nx, axis=-1)
        acc = np.zeros_like(u)
        for p, o, j in nonlin:
            d = np.fft.irfft(syms[o] * u_hat, n=nx, axis=-1) if o else u
            acc += coeffs[:, j, None] * (u**p * d if o else u**p)
        if forcing.any():
            acc += forcing[:, None]
        return np.fft.rfft(acc, axis=-1) * dealias

    out = np.empty((B, len(t), nx))
    out[:, 0] = u0
    ok = np.ones(B, dtype=bool)
    u_hat = np.fft.rfft(u0, axis=-1)
    scale0 = max(1.0, float(np.nanmax(np.abs(u0))))
    with np.errstate(all="ignore"):
        for n in range(len(t) - 1):
            dt_out = t[n + 1] - t[n]
            u_now = np.fft.irfft(u_hat, n=nx, axis=-1)
            umax = np.nanmax(np.abs(u_now), axis=-1)
            umax = np.where(np.isfinite(umax), umax, 0.0)
            lam = np.zeros(B)
            for p, o, j in nonlin:
                lam += np.abs(coeffs[:, j]) * np.maximum(1.0, umax) ** p * kmax**o
            h_max = _RK4_BOUND * cfg.safety / np.maximum(lam, 1e-30)
            steps = np.maximum(np.ceil(dt_out / h_max).astype(int), 1)
            if cfg.substeps is not None:
                steps[:] = cfg.substeps
            hopeless = ok & (steps > _MAX_SUBSTEPS)
            if np.any(hopeless):
                ok[hopeless] = False
                u_hat[hopeless] = np.nan
            live = steps[ok & (steps <= _MAX_SUBSTEPS)]
            n_sub = int(live.max()) if live.size else 1
            h = dt_out / n_sub
            E = np.exp(0.5 * h * lin)
            E2 = E * E
            for _ in range(n_sub):
                n1 = nl_hat(u_hat)
                ua = E * (u_hat + 0.5 * h * n1)
                n2 = nl_hat(ua)
                ub = E * u_hat + 0.5 * h * n2
                n3 = nl_hat(ub)
                uc = E2 * u_hat + h * E * n3
                n4 = nl_hat(uc)
                u_hat = E2 * u_hat + (h / 6.0) * (E2 * n1 + 2 * E * (n2 + n3) + n4)
            u_now = np.fft.irfft(u_hat, n=nx, axis=-1)
            row_bad = ~np.all(np.isfinite(u_now), axis=-1) | (
                np.nanmax(np.abs(u_now), axis=-1) > cfg.blowup * scale0
            )
            newly = ok & row_bad
            if np.any(newly):
                if raise_on_failure:
                    raise SolverInstability(
                        f"non-finite/runaway values at t={t[n + 1]:.4g}; "
                        f"RK4 CFL-like step bound violated (substeps={n_sub}, h={h:.3e})"
                    )
                ok[newly] = False
                u_hat[newly] = np.nan
            out[:, n + 1] = u_now
    return out, ok


def _spectral_symbols_2d(grid: GridSpec):
    ky = 2.0 * np.pi * np.fft.fftfreq(grid.ny, d=grid.dy)[:, None]
    kx = 2.0 * np.pi * np.fft.rfftfreq(grid.nx, d=grid.dx)[None, :]
    grad = 1j * (kx + ky)
    lap = -(kx**2 + ky**2)
    kmax = np.abs(kx).max() + np.abs(ky).max()
    dealias = (np.abs(kx) <= (2.0 / 3.0) * np.abs(kx).max()) & (
        np.abs(ky) <= (2.0 / 3.0) * np.abs(ky).max()
    )
    return {"grad": grad, "lap": lap}, dealias, kmax


def _integrate_spectral_2d(terms, coeffs, u0, grid, cfg, raise_on_failure=True):
    """2D periodic integrating-factor RK4; terms use gradient-sum/Laplacian forms."""
    t = grid.t()
    B, ny, nx = u0.shape
    syms, dealias, kmax = _spectral_symbols_2d(grid)
    fft2 = lambda a: np.fft.rfftn(a, axes=(-2, -1))
    ifft2 = lambda a: np.fft.irfftn(a, s=(ny, nx), axes=(-2, -1))

    lin = np.zeros((B,) + syms["lap"].shape, dtype=complex)
    nonlin = []
    forcing = np.zeros(B)
    for j, term in enumerate(terms):
        kind = _classify(term)
        if kind == "linear":
            sym = syms[term.deriv_kind] if term.deriv_kind else 1.0
            lin += coeffs[:, j, None, None] * sym
        elif kind == "forcing":
            forcing += coeffs[:, j]
        else:
            nonlin.append((term.power, term.deriv_kind, j))

    def nl_hat(u_hat):
        if not nonlin and not forcing.any():
            return np.zeros_like(u_hat)
        u = ifft2(u_hat)
        acc = np.zeros_like(u)
        for p, kind, j in nonlin:
            d = ifft2(syms[kind] * u_hat) if kind else u
            acc += coeffs[:, j, None, None] * (u**p * d if kind else u**p)
        if forcing.any():
            acc += forcing[:, None, None]
        return fft2(acc) * dealias

    out = np.empty((B, len(t), ny, nx))
    out[:, 0] = u0
    ok = np.ones(B, dtype=bool)
    u_hat = fft2(u0)
    scale0 = max(1.0, float(np.nanmax(np.abs(u0))))
    with np.errstate(all="ignore"):
        for n in range(len(t) - 1):
            dt_out = t[n + 1] - t[n]
            u_now = ifft2(u_hat)
            umax = np.nanmax(np.abs(u_now), axis=(-2, -1))
            umax = np.where(np.isfinite(umax), umax, 0.0)
            lam = np.zeros(B)
            for p, kind, j in nonlin:
                order = {"grad": 1, "lap": 2, None: 0}[kind]
                lam += np.abs(coeffs[:, j]) * np.maximum(1.0, umax) ** p * kmax**order
            h_max = _RK4_BOUND * cfg.safety / np.maximum(lam, 1e-30)
            steps = np.maximum(np.ceil(dt_out / h_max).astype(int), 1)
            if cfg.substeps is not None:
                steps[:] = cfg.substeps
            hopeless = ok & (steps > _MAX_SUBSTEPS)
            if np.any(hopeless):
                ok[hopeless] = False
                u_hat[hopeless] = np.nan
            live = steps[ok & (steps <= _MAX_SUBSTEPS)]
            n_sub = int(live.max()) if live.size else 1
            h = dt_out / n_sub
            E = np.exp(0.5 * h * lin)
            E2 = E * E
            for _ in range(n_sub):
                n1 = nl_hat(u_hat)
                ua = E * (u_hat + 0.5 * h * n1)
                n2 = nl_hat(ua)
                ub = E * u_hat + 0.5 * h * n2
                n3 = nl_hat(ub)
                uc = E2 * u_hat + h * E * n3
                n4 = nl_hat(uc)
                u_hat = E2 * u_hat + (h / 6.0) * (E2 * n1 + 2 * E * (n2 + n3) + n4)
            u_now = ifft2(u_hat)
            row_bad = ~np.all(np.isfinite(u_now), axis=(-2, -1)) | (
                np.nanmax(np.abs(u_now), axis=(-2, -1)) > cfg.blowup * scale0
            )
            newly = ok & row_bad
            if np.any(newly):
                if raise_on_failure:
                    raise SolverInstability(
                        f"non-finite/runaway values at t={t[n + 1]:.4g}; "
                        f"RK4 CFL-like step bound violated (substeps={n_sub}, h={h:.3e})"
                    )
                ok[newly] = False
                u_hat[newly] = np.nan
            out[:, n + 1] = u_now
    return out, ok


# ---------------------------------------------------------------------------
# public solvers


def _default_ic(system: str, grid: GridSpec) -> np.ndarray:
    if system == "burgers1d":
        return -np.sin(np.pi * grid.x())
    if system == "kdv":
        return np.cos(np.pi * grid.x())
    if system == "burgers2d":
        xx = grid.x()[None, :]
        yy = grid.y()[:, None]
        return 0.1 / np.cosh(20 * xx**2 + 25 * yy**2)
    raise ConfigError(f"no default initial condition for system {system!r}")


def solve_burgers_1d(nu: float, grid: GridSpec, cfg: SolverConfig = SolverConfig(),
                     ic: np.ndarray | None = None) -> FieldSeries:
    """Viscous advection-diffusion with homogeneous Dirichlet boundaries."""
    if nu <= 0:
        raise ConfigError("burgers1d: nu must be positive")
    if grid.is_2d or grid.periodic:
        raise ConfigError("burgers1d: expects a 1D non-periodic grid")
    u0 = _default_ic("burgers1d", grid) if ic is None else np.asarray(ic, dtype=float)
    terms = [term_by_name("uu_x"), term_by_name("u_xx")]
    coeffs = np.array([[-1.0, nu]])
    vals, _ = _integrate_fd_dirichlet(terms, coeffs, u0[None, :], grid, cfg)
    return FieldSeries(grid=grid, values=vals[0], provenance="clean")


def solve_kdv(c1: float, c2: float, grid: GridSpec, cfg: SolverConfig = SolverConfig(),
              ic: np.ndarray | None = None) -> FieldSeries:
    """Advection plus third-order dispersion on a periodic grid."""
    if c2 == 0:
        raise ConfigError("kdv: dispersion coefficient must be nonzero")
    if grid.is_2d or not grid.periodic:
        raise ConfigError("kdv: expects a 1D periodic grid")
    u0 = _default_ic("kdv", grid) if ic is None else np.asarray(ic, dtype=float)
    terms = [term_by_name("uu_x"), term_by_name("u_xxx")]
    coeffs = np.array([[c1, c2]])
    vals, _ = _integrate_spectral_1d(terms, coeffs, u0[None, :], grid, cfg)
    return FieldSeries(grid=grid, values=vals[0], provenance="clean")


def solve_burgers_2d(c_adv: float, c_diff: float, grid: GridSpec,
                     cfg: SolverConfig = SolverConfig(),
                     ic: np.ndarray | None = None) -> FieldSeries:
    """2D advection-diffusion in gradient-sum form on a periodic grid."""
    if not grid.is_2d or not grid.periodic:
        raise ConfigError("burgers2d: expects a 2D periodic grid")
    u0 = _default_ic("burgers2d", grid) if ic is None else np.asarray(ic, dtype=float)
    terms = [term_by_name("(u.grad)u", two_d=True), term_by_name("lap(u)", two_d=True)]
    coeffs = np.array([[c_adv, c_diff]])
    vals, _ = _integrate_spectral_2d(terms, coeffs, u0[None, :, :], grid, cfg)
    return FieldSeries(grid=grid, values=vals[0], provenance="clean")


def solve_generic(model: PdeModel, ic: np.ndarray, grid: GridSpec,
                  cfg: SolverConfig = SolverConfig()) -> FieldSeries:
    """Method-of-lines integration of an arbitrary learned model."""
    coeffs = np.asarray(model.coefficients, dtype=float)[None, :]
    vals, _ = solve_generic_batch(model, coeffs, np.asarray(ic, float)[None], grid, cfg,
                                  raise_on_failure=True)
    return FieldSeries(grid=grid, values=vals[0], provenance="simulated")


def solve_generic_batch(model: PdeModel, coeffs: np.ndarray, ics: np.ndarray,
                        grid: GridSpec, cfg: SolverConfig = SolverConfig(),
                        raise_on_failure: bool = False):
    """Integrate one model form under a batch of coefficient sets.

    coeffs: (B, K) coefficient rows; ics: (B, ...) or a single shared slice.
    Returns (values (B, nt, ...), ok (B,)); failed rows hold NaNs.
    """
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float))
    terms = model.term_specs(two_d=grid.is_2d)
    ics = np.asarray(ics, dtype=float)
    if ics.ndim == len(grid.shape) - 1:
        ics = np.broadcast_to(ics, (coeffs.shape[0],) + ics.shape).copy()
    if ics.shape != (coeffs.shape[0],) + grid.shape[1:]:
        raise ConfigError("solve_generic: initial condition shape does not match grid")
    method = cfg.method
    if method == "auto":
        method = "spectral" if grid.periodic else "fd"
    if grid.is_2d:
        if method != "spectral":
            raise ConfigError("solve_generic: 2D supports the spectral method only")
        return _integrate_spectral_2d(terms, coeffs, ics, grid, cfg, raise_on_failure)
    if method == "spectral":
        if not grid.periodic:
            raise ConfigError("solve_generic: spectral method needs a periodic grid")
        return _integrate_spectral_1d(terms, coeffs, ics, grid, cfg, raise_on_failure)
    return _integrate_fd_dirichlet(terms, coeffs, ics, grid, cfg, raise_on_failure)


def add_noise(fs: FieldSeries, level: float, seed: int) -> FieldSeries:
    """Add white Gaussian noise scaled by ``level * std(u)`` (counter-based PRNG)."""
    if level < 0:
        raise ConfigError("add_noise: level must be >= 0")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    g = rng.standard_normal(fs.values.shape)
    noisy = fs.values + level * np.std(fs.values) * g
    provenance = "noisy" if level > 0 else fs.provenance
    return FieldSeries(grid=fs.grid, values=noisy, provenance=provenance, seed=seed)


def smoothed_initial_condition(fs: FieldSeries, width: int = 5) -> np.ndarray:
    """First time slice after a light moving-average pass along each space axis."""
    ic = fs.initial_slice()
    ic = moving_average(ic, width=width, axis=-1)
    if fs.grid.is_2d:
        ic = moving_average(ic, width=width, axis=0)
    return ic
