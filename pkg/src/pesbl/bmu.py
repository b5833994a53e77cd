"""Bayesian refinement of learned coefficients against raw measurements.

The learned model form is fixed; its coefficients, an error mean, and an
error variance are sampled by Metropolis-within-Gibbs.  Each coefficient
proposal costs one forward solve of the learned PDE on a coarsened grid;
independent chains run in lockstep so their proposals solve as one batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dynamics import PdeModel, SolverConfig, smoothed_initial_condition, solve_generic_batch
from .errors import ConfigError, DegenerateDataError
from .fields import FieldSeries, resample
from .sbl import SparseModel

__all__ = [
    "ErrorModel", "ChainState", "PosteriorSummary", "BmuConfig",
    "error_vector", "log_conditional_xi", "gibbs_mu_e", "gibbs_sigma_e2",
    "mh_step_xi", "run_bmu", "gelman_rubin", "make_simulator", "inv_gamma",
]


@dataclass(frozen=True)
class ErrorModel:
    """Gaussian error model hyperpriors for the normalized residual."""

    sigma_mu_e2: float = 1.0 / 9.0   # prior variance of the error mean
    alpha_e: float = 1.0             # inverse-gamma shape for the error variance
    beta_e: float = 2.0              # inverse-gamma scale for the error variance


@dataclass(frozen=True)
class BmuConfig:
    chains: int = 2
    steps: int = 20000
    burn_frac: float = 0.25
    coarse_factor: int = 2
    seed: int = 0
    gr_threshold: float = 1.1
    init_spread: float = 1.0         # chain start dispersion, in prior stds
    adapt_interval: int = 50
    target_accept: float = 0.35
    error_model: ErrorModel = field(default_factory=ErrorModel)

    def __post_init__(self):
        if self.chains < 2:
            raise ConfigError("bmu: at least 2 chains required for convergence checks")
        if not 0 < self.burn_frac < 1:
            raise ConfigError("bmu: burn_frac must be in (0, 1)")


@dataclass
class ChainState:
    """Per-chain sampler state; arrays carry a leading chain axis."""

    xi: np.ndarray               # (B, d) current coefficients
    mu_e: np.ndarray             # (B,)
    sigma_e2: np.ndarray         # (B,)
    errors: np.ndarray           # (B, N_e) cached error vectors at current xi
    iteration: int = 0
    accepts: np.ndarray | None = None     # (B, d)
    proposals: np.ndarray | None = None   # (B, d)
    scales: np.ndarray | None = None      # (B, d)

    def __post_init__(self):
        b, d = self.xi.shape
        if self.accepts is None:
            self.accepts = np.zeros((b, d))
        if self.proposals is None:
            self.proposals = np.zeros((b, d))
        if self.scales is None:
            self.scales = np.full((b, d), 0.1)


@dataclass
class PosteriorSummary:
    """Pooled post-burn-in coefficient posterior with convergence diagnostics."""

    names: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    gelman_rubin: np.ndarray
    n_samples: int
    burn_in: int
    converged: bool
    samples: np.ndarray          # (n_kept, d) pooled post-burn-in draws
    accept_rate: np.ndarray
    system: str = "generic"

    def coefficient(self, name: str) -> tuple[float, float]:
        i = self.names.index(name)
        return float(self.mean[i]), float(self.std[i])


def error_vector(u_meas: np.ndarray | FieldSeries, u_sim: np.ndarray | FieldSeries) -> np.ndarray:
    """Measurement-normalized residual, flattened: ``(meas - sim) / ||meas||``."""
    meas = u_meas.values if isinstance(u_meas, FieldSeries) else np.asarray(u_meas)
    sim = u_sim.values if isinstance(u_sim, FieldSeries) else np.asarray(u_sim)
    if meas.shape != sim.shape:
        raise ConfigError("error_vector: fields must share a grid")
    norm = float(np.linalg.norm(meas))
    if norm == 0:
        raise DegenerateDataError("error_vector: measurement has zero norm")
    return ((meas - sim) / norm).ravel()


def _log_error_density(e: np.ndarray, mu_e: float, sigma_e2: float) -> float:
    return -0.5 * float(np.sum((e - mu_e) ** 2)) / sigma_e2


def _log_prior_xi(xi_i: float, mean_i: float, std_i: float) -> float:
    return -0.5 * ((xi_i - mean_i) / std_i) ** 2


def log_conditional_xi(xi_i: float, i: int, xi: np.ndarray, mu_e: float,
                       sigma_e2: float, prior_mean: np.ndarray, prior_std: np.ndarray,
                       simulator) -> float:
    """Unnormalized log full-conditional of one coefficient (one forward solve)."""
    trial = np.array(xi, dtype=float)
    trial[i] = xi_i
    sims, ok = simulator(trial[None, :])
    if not ok[0]:
        return -np.inf
    e = sims[0]
    return _log_error_density(e, mu_e, sigma_e2) + _log_prior_xi(
        xi_i, prior_mean[i], prior_std[i])


def gibbs_mu_e(e: np.ndarray, sigma_e2: float, em: ErrorModel, rng) -> float:
    """Draw the error mean from its Gaussian full conditional."""
    n_e = e.size
    mean = float(np.sum(e)) / (n_e + sigma_e2 / em.sigma_mu_e2)
    var = 1.0 / (n_e / sigma_e2 + 1.0 / em.sigma_mu_e2)
    return mean + np.sqrt(var) * rng.standard_normal()


def inv_gamma(shape: float, scale: float, rng) -> float:
    """One inverse-gamma draw via a reciprocal gamma variate."""
    return scale / rng.gamma(shape)


def gibbs_sigma_e2(e: np.ndarray, mu_e: float, em: ErrorModel, rng) -> float:
    """Draw the error variance from its inverse-gamma full conditional."""
    shape = e.size / 2.0 + em.alpha_e
    scale = 0.5 * float(np.sum((e - mu_e) ** 2)) + em.beta_e
    return inv_gamma(shape, scale, rng)


def mh_step_xi(state: ChainState, i: int, simulator, prior_mean: np.ndarray,
               prior_std: np.ndarray, rngs, adapt: bool = False,
               adapt_interval: int = 50, target_accept: float = 0.35) -> None:
    """Random-walk Metropolis update of coefficient ``i`` on every chain.

    Proposals across chains solve as a single batch; unstable proposals are
    rejected.  During adaptation the per-chain proposal scale is nudged
    toward the target acceptance rate.
    """
    b = state.xi.shape[0]
    steps = np.array([rngs[c].standard_normal() for c in range(b)])
    proposal = state.xi.copy()
    proposal[:, i] = state.xi[:, i] + state.scales[:, i] * steps
    sims, ok = simulator(proposal)
    for c in range(b):
        state.proposals[c, i] += 1
        log_u = np.log(rngs[c].uniform())
        if not ok[c]:
            continue
        e_new = sims[c]
        delta = (
            _log_error_density(e_new, state.mu_e[c], state.sigma_e2[c])
            + _log_prior_xi(proposal[c, i], prior_mean[i], prior_std[i])
            - _log_error_density(state.errors[c], state.mu_e[c], state.sigma_e2[c])
            - _log_prior_xi(state.xi[c, i], prior_mean[i], prior_std[i])
        )
        if log_u < delta:
            state.xi[c, i] = proposal[c, i]
            state.errors[c] = e_new
            state.accepts[c, i] += 1
    if adapt and state.proposals[0, i] and state.iteration % adapt_interval == 0:
        for c in range(b):
            rate = state.accepts[c, i] / max(state.proposals[c, i], 1)
            state.scales[c, i] *= float(np.exp(0.6 * (rate - target_accept)))
            state.accepts[c, i] = 0
            state.proposals[c, i] = 0


def gelman_rubin(chains: np.ndarray) -> np.ndarray:
    """Potential scale reduction factor per parameter.

    ``chains`` has shape (n_chains, n_samples, n_params); values near 1
    indicate the chains have mixed.
    """
    m, n, _ = chains.shape
    means = chains.mean(axis=1)
    w = chains.var(axis=1, ddof=1).mean(axis=0)
    b = n * means.var(axis=0, ddof=1)
    var_hat = (n - 1) / n * w + b / n
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.sqrt(var_hat / w)
    return np.where(w > 0, r, 1.0)


def make_simulator(model_terms, system: str, u_raw: FieldSeries, coarse_factor: int = 2,
                   solver_cfg: SolverConfig = SolverConfig(), ic_smoothing: int = 5):
    """Forward map factory: coefficient rows -> normalized error rows.

    The measurement is interpolated onto a coarsened grid; the initial
    condition is the raw first time slice after a light moving average.
    Returns ``(simulator, data_coarse)`` where ``simulator(Xi) -> (errors,
    ok)`` with one row per coefficient set.
    """
    coarse = u_raw.grid.coarsen(coarse_factor)
    data_c = resample(u_raw, coarse)
    ic = smoothed_initial_condition(data_c, width=ic_smoothing)
    norm = float(np.linalg.norm(data_c.values))
    if norm == 0:
        raise DegenerateDataError("bmu: measurement has zero norm")
    meas = data_c.values

    def simulator(xi_rows: np.ndarray):
        xi_rows = np.atleast_2d(np.asarray(xi_rows, dtype=float))
        model = PdeModel(terms=tuple(model_terms), coefficients=tuple(xi_rows[0]),
                         system=system)
        vals, ok = solve_generic_batch(model, xi_rows, ic, coarse, solver_cfg,
                                       raise_on_failure=False)
        errs = (meas[None] - vals).reshape(xi_rows.shape[0], -1) / norm
        errs[~ok] = np.nan
        return errs, ok

    return simulator, data_c


def run_bmu(prior: SparseModel, u_raw: FieldSeries, cfg: BmuConfig = BmuConfig()) -> PosteriorSummary:
    """Sample the coefficient posterior with independent lockstep chains."""
    d = len(prior.names)
    prior_mean = np.asarray(prior.mean, dtype=float)
    prior_std = np.asarray(prior.std, dtype=float)
    if np.any(prior_std <= 0):
        raise ConfigError("bmu: prior stds must be positive")
    simulator, _ = make_simulator(prior.names, prior.system, u_raw, cfg.coarse_factor)

    b = cfg.chains
    rngs = [np.random.Generator(np.random.Philox(np.random.SeedSequence([cfg.seed, c])))
            for c in range(b)]
    offsets = np.array([((c % 2) * 2 - 1) * ((c + 1) // 2) for c in range(b)], dtype=float)
    xi0 = prior_mean[None, :] + cfg.init_spread * offsets[:, None] * prior_std[None, :]
    sims, ok = simulator(xi0)
    if not np.all(ok):
        # fall back to undispersed starts for chains whose start is unstable
        xi0[~ok] = prior_mean
        sims2, ok2 = simulator(xi0[~ok])
        if not np.all(ok2):
            raise DegenerateDataError("bmu: forward solve fails at the prior mean")
        sims[~ok] = sims2
    state = ChainState(
        xi=xi0,
        mu_e=np.zeros(b),
        sigma_e2=np.full(b, 1e-4),
        errors=sims,
    )
    state.scales = np.tile(0.5 * prior_std, (b, 1))

    burn = int(cfg.burn_frac * cfg.steps)
    kept = np.empty((b, cfg.steps - burn, d))
    for sweep in range(cfg.steps):
        state.iteration = sweep + 1
        adapting = sweep < burn
        for i in range(d):
            mh_step_xi(state, i, simulator, prior_mean, prior_std, rngs,
                       adapt=adapting, adapt_interval=cfg.adapt_interval,
                       target_accept=cfg.target_accept)
        for c in range(b):
            state.mu_e[c] = gibbs_mu_e(state.errors[c], state.sigma_e2[c],
                                       cfg.error_model, rngs[c])
            state.sigma_e2[c] = gibbs_sigma_e2(state.errors[c], state.mu_e[c],
                                               cfg.error_model, rngs[c])
        if sweep >= burn:
            kept[:, sweep - burn] = state.xi

    gr = gelman_rubin(kept)
    pooled = kept.reshape(-1, d)
    accept = state.accepts.sum(axis=0) / np.maximum(state.proposals.sum(axis=0), 1)
    return PosteriorSummary(
        names=tuple(prior.names),
        mean=pooled.mean(axis=0),
        std=pooled.std(axis=0, ddof=1),
        gelman_rubin=gr,
        n_samples=pooled.shape[0],
        burn_in=burn,
        converged=bool(np.all(gr < cfg.gr_threshold)),
        samples=pooled,
        accept_rate=accept,
        system=prior.system,
    )
