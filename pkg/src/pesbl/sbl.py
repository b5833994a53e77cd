"""Sequential sparse Bayesian regression with a term-complexity penalty.

One basis action per iteration (re-estimate, add, or delete), chosen to
minimize the change of the complexity-penalized information criterion
``2*sum(i^2)/M + 2*len(selected) - 2*loglik``.  Posterior quantities are
maintained by the fast rank-one update equations of sequential sparse
Bayesian learning; a debug mode cross-checks every iteration against direct
recomputation from the closed-form posterior.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DegenerateDataError
from .library import Library, term_complexity_sum

_EPS_DENOM = 1e-12

REESTIMATE, ADD, DELETE = "reestimate", "add", "delete"


@dataclass(frozen=True)
class PesblConfig:
    """Learner controls."""

    max_iters: int = 1000
    tol1: float = 1e-4        # convergence threshold on the chosen action's gain
    tol2: float = 1e-2        # relative-gain gate that blocks marginal additions
    complexity_penalty: bool = True   # False reduces to plain sequential SBL
    reestimate_sigma2: bool = False   # optional noise-variance refresh each iteration
    debug: bool = False       # cross-check fast updates against direct recomputation

    def __post_init__(self):
        if self.tol1 <= 0 or self.tol2 <= 0:
            raise ConfigError("pesbl: tol1 and tol2 must be positive")
        if self.max_iters < 1:
            raise ConfigError("pesbl: max_iters must be >= 1")


@dataclass
class SblState:
    """All mutable state of the sequential learner."""

    Phi: np.ndarray
    t: np.ndarray
    G: np.ndarray             # Phi^T Phi
    h: np.ndarray             # Phi^T t
    tt: float                 # t^T t
    n_samples: int
    sigma2: float
    alpha: np.ndarray         # per-term precision, np.inf flags inactive terms
    S: np.ndarray
    Q: np.ndarray
    Sigma: np.ndarray         # posterior covariance over the active set
    mu: np.ndarray            # posterior mean over the active set
    i_s: list[int]            # ordered active indices (0-based)
    L_rec: list[float]
    first_gain: float | None = None   # likelihood gain of the first accepted action
    debug_max_err: float = 0.0
    gate_triggers: int = 0

    @property
    def m(self) -> int:
        return self.G.shape[0]

    @property
    def beta(self) -> float:
        return 1.0 / self.sigma2

    def active_mask(self) -> np.ndarray:
        mask = np.zeros(self.m, dtype=bool)
        mask[self.i_s] = True
        return mask


def init_state(Phi: np.ndarray, t: np.ndarray) -> SblState:
    """Empty-model state: noise variance from the target, all terms inactive."""
    Phi = np.asarray(Phi, dtype=float)
    t = np.asarray(t, dtype=float).ravel()
    if Phi.ndim != 2 or Phi.shape[0] != t.size:
        raise ConfigError("init_state: design matrix and target sizes differ")
    if not (np.all(np.isfinite(Phi)) and np.all(np.isfinite(t))):
        raise ConfigError("init_state: non-finite inputs")
    sigma2 = float(np.var(t))
    if sigma2 == 0:
        raise DegenerateDataError("init_state: target has zero variance")
    G = Phi.T @ Phi
    h = Phi.T @ t
    beta = 1.0 / sigma2
    n, m = Phi.shape
    state = SblState(
        Phi=Phi, t=t, G=G, h=h, tt=float(t @ t), n_samples=n, sigma2=sigma2,
        alpha=np.full(m, np.inf), S=beta * np.diag(G).copy(), Q=beta * h.copy(),
        Sigma=np.zeros((0, 0)), mu=np.zeros(0), i_s=[],
        L_rec=[-0.5 * (n * np.log(2 * np.pi) + n * np.log(sigma2) + beta * float(t @ t))],
    )
    return state


def candidate_stats(state: SblState):
    """Per-term sparsity/quality factors with the term's own contribution removed.

    Returns ``(s, q, theta)``; active terms whose ``alpha`` denominator is
    singular get ``theta = -inf`` (not re-estimable this iteration).
    """
    s = state.S.copy()
    q = state.Q.copy()
    for i in state.i_s:
        denom = state.alpha[i] - state.S[i]
        if abs(denom) < _EPS_DENOM:
            s[i] = np.inf  # forces theta < 0, term ineligible this round
            q[i] = 0.0
            continue
        s[i] = state.alpha[i] * state.S[i] / denom
        q[i] = state.alpha[i] * state.Q[i] / denom
    theta = q**2 - s
    return s, q, theta


def partitions(state: SblState, theta: np.ndarray):
    active = state.active_mask()
    pos = theta > 0
    i_r = np.where(active & pos)[0]
    i_add = np.where(~active & pos)[0]
    i_del = np.where(active & ~pos)[0]
    return i_r, i_add, i_del


def action_deltas(state: SblState, s: np.ndarray, q: np.ndarray, theta: np.ndarray,
                  complexity_penalty: bool = True):
    """Log-likelihood and complexity changes for every admissible action.

    Returns ``(delta_l, delta_c, kinds)`` arrays of length M; inadmissible
    entries carry ``delta_l = -inf``.
    """
    m = state.m
    delta_l = np.full(m, -np.inf)
    delta_c = np.zeros(m)
    kinds = np.array([""] * m, dtype=object)
    i_r, i_add, i_del = partitions(state, theta)
    S, Q, alpha = state.S, state.Q, state.alpha
    sum_sq = sum((i + 1) ** 2 for i in state.i_s)

    for i in i_r:
        alpha_new = s[i] ** 2 / theta[i]
        if alpha_new <= 0:
            continue
        d_inv = 1.0 / alpha_new - 1.0 / alpha[i]
        if abs(d_inv) < _EPS_DENOM:
            delta_l[i] = 0.0
            kinds[i] = REESTIMATE
            continue
        denom = S[i] + 1.0 / d_inv
        log_arg = 1.0 + S[i] * d_inv
        if abs(denom) < _EPS_DENOM or log_arg <= 0:
            continue
        delta_l[i] = 0.5 * (Q[i] ** 2 / denom - np.log(log_arg))
        kinds[i] = REESTIMATE

    for i in i_add:
        if S[i] < _EPS_DENOM or Q[i] ** 2 < _EPS_DENOM:
            continue
        delta_l[i] = 0.5 * ((Q[i] ** 2 - S[i]) / S[i] + np.log(S[i] / Q[i] ** 2))
        kinds[i] = ADD
        if complexity_penalty:
            delta_c[i] = 2.0 * (i + 1) ** 2 / m + 2.0

    for i in i_del:
        denom = S[i] - alpha[i]
        log_arg = 1.0 - S[i] / alpha[i]
        if abs(denom) < _EPS_DENOM or log_arg <= 0:
            continue
        delta_l[i] = 0.5 * (Q[i] ** 2 / denom - np.log(log_arg))
        kinds[i] = DELETE
        if complexity_penalty:
            delta_c[i] = -(2.0 * (i + 1) ** 2 / m + 2.0)

    # guard: complexity must reproduce the running-sum bookkeeping
    if complexity_penalty and state.i_s:
        base = term_complexity_sum([i + 1 for i in state.i_s], m)
        assert abs(base - (2.0 * sum_sq / m + 2.0 * len(state.i_s))) < 1e-9
    return delta_l, delta_c, kinds


def select_action(delta_l: np.ndarray, delta_c: np.ndarray, kinds: np.ndarray,
                  state: SblState, cfg: PesblConfig):
    """Pick the admissible action minimizing the penalized criterion change.

    Marginal additions (gain below ``tol2`` times the first accepted
    action's gain) are blocked and the choice re-minimized over the
    already-selected terms; a chosen gain below ``tol1`` signals
    convergence.  Returns ``(index, kind, converged, gate_fired)``.
    """
    crit = delta_c - 2.0 * delta_l
    admissible = np.isfinite(delta_l)
    if not np.any(admissible):
        return -1, "", True, False
    crit_masked = np.where(admissible, crit, np.inf)
    best = int(np.argmin(crit_masked))  # argmin takes the lowest index on ties

    gate_fired = False
    if (kinds[best] == ADD and state.first_gain is not None
            and delta_l[best] < cfg.tol2 * state.first_gain):
        gate_fired = True
        in_model = np.zeros(state.m, dtype=bool)
        in_model[state.i_s] = True
        restricted = admissible & in_model
        if not np.any(restricted):
            return -1, "", True, True
        crit_restricted = np.where(restricted, crit, np.inf)
        best = int(np.argmin(crit_restricted))

    if delta_l[best] < cfg.tol1:
        return best, kinds[best], True, gate_fired
    return best, kinds[best], False, gate_fired


def _direct_posterior(state: SblState):
    idx = state.i_s
    A = np.diag(state.alpha[idx])
    G_aa = state.G[np.ix_(idx, idx)]
    Sigma = np.linalg.inv(A + state.beta * G_aa)
    mu = state.beta * Sigma @ state.h[idx]
    return Sigma, mu


def _direct_sq(state: SblState, Sigma: np.ndarray):
    idx = state.i_s
    beta = state.beta
    if not idx:
        return beta * np.diag(state.G).copy(), beta * state.h.copy()
    G_am = state.G[idx, :]
    proj = Sigma @ G_am
    S = beta * np.diag(state.G) - beta**2 * np.einsum("am,am->m", G_am, proj)
    Q = beta * state.h - beta**2 * state.h[idx] @ proj
    return S, Q


def marginal_loglik(state: SblState) -> float:
    """Direct evaluation of the marginal log-likelihood of the active model."""
    idx = state.i_s
    n, beta = state.n_samples, state.beta
    if not idx:
        return -0.5 * (n * np.log(2 * np.pi) + n * np.log(state.sigma2) + beta * state.tt)
    A = np.diag(state.alpha[idx])
    G_aa = state.G[np.ix_(idx, idx)]
    Sigma_inv = A + beta * G_aa
    sign, logdet_si = np.linalg.slogdet(Sigma_inv)
    if sign <= 0:
        raise FloatingPointError("active-model precision lost positive definiteness")
    logdet_c = n * np.log(state.sigma2) - np.sum(np.log(state.alpha[idx])) + logdet_si
    h_a = state.h[idx]
    Sigma = np.linalg.inv(Sigma_inv)
    quad = beta * state.tt - beta**2 * h_a @ Sigma @ h_a
    return -0.5 * (n * np.log(2 * np.pi) + logdet_c + quad)


def apply_action(state: SblState, index: int, kind: str,
                 s: np.ndarray, q: np.ndarray, theta: np.ndarray) -> None:
    """Rank-one update of ``Sigma, mu, S, Q, alpha`` for the chosen action.

    Falls back to direct recomputation if the updated covariance loses
    positive definiteness.
    """
    beta = state.beta
    G = state.G
    idx = state.i_s

    if kind == REESTIMATE:
        pos = idx.index(index)
        alpha_new = s[index] ** 2 / theta[index]
        sig_col = state.Sigma[:, pos].copy()
        sig_jj = state.Sigma[pos, pos]
        mu_j = state.mu[pos]
        denom = sig_jj + 1.0 / (alpha_new - state.alpha[index])
        kappa = 1.0 / denom
        state.Sigma = state.Sigma - kappa * np.outer(sig_col, sig_col)
        state.mu = state.mu - kappa * mu_j * sig_col
        v = beta * (G[idx, :].T @ sig_col)
        state.S = state.S + kappa * v**2
        state.Q = state.Q + kappa * mu_j * v
        state.alpha[index] = alpha_new

    elif kind == ADD:
        alpha_new = s[index] ** 2 / theta[index]
        sig_ii = 1.0 / (alpha_new + state.S[index])
        mu_i = sig_ii * state.Q[index]
        if idx:
            y = state.Sigma @ G[idx, index]
            z = beta * y
            top = state.Sigma + sig_ii * np.outer(z, z)
            new_Sigma = np.block([[top, -sig_ii * z[:, None]],
                                  [-sig_ii * z[None, :], np.array([[sig_ii]])]])
            new_mu = np.concatenate([state.mu - mu_i * z, [mu_i]])
            e = beta * (G[:, index] - beta * (G[:, idx] @ y))
        else:
            new_Sigma = np.array([[sig_ii]])
            new_mu = np.array([mu_i])
            e = beta * G[:, index]
        state.Sigma = new_Sigma
        state.mu = new_mu
        state.S = state.S - sig_ii * e**2
        state.Q = state.Q - mu_i * e
        state.alpha[index] = alpha_new
        state.i_s.append(index)

    elif kind == DELETE:
        pos = idx.index(index)
        sig_col = state.Sigma[:, pos].copy()
        sig_jj = state.Sigma[pos, pos]
        mu_j = state.mu[pos]
        v = beta * (G[idx, :].T @ sig_col)
        state.S = state.S + v**2 / sig_jj
        state.Q = state.Q + (mu_j / sig_jj) * v
        shrunk = state.Sigma - np.outer(sig_col, sig_col) / sig_jj
        keep = [p for p in range(len(idx)) if p != pos]
        state.Sigma = shrunk[np.ix_(keep, keep)]
        state.mu = (state.mu - (mu_j / sig_jj) * sig_col)[keep]
        state.alpha[index] = np.inf
        state.i_s.remove(index)

    else:
        raise ConfigError(f"apply_action: unknown action {kind!r}")

    if state.i_s and np.any(np.diag(state.Sigma) <= 0):
        # rank-one arithmetic went numerically sour: rebuild from closed form
        Sigma, mu = _direct_posterior(state)
        if np.any(np.diag(Sigma) <= 0):
            raise FloatingPointError("posterior covariance lost positive definiteness")
        state.Sigma, state.mu = Sigma, mu
        state.S, state.Q = _direct_sq(state, Sigma)


def _debug_check(state: SblState) -> float:
    Sigma_d, mu_d = _direct_posterior(state)
    S_d, Q_d = _direct_sq(state, Sigma_d)
    L_d = marginal_loglik(state)
    err = 0.0
    if state.i_s:
        err = max(err, float(np.abs(state.Sigma - Sigma_d).max()),
                  float(np.abs(state.mu - mu_d).max()))
    err = max(err, float(np.abs(state.S - S_d).max()),
              float(np.abs(state.Q - Q_d).max()))
    err = max(err, abs(state.L_rec[-1] - L_d) / max(1.0, abs(L_d)))
    return err


@dataclass
class SparseModel:
    """A learned sparse PDE right-hand side with Gaussian coefficient posteriors."""

    indices: tuple[int, ...]       # 1-based library indices, sorted
    names: tuple[str, ...]
    mean: np.ndarray               # physical units
    std: np.ndarray                # posterior standard deviations, physical units
    alpha: np.ndarray              # weight precisions, physical units
    loglik: float
    n_iters: int
    converged: bool
    trace: np.ndarray
    gate_triggers: int = 0
    debug_max_err: float | None = None
    system: str = "generic"

    def coefficient(self, name: str) -> tuple[float, float]:
        i = self.names.index(name)
        return float(self.mean[i]), float(self.std[i])


def run(Phi: np.ndarray, t: np.ndarray, cfg: PesblConfig, library: Library,
        scales=None, system: str = "generic") -> SparseModel:
    """Full sequential loop; coefficients are mapped back to physical units."""
    state = init_state(Phi, t)
    if library.n_terms != state.m:
        raise ConfigError("run: library size does not match design matrix")
    converged = False
    n_iters = 0
    for n_iters in range(1, cfg.max_iters + 1):
        if cfg.reestimate_sigma2 and state.i_s:
            _refresh_sigma2(state)
        s, q, theta = candidate_stats(state)
        delta_l, delta_c, kinds = action_deltas(state, s, q, theta,
                                                cfg.complexity_penalty)
        index, kind, stop, gate = select_action(delta_l, delta_c, kinds, state, cfg)
        if gate:
            state.gate_triggers += 1
        if stop:
            converged = True
            break
        apply_action(state, index, kind, s, q, theta)
        state.L_rec.append(state.L_rec[-1] + delta_l[index])
        if state.first_gain is None:
            state.first_gain = float(delta_l[index])
        if cfg.debug:
            state.debug_max_err = max(state.debug_max_err, _debug_check(state))

    order = np.argsort(state.i_s)
    idx_sorted = [state.i_s[i] for i in order]
    col_scales, t_scale = (np.ones(state.m), 1.0) if scales is None else scales
    ratio = np.array([t_scale / col_scales[i] for i in idx_sorted])
    mu = state.mu[order] * ratio
    std = np.sqrt(np.diag(state.Sigma))[order] * np.abs(ratio)
    alpha = state.alpha[idx_sorted] / ratio**2
    return SparseModel(
        indices=tuple(i + 1 for i in idx_sorted),
        names=tuple(library.terms[i].name for i in idx_sorted),
        mean=mu, std=std, alpha=alpha,
        loglik=state.L_rec[-1], n_iters=n_iters, converged=converged,
        trace=np.asarray(state.L_rec),
        gate_triggers=state.gate_triggers,
        debug_max_err=state.debug_max_err if cfg.debug else None,
        system=system,
    )


def _refresh_sigma2(state: SblState) -> None:
    """Optional noise-variance re-estimate from the current residual."""
    idx = state.i_s
    resid = state.tt - 2 * state.mu @ state.h[idx] \
        + state.mu @ state.G[np.ix_(idx, idx)] @ state.mu
    gamma = len(idx) - np.sum(state.alpha[idx] * np.diag(state.Sigma))
    denom = max(state.n_samples - gamma, 1.0)
    new_sigma2 = max(float(resid / denom), 1e-300)
    state.sigma2 = new_sigma2
    Sigma, mu = _direct_posterior(state)
    state.Sigma, state.mu = Sigma, mu
    state.S, state.Q = _direct_sq(state, Sigma)
