"""Correlation-aware sparse Bayesian learning with EM hyperparameter updates.

Each cell i carries an N-vector of coefficients (one per subcarrier) with
prior CN(0, gamma_i W_i), W_i = diag(t_i) Psi diag(t_i)^H, where t_i is the
row of delay phases for that cell.  The posterior is evaluated through the
Woodbury form, so the only dense factorization is of the (N M_r)-square
observation covariance N0 I + Phi Gamma Phi^H.  Internally observations are
stacked subcarrier-major; the value of every returned quantity is
independent of that ordering.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, NumericalError, ParameterError
from .forward import ObservationSet, SensingSet

log = logging.getLogger(__name__)

GAMMA_FLOOR_REL = 1e-12


@dataclass
class Posterior:
    mean: np.ndarray  # (Q, N), row i is the posterior mean of cell i
    blocks: np.ndarray  # (Q, N, N) diagonal blocks of the posterior covariance
    neg_log_evidence: float

    @property
    def stacked_mean(self) -> np.ndarray:
        """Cell-major stacking [mu_1; mu_2; ...]."""
        return self.mean.ravel()

    def second_moments(self) -> np.ndarray:
        """R_i = mu_i mu_i^H + Sigma_i."""
        return self.mean[:, :, None] * self.mean.conj()[:, None, :] + self.blocks


@dataclass
class SblState:
    gamma: np.ndarray
    psi: np.ndarray
    posterior_mean: np.ndarray | None = None
    posterior_blocks: np.ndarray | None = None
    evidence: list = field(default_factory=list)
    iteration: int = 0


@dataclass
class SblOptions:
    max_iter: int = 200
    tol: float = 1e-4
    project_ar1: bool = True
    evidence_slack: float = 1e-8


@dataclass
class SblResult:
    images: np.ndarray  # (N, side, side)
    state: SblState
    converged: bool
    evidence_increases: int
    psi_trace: list
    best_iteration: int


def prior_blocks(gamma, psi, delay_phases) -> np.ndarray:
    """Z_i = gamma_i diag(t_i) Psi diag(t_i)^H for every cell, shape (Q, N, N)."""
    gamma = np.asarray(gamma, dtype=float)
    t = np.asarray(delay_phases)
    psi = np.asarray(psi)
    try:
        np.linalg.cholesky(psi)
    except np.linalg.LinAlgError:
        raise ParameterError("correlation matrix is not positive definite") from None
    w = t[:, :, None] * psi[None, :, :] * t.conj()[:, None, :]
    return gamma[:, None, None] * w


def _check(sensing: SensingSet, y: np.ndarray, delay_phases: np.ndarray):
    n, m, q = sensing.phi.shape
    if y.shape != (m, n):
        raise DimensionError(f"observations are {y.shape}, expected {(m, n)}")
    if delay_phases.shape != (q, n):
        raise DimensionError(f"delay phases are {delay_phases.shape}, expected {(q, n)}")


def posterior(
    sensing: SensingSet,
    obs: ObservationSet,
    gamma,
    psi,
    delay_phases,
) -> Posterior:
    """Posterior mean, diagonal covariance blocks and -log p(y)."""
    phi = sensing.phi
    n_sub, m_rx, q = phi.shape
    y = np.asarray(obs.y)
    t = np.asarray(delay_phases)
    _check(sensing, y, t)
    n0 = float(obs.noise_power)
    if not n0 > 0:
        raise ParameterError("posterior requires a positive noise power")
    z = prior_blocks(gamma, psi, t)

    # C[(n, m), (i, k)] = Phi_n[m, i] Z_i[n, k]: the cross-covariance of the
    # stacked observation with every cell's coefficient vector.
    cross = (phi[:, :, :, None] * z.transpose(1, 0, 2)[:, None, :, :]).reshape(
        n_sub * m_rx, q * n_sub
    )
    cov = np.empty((n_sub, m_rx, n_sub, m_rx), dtype=complex)
    for a in range(n_sub):
        for b in range(n_sub):
            cov[a, :, b, :] = (phi[a] * z[:, a, b]) @ phi[b].conj().T
    cov = cov.reshape(n_sub * m_rx, n_sub * m_rx)
    cov += n0 * np.eye(n_sub * m_rx)
    cov = 0.5 * (cov + cov.conj().T)
    try:
        factor = sla.cho_factor(cov, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"observation covariance is not positive definite: {exc}") from exc
    yv = y.T.ravel()
    kinv_y = sla.cho_solve(factor, yv)
    kinv_c = sla.cho_solve(factor, cross)
    mean = (cross.conj().T @ kinv_y).reshape(q, n_sub)
    c3 = cross.reshape(-1, q, n_sub)
    k3 = kinv_c.reshape(-1, q, n_sub)
    blocks = z - np.einsum("aij,aik->ijk", c3.conj(), k3)
    blocks = 0.5 * (blocks + blocks.conj().transpose(0, 2, 1))
    logdet = 2.0 * np.sum(np.log(np.abs(np.diag(factor[0]))))
    quad = float(np.real(np.vdot(yv, kinv_y)))
    value = logdet + quad
    if not np.isfinite(value):
        raise NumericalError("non-finite evidence")
    return Posterior(mean, blocks, value)


def evidence(obs: ObservationSet, sensing: SensingSet, gamma, psi, delay_phases) -> float:
    """log det(Sigma_y) + y^H Sigma_y^{-1} y."""
    return posterior(sensing, obs, gamma, psi, delay_phases).neg_log_evidence


def _whitened_moments(second: np.ndarray, delay_phases: np.ndarray) -> np.ndarray:
    """diag(t_i)^{-1} R_i diag(t_i)^{-H} for unit-modulus t_i."""
    t = delay_phases
    return t.conj()[:, :, None] * second * t[:, None, :]


def update_gamma(
    mean, blocks, psi, delay_phases, floor_rel: float = GAMMA_FLOOR_REL
) -> np.ndarray:
    """gamma_i = tr(R_i W_i^{-1}) / N, floored at floor_rel * max."""
    second = np.asarray(mean)[:, :, None] * np.conj(mean)[:, None, :] + np.asarray(blocks)
    herm_err = np.max(np.abs(second - second.conj().transpose(0, 2, 1)), initial=0.0)
    if herm_err > 1e-8 * max(np.max(np.abs(second), initial=0.0), 1e-300):
        raise NumericalError("second-moment blocks are not Hermitian")
    n = second.shape[1]
    white = _whitened_moments(second, np.asarray(delay_phases))
    psi_inv = np.linalg.inv(psi)
    gam = np.real(np.einsum("ijk,kj->i", white, psi_inv)) / n
    top = gam.max() if gam.size else 0.0
    floor = floor_rel * top if top > 0 else floor_rel
    return np.maximum(gam, floor)


def update_psi(mean, blocks, gamma_new, delay_phases) -> np.ndarray:
    """Psi = mean_i gamma_i^{-1} diag(t_i)^{-1} R_i diag(t_i)^{-H}, symmetrized."""
    gamma_new = np.asarray(gamma_new, dtype=float)
    if np.any(gamma_new <= 0):
        raise ParameterError("gamma must be strictly positive")
    second = np.asarray(mean)[:, :, None] * np.conj(mean)[:, None, :] + np.asarray(blocks)
    white = _whitened_moments(second, np.asarray(delay_phases))
    est = np.mean(white / gamma_new[:, None, None], axis=0)
    return 0.5 * (est + est.conj().T)


def ar1_project(psi_hat) -> np.ndarray:
    """Nearest AR-1 Toeplitz model by the diagonal/superdiagonal mean ratio."""
    psi_hat = np.asarray(psi_hat)
    n = psi_hat.shape[0]
    if n < 2:
        raise DimensionError("projection needs at least two subcarriers")
    m0 = float(np.mean(np.real(np.diag(psi_hat))))
    if not m0 > 0:
        return np.eye(n)
    m1 = float(np.mean(np.real(np.diag(psi_hat, 1))))
    coeff = float(np.clip(m1 / m0, -1 + 1e-6, 1 - 1e-6))
    return sla.toeplitz(coeff ** np.arange(n))


def m_step_objective(gamma, psi, second, delay_phases) -> float:
    """Expected negative complete-data log prior (up to constants).

    sum_i [ log det(gamma_i W_i) + tr((gamma_i W_i)^{-1} R_i) ]; its
    minimizers over gamma and over Psi are the two M-step updates.
    """
    gamma = np.asarray(gamma, dtype=float)
    q, n = np.asarray(delay_phases).shape
    white = _whitened_moments(np.asarray(second), np.asarray(delay_phases))
    psi_inv = np.linalg.inv(psi)
    sign, logdet = np.linalg.slogdet(psi)
    traces = np.real(np.einsum("ijk,kj->i", white, psi_inv))
    return float(n * np.sum(np.log(gamma)) + q * logdet + np.sum(traces / gamma))


def _images(mean: np.ndarray) -> np.ndarray:
    q, n = mean.shape
    side = int(round(np.sqrt(q)))
    if side * side != q:
        return np.abs(mean).T
    return np.abs(mean).T.reshape(n, side, side)


def run_sbl(
    obs: ObservationSet,
    sensing: SensingSet,
    delay_phases,
    opts: SblOptions | None = None,
    gamma0=None,
    psi0=None,
) -> SblResult:
    """EM loop: posterior, gamma update, Psi update, optional AR-1 projection."""
    opts = opts or SblOptions()
    t = np.asarray(delay_phases)
    q, n = t.shape
    gamma = np.ones(q) if gamma0 is None else np.asarray(gamma0, dtype=float).copy()
    psi = np.eye(n) if psi0 is None else np.asarray(psi0).copy()
    state = SblState(gamma, psi)
    psi_trace = []
    increases = 0
    converged = False
    best = None
    post = None
    for it in range(opts.max_iter + 1):
        post = posterior(sensing, obs, gamma, psi, t)
        ev = post.neg_log_evidence
        if state.evidence and ev > state.evidence[-1] + opts.evidence_slack * abs(state.evidence[-1]):
            increases += 1
        state.evidence.append(ev)
        if best is None or ev < best[0]:
            best = (ev, it, gamma, psi, post)
        if converged or it == opts.max_iter:
            break
        gamma_new = update_gamma(post.mean, post.blocks, psi, t)
        if n > 1:
            psi_new = update_psi(post.mean, post.blocks, gamma_new, t)
            if opts.project_ar1:
                psi_new = ar1_project(psi_new)
        else:
            psi_new = psi
        floor = GAMMA_FLOOR_REL * gamma.max()
        change = np.max(np.abs(gamma_new - gamma) / (gamma + floor))
        gamma, psi = gamma_new, psi_new
        psi_trace.append(float(np.real(psi[0, 1])) if n > 1 else 0.0)
        converged = change < opts.tol
    if increases:
        log.warning("evidence increased in %d EM iterations; returning best iterate", increases)
    _, best_it, gamma, psi, post = best
    state.gamma, state.psi = gamma, psi
    state.posterior_mean, state.posterior_blocks = post.mean, post.blocks
    state.iteration = it
    return SblResult(_images(post.mean), state, converged, increases, psi_trace, best_it)
