"""Illumination beamformer design.

* ``uniform``: equal-amplitude all-ones beam.
* ``tcm``: closed-form total-coherence minimization.  A tight frame is
  chosen as the target sensing matrix, the per-cell illumination gains that
  best reproduce it are found in closed form, and the transmit vector is the
  least-squares fit of those gains through the transmit steering matrix.
* ``ipm``: max-min illumination power over a focus set, solved as an SDP
  with a successive rank-one cut (SCA).

All designs return vectors with squared norm equal to the per-subcarrier
power budget.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import unitary_group

from .errors import DesignError, DimensionError, ParameterError
from .geometry import ChannelTables
from .plan import IlluminationPlan
from .sdp import ConicProblem, SdpError, solve_conic

log = logging.getLogger(__name__)

UNITARY_CHOICES = ("svd", "phase", "haar")
COND_LIMIT = 1e12
RIDGE_REL = 1e-10
BIG_M = 1e6


# --------------------------------------------------------------------------
# uniform


def uniform_pattern(p: float, m_tx: int) -> np.ndarray:
    if not p > 0:
        raise ParameterError("power must be positive")
    return np.full(m_tx, np.sqrt(p / m_tx), dtype=complex)


def uniform_plan(tables: ChannelTables, p: float) -> IlluminationPlan:
    x = uniform_pattern(p, tables.b_matrix.shape[1])
    return IlluminationPlan(np.tile(x, (tables.n_subcarriers, 1)), p, "uniform")


# --------------------------------------------------------------------------
# coherence diagnostics


def total_coherence(phi: np.ndarray, alpha: float) -> float:
    """||Phi^H Phi - alpha^2 I||_F^2."""
    gram = phi.conj().T @ phi
    gram[np.diag_indices_from(gram)] -= alpha**2
    return float(np.sum(np.abs(gram) ** 2))


def fitted_alpha(phi: np.ndarray) -> float:
    """Frobenius-optimal alpha: alpha^2 = ||Phi||_F^2 / Q."""
    return float(np.sqrt(np.sum(np.abs(phi) ** 2) / phi.shape[1]))


def relative_coherence(phi: np.ndarray) -> float:
    """Total coherence at the fitted alpha, divided by alpha^4 (scale free)."""
    alpha = fitted_alpha(phi)
    if alpha == 0:
        return float("inf")
    return total_coherence(phi, alpha) / alpha**4


def column_normalized(phi: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(phi, axis=0)
    if np.any(norms == 0):
        raise DesignError("sensing matrix has an all-zero column")
    return phi / norms


# --------------------------------------------------------------------------
# total coherence minimization


def tcm_target_frame(
    a_norm: np.ndarray,
    eta: np.ndarray,
    unitary: str = "svd",
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Tight frame U1 [I 0] U2^H (rows orthonormal) used as target sensing matrix.

    ``unitary`` picks the free unitaries: ``"svd"`` aligns both with the SVD
    of A diag(eta); ``"phase"`` keeps that alignment but rotates every
    column by an independent random phase (U2 = diag(e^{-j theta}) V), which
    leaves the frame's coherence and the fitted gain magnitudes unchanged;
    ``"haar"`` draws both unitaries at random.
    """
    m_rx, q = a_norm.shape
    if m_rx > q:
        raise DimensionError("the frame construction needs M_r <= Q")
    if unitary not in UNITARY_CHOICES:
        raise ParameterError(f"unknown unitary choice {unitary!r}")
    if unitary != "svd" and rng is None:
        raise ParameterError(f"unitary choice {unitary!r} needs a random generator")
    if unitary == "haar":
        u1 = unitary_group.rvs(m_rx, random_state=rng) if m_rx > 1 else np.ones((1, 1))
        u2 = unitary_group.rvs(q, random_state=rng) if q > 1 else np.ones((1, 1))
        return u1 @ u2[:, :m_rx].conj().T
    dmat = a_norm * eta[None, :]
    u, s, vh = np.linalg.svd(dmat, full_matrices=True)
    if s[-1] <= 1e-12 * s[0]:
        log.info("A diag(eta) is numerically rank deficient; frame uses SVD completion")
    frame = u @ vh[:m_rx, :]
    if unitary == "phase":
        frame = frame * np.exp(1j * rng.uniform(0.0, 2 * np.pi, q))[None, :]
    return frame


def tcm_beta(phi_star: np.ndarray, a_norm: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Per-cell gains minimizing ||A diag(eta) diag(beta) - Phi*||_F for unit-norm A columns."""
    eta = np.asarray(eta, dtype=float)
    if np.any(eta <= 0):
        raise ParameterError("pathloss must be strictly positive")
    proj = np.einsum("mq,mq->q", phi_star.conj(), a_norm)  # [Phi^H A]_qq
    return proj.conj() / eta


def fit_transmit_vector(b_matrix: np.ndarray, beta: np.ndarray, weights=None) -> np.ndarray:
    """Least-squares x with B x ~ beta, ridge-regularized if B^H B is ill-conditioned.

    ``weights`` (per cell, e.g. the pathloss) turns this into the weighted fit
    min sum_q w_q^2 |b_q^H x - beta_q|^2.
    """
    if weights is not None:
        w = np.asarray(weights, dtype=float)
        b_matrix = b_matrix * w[:, None]
        beta = beta * w
    gram = b_matrix.conj().T @ b_matrix
    if np.linalg.cond(gram) > COND_LIMIT:
        gram = gram + RIDGE_REL * np.real(np.trace(gram)) / gram.shape[0] * np.eye(gram.shape[0])
    try:
        x = np.linalg.solve(gram, b_matrix.conj().T @ beta)
    except np.linalg.LinAlgError as exc:
        raise DesignError(f"normal equations are singular: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise DesignError("non-finite transmit vector")
    return x


def _scale_to_power(x: np.ndarray, p: float) -> np.ndarray:
    nrm = np.linalg.norm(x)
    if nrm == 0:
        raise DesignError("design produced the zero vector")
    return x * np.sqrt(p) / nrm


def tcm_pattern(
    tables: ChannelTables,
    p: float,
    unitary: str = "svd",
    rng: np.random.Generator | None = None,
    weighted: bool = False,
) -> np.ndarray:
    """One TCM beamformer with ||x||^2 = p.

    ``weighted=True`` fits the gains with pathloss weights, which minimizes
    the distance to the target frame over x exactly instead of in two steps.
    """
    if not p > 0:
        raise ParameterError("power must be positive")
    a_norm = tables.a_normalized
    frame = tcm_target_frame(a_norm, tables.eta, unitary, rng)
    beta = tcm_beta(frame, a_norm, tables.eta)
    weights = tables.eta if weighted else None
    return _scale_to_power(fit_transmit_vector(tables.b_matrix, beta, weights), p)


def tcm_plan(
    tables: ChannelTables, p: float, unitary: str = "phase", seed: int = 0,
    weighted: bool = False,
) -> IlluminationPlan:
    """TCM beamformers for every subcarrier.

    With a random unitary choice each subcarrier gets its own frame drawn
    from an independent stream, so the subcarriers see distinct sensing
    matrices of equal total coherence.
    """
    streams = np.random.SeedSequence(seed).spawn(tables.n_subcarriers)
    vecs = [
        tcm_pattern(tables, p, unitary, np.random.default_rng(ss), weighted) for ss in streams
    ]
    a_norm = tables.a_normalized
    diag = {
        "relative_coherence": [
            relative_coherence(a_norm * (tables.eta * (tables.b_matrix @ x))[None, :]) for x in vecs
        ],
        "unitary": unitary,
        "weighted": weighted,
    }
    return IlluminationPlan(np.array(vecs), p, "tcm", None, diag)


# --------------------------------------------------------------------------
# illumination power maximization


def min_illumination_power(x, tables: ChannelTables, cells) -> float:
    cells = np.asarray(cells, dtype=int).ravel()
    if cells.size == 0:
        raise ParameterError("cell subset is empty")
    gains = tables.eta[cells] ** 2 * np.abs(tables.b_matrix[cells] @ np.asarray(x)) ** 2
    return float(gains.min())


@dataclass
class SdpIterate:
    x_mat: np.ndarray
    chi: float
    dominant_vec: np.ndarray
    rank_residual: float
    converged: bool = True
    unbounded: bool = False
    solver_iterations: int = 0


def _rank_residual(mat: np.ndarray) -> tuple[float, np.ndarray]:
    ev, vecs = np.linalg.eigh(0.5 * (mat + mat.conj().T))
    return float(np.sum(np.abs(ev)) - np.max(np.abs(ev))), vecs[:, -1]


def _conic_data(g, w, eps, u) -> ConicProblem:
    """max chi s.t. w_i g_i^H X g_i >= chi, tr X <= 1 [, tr((I-uu^H)X) <= eps].

    Slack layout z = [chi, s_1..s_m, s_trace(, s_cut)(, s_guard)].
    """
    m, d = g.shape
    guard = m == 0
    cut = eps is not None
    dense = [np.eye(d)]
    rhs = [0.0] * m + [1.0]
    if cut:
        dense.append(np.eye(d) - np.outer(u, u.conj()))
        rhs.append(eps)
    n_lin = 1 + m + 1 + int(cut) + int(guard)
    rows = m + 1 + int(cut) + int(guard)
    lin = np.zeros((rows, n_lin))
    lin[:m, 0] = -1.0
    lin[np.arange(m), 1 + np.arange(m)] = -1.0
    lin[m, 1 + m] = 1.0
    if cut:
        lin[m + 1, 2 + m] = 1.0
    if guard:
        dense.append(np.zeros((d, d)))
        rhs.append(BIG_M)
        lin[-1, 0] = 1.0
        lin[-1, -1] = 1.0
    cost = np.zeros(n_lin)
    cost[0] = -1.0
    return ConicProblem(g, w, np.array(dense), lin, np.array(rhs), np.zeros((d, d)), cost)


def _strict_start(g, w, eps, u):
    """Strictly feasible (X, z) for the rank-cut problem, near u u^H."""
    m, d = g.shape
    proj = np.eye(d) - np.outer(u, u.conj())
    x0 = 0.9 * np.outer(u, u.conj()) + 0.5 * eps / (d - 1) * proj
    c = w * np.real(np.einsum("ia,ab,ib->i", g.conj(), x0, g))
    chi = 0.5 * c.min() if m else 1.0
    z = [chi, *(c - chi), 1.0 - np.real(np.trace(x0)), eps - np.real(np.trace(proj @ x0))]
    return x0, np.array(z)


def solve_sdp_subproblem(
    vectors,
    weights,
    p: float = 1.0,
    linearization: tuple | None = None,
    eps: float | None = None,
    method: str = "ipm",
    tol: float | None = None,
) -> SdpIterate:
    """Solve max chi s.t. w_i g_i^H X g_i >= chi, tr X <= p, X >= 0.

    ``linearization=(X_k, u_k)`` adds the rank cut
    tr X - (||X_k||_2 + u_k^H (X - X_k) u_k) <= eps, which is the linear
    constraint tr((I - u_k u_k^H) X) <= eps.  The problem is solved on the
    unit-trace scale and mapped back.  With no illumination rows the
    objective is unbounded; chi is then capped at a big-M guard.
    """
    if not p > 0:
        raise ParameterError("power must be positive")
    g = np.atleast_2d(np.asarray(vectors, dtype=complex))
    w = np.asarray(weights, dtype=float).ravel()
    if g.shape[0] != w.size:
        raise DimensionError("one weight per constraint vector is required")
    d = g.shape[1]
    # rescale the weights so the largest attainable gain is O(1)
    gain = w * np.sum(np.abs(g) ** 2, axis=1)
    scale = float(gain.max()) if gain.size and gain.max() > 0 else 1.0
    w = w / scale
    u = None
    start = None
    eps_unit = None
    if linearization is not None:
        if eps is None:
            raise ParameterError("the rank cut needs eps")
        _, u = linearization
        u = np.asarray(u, dtype=complex).ravel()
        u = u / np.linalg.norm(u)
        eps_unit = eps / p
        if d > 1 and g.shape[0] > 0 and method == "ipm":
            start = _strict_start(g, w, eps_unit, u)
    prob = _conic_data(g, w, eps_unit, u)
    try:
        sol = solve_conic(prob, method=method, tol=tol, start=start)
    except SdpError as exc:
        raise DesignError(f"SDP subproblem failed: {exc}") from exc
    x_unit = 0.5 * (sol.x_mat + sol.x_mat.conj().T)
    if g.shape[0]:
        chi = scale * float(np.min(w * np.real(np.einsum("ia,ab,ib->i", g.conj(), x_unit, g))))
    else:
        chi = float(sol.z[0])
    resid, dom = _rank_residual(x_unit)
    return SdpIterate(
        x_mat=p * x_unit,
        chi=p * chi,
        dominant_vec=dom,
        rank_residual=p * resid,
        converged=sol.converged,
        unbounded=g.shape[0] == 0,
        solver_iterations=sol.iterations,
    )


@dataclass
class IpmOptions:
    max_sca_iter: int = 30
    eps_rel: float = 1e-4
    change_tol: float = 1e-3
    monotone_tol: float = 1e-8
    method: str = "ipm"
    tol: float | None = None


@dataclass
class IpmDesign:
    x: np.ndarray
    chi_trace: list
    relaxed_chi: float
    eps: float
    rank_residual: float
    final: SdpIterate | None
    converged: bool
    rejected: int = 0
    extra: dict = field(default_factory=dict)


def focus_subspace(b_matrix, eta, focus):
    """Orthonormal basis of span{b_i : i in focus} and the reduced constraint data.

    Any component of X outside this span only spends power, so restricting X
    to it loses nothing.  Returns (basis M_t x d, vectors m x d, weights,
    scale) with physical gain eta_i^2 b_i^H X b_i = scale * w_i g_i^H X g_i.
    """
    focus = np.asarray(focus, dtype=int).ravel()
    if focus.size == 0:
        raise ParameterError("focus set is empty")
    bvecs = np.conj(b_matrix[focus])  # rows b_i
    uu, s, _ = np.linalg.svd(bvecs.T, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * s[0]))
    basis = uu[:, :rank]
    g = bvecs @ basis.conj()  # row i = (basis^H b_i)^T
    e2 = eta[focus] ** 2
    scale = float(np.max(e2 * np.sum(np.abs(g) ** 2, axis=1))) / rank
    return basis, g, e2 / scale, scale


def ipm_pattern(
    tables: ChannelTables, p: float, focus, opts: IpmOptions | None = None
) -> IpmDesign:
    """Max-min illumination over ``focus`` with a rank-one SCA refinement."""
    opts = opts or IpmOptions()
    if not p > 0:
        raise ParameterError("power must be positive")
    basis, g, w, scale = focus_subspace(tables.b_matrix, tables.eta, focus)
    d = basis.shape[1]
    if d == 1:
        x = np.sqrt(p) * basis[:, 0]
        chi = p * scale * float(np.min(w * np.abs(g[:, 0]) ** 2))
        return IpmDesign(x, [chi], chi, 0.0, 0.0, None, True)

    relaxed = solve_sdp_subproblem(g, w, 1.0, method=opts.method, tol=opts.tol)
    eps = opts.eps_rel * float(np.real(np.trace(relaxed.x_mat)))
    x_cur = relaxed.x_mat
    trace = []
    current = None
    rejected = 0
    converged = False
    for k in range(opts.max_sca_iter):
        _, u = _rank_residual(x_cur)
        try:
            it = solve_sdp_subproblem(g, w, 1.0, (x_cur, u), eps, opts.method, opts.tol)
        except DesignError as exc:
            if current is None:
                raise DesignError(f"SCA iteration {k} failed: {exc}") from exc
            log.warning("SCA iteration %d failed (%s); keeping previous iterate", k, exc)
            break
        if trace and it.chi < trace[-1] - opts.monotone_tol:
            rejected += 1
            log.info("SCA iterate %d lowered chi; stopping at the previous iterate", k)
            converged = True
            break
        change = np.linalg.norm(it.x_mat - x_cur) / max(np.linalg.norm(x_cur), 1e-300)
        trace.append(it.chi)
        current = it
        x_cur = it.x_mat
        if k > 0 and change < opts.change_tol:
            converged = True
            break
    if not converged:
        log.info("SCA reached %d iterations without meeting the change tolerance",
                 opts.max_sca_iter)
    x = np.sqrt(p) * (basis @ current.dominant_vec)
    return IpmDesign(
        x=x,
        chi_trace=[c * p * scale for c in trace],
        relaxed_chi=relaxed.chi * p * scale,
        eps=eps,
        rank_residual=current.rank_residual,
        final=current,
        converged=converged,
        rejected=rejected,
        extra={"subspace_dim": d, "unit_chi_trace": list(trace)},
    )


def default_focus_sets(cells_per_side: int, n_subcarriers: int) -> list[np.ndarray]:
    """Quadrants (TL, TR, BL, BR) for four subcarriers; vertical bands otherwise."""
    rows = np.repeat(np.arange(cells_per_side), cells_per_side)
    cols = np.tile(np.arange(cells_per_side), cells_per_side)
    if n_subcarriers == 4:
        half = cells_per_side // 2
        top, left = rows < half, cols < half
        return [np.flatnonzero(m) for m in (top & left, top & ~left, ~top & left, ~top & ~left)]
    edges = np.linspace(0, cells_per_side, n_subcarriers + 1).round().astype(int)
    return [np.flatnonzero((cols >= lo) & (cols < hi)) for lo, hi in zip(edges[:-1], edges[1:])]


def ipm_plan(
    tables: ChannelTables,
    p: float,
    focus_sets=None,
    opts: IpmOptions | None = None,
) -> IlluminationPlan:
    n = tables.n_subcarriers
    if focus_sets is None:
        focus_sets = default_focus_sets(tables.geometry.cells_per_side, n)
    if len(focus_sets) != n:
        raise DimensionError("one focus set per subcarrier is required")
    designs = [ipm_pattern(tables, p, f, opts) for f in focus_sets]
    diag = {
        "chi_trace": [d.chi_trace for d in designs],
        "relaxed_chi": [d.relaxed_chi for d in designs],
        "rank_residual": [d.rank_residual for d in designs],
        "eps": [d.eps for d in designs],
        "min_power": [min_illumination_power(d.x, tables, f) for d, f in zip(designs, focus_sets)],
    }
    focus = tuple(tuple(int(c) for c in f) for f in focus_sets)
    return IlluminationPlan(np.array([d.x for d in designs]), p, "ipm", focus, diag)
