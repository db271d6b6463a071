"""Small conic solvers used by the illumination-power design.

Both solvers handle standard-form problems over the product of one complex
Hermitian PSD block and a nonnegative orthant::

    minimize    <C, X> + c . z
    subject to  <A_k, X> + l_k . z = b_k,   k = 1..K
                X >= 0 (Hermitian PSD),  z >= 0

where ``<A, X> = Re tr(A^H X)``.  Constraint matrices come in two flavours:
rank-one ``w_k g_k g_k^H`` (the illumination constraints, stored as vectors)
and a handful of dense Hermitian matrices (trace and rank-cut rows).

``method="ipm"`` is a primal-dual path-following method (HKM direction,
Mehrotra predictor-corrector).  ``method="admm"`` is the dual alternating
direction augmented Lagrangian iteration of Wen, Goldfarb & Yin (2010); it
is slower to reach tight tolerances and kept for cross-checking.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla


class SdpError(RuntimeError):
    """Raised when the conic solver cannot produce a usable iterate."""


@dataclass
class ConicProblem:
    """Standard-form data.

    Rows ``0..K1-1`` are rank-one: ``A_k = r1_weights[k] * outer(r1_vecs[k], conj(r1_vecs[k]))``.
    Rows ``K1..K1+K2-1`` use the dense Hermitian matrices in ``dense``.
    ``lin`` is (K, p); ``rhs`` is (K,).
    """

    r1_vecs: np.ndarray
    r1_weights: np.ndarray
    dense: np.ndarray
    lin: np.ndarray
    rhs: np.ndarray
    cost_mat: np.ndarray
    cost_lin: np.ndarray

    def __post_init__(self):
        d = self.cost_mat.shape[0]
        self.r1_vecs = np.asarray(self.r1_vecs, dtype=complex).reshape(-1, d)
        self.r1_weights = np.asarray(self.r1_weights, dtype=float).reshape(-1)
        self.dense = np.asarray(self.dense, dtype=complex).reshape(-1, d, d)
        self.lin = np.asarray(self.lin, dtype=float)
        self.rhs = np.asarray(self.rhs, dtype=float)
        self.cost_lin = np.asarray(self.cost_lin, dtype=float)
        if self.lin.shape != (self.n_rows, self.cost_lin.size):
            raise ValueError("lin must be (K, p) with K constraint rows")
        if self.rhs.shape != (self.n_rows,):
            raise ValueError("rhs length must equal the number of constraint rows")

    @property
    def dim(self) -> int:
        return self.cost_mat.shape[0]

    @property
    def n_rank1(self) -> int:
        return self.r1_vecs.shape[0]

    @property
    def n_rows(self) -> int:
        return self.r1_vecs.shape[0] + self.dense.shape[0]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """``<A_k, X>`` for every row."""
        g = self.r1_vecs
        r1 = self.r1_weights * np.real(np.einsum("ka,ab,kb->k", g.conj(), X, g))
        dn = np.real(np.einsum("kab,ab->k", self.dense.conj(), X))
        return np.concatenate([r1, dn])

    def adjoint(self, y: np.ndarray) -> np.ndarray:
        """``sum_k y_k A_k``."""
        k1 = self.n_rank1
        g = self.r1_vecs
        out = (g.T * (y[:k1] * self.r1_weights)) @ g.conj()
        if self.dense.shape[0]:
            out = out + np.einsum("k,kab->ab", y[k1:], self.dense)
        return out

    def dense_rows(self) -> np.ndarray:
        """Every row as a real vector over ``[Re X, Im X, z]``."""
        g = self.r1_vecs
        mats = self.r1_weights[:, None, None] * np.einsum("ka,kb->kab", g, g.conj())
        mats = np.concatenate([mats, self.dense]).reshape(self.n_rows, -1)
        return np.hstack([mats.real, mats.imag, self.lin])


@dataclass
class ConicSolution:
    x_mat: np.ndarray
    z: np.ndarray
    y: np.ndarray
    primal_obj: float
    dual_obj: float
    primal_res: float
    dual_res: float
    gap: float
    iterations: int
    converged: bool
    state: dict = field(default_factory=dict, repr=False)


def _herm(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.conj().T)


def _max_step(X: np.ndarray, dX: np.ndarray) -> float:
    """Largest a with X + a dX still PSD (inf if dX is PSD)."""
    L = np.linalg.cholesky(X)
    Li = sla.solve_triangular(L, np.eye(len(X)), lower=True)
    lam = np.linalg.eigvalsh(_herm(Li @ dX @ Li.conj().T))[0]
    return np.inf if lam >= 0 else -1.0 / lam


def _max_step_vec(z: np.ndarray, dz: np.ndarray) -> float:
    neg = dz < 0
    if not neg.any():
        return np.inf
    return float(np.min(-z[neg] / dz[neg]))


def _schur(prob: ConicProblem, X: np.ndarray, Sinv: np.ndarray, zs: np.ndarray) -> np.ndarray:
    """Re tr(A_i X A_j S^-1) plus the orthant part  L diag(z/s) L^T."""
    k1 = prob.n_rank1
    g = prob.r1_vecs
    w = prob.r1_weights
    K = prob.n_rows
    M = np.zeros((K, K))
    if k1:
        gx = g.conj() @ X @ g.T  # g_i^H X g_j
        gs = g.conj() @ Sinv @ g.T
        M[:k1, :k1] = np.real(np.outer(w, w) * gx * gs.T)
    for j, D in enumerate(prob.dense):
        Y = X @ D @ Sinv
        col = np.empty(K)
        if k1:
            col[:k1] = w * np.real(np.einsum("ka,ab,kb->k", g.conj(), Y, g))
        col[k1:] = np.real(np.einsum("kab,ba->k", prob.dense, Y))
        M[:, k1 + j] = col
        M[k1 + j, :] = col
    M += (prob.lin * zs) @ prob.lin.T
    return 0.5 * (M + M.T)


def _solve_ipm(
    prob: ConicProblem,
    tol: float,
    max_iter: int,
    start: tuple | None = None,
    accept_tol: float = 1e-6,
) -> ConicSolution:
    d = prob.dim
    p = prob.cost_lin.size
    b = prob.rhs
    C = _herm(np.asarray(prob.cost_mat, dtype=complex))
    c = prob.cost_lin
    Lz = prob.lin

    X = np.eye(d, dtype=complex)
    S = np.eye(d, dtype=complex)
    z = np.ones(p)
    s = np.ones(p)
    if start is not None:
        X = _herm(np.asarray(start[0], dtype=complex))
        z = np.asarray(start[1], dtype=float).copy()
    y = np.zeros(prob.n_rows)
    n_cone = d + p
    nb = 1.0 + np.linalg.norm(b)
    nc = 1.0 + np.sqrt(np.linalg.norm(C) ** 2 + np.linalg.norm(c) ** 2)

    best = None
    it = 0
    for it in range(1, max_iter + 1):
        Rp = b - prob.apply(X) - Lz @ z
        Rd = C - prob.adjoint(y) - S
        rd = c - Lz.T @ y - s
        pobj = float(np.real(np.vdot(C, X)) + c @ z)
        dobj = float(b @ y)
        pres = np.linalg.norm(Rp) / nb
        dres = np.sqrt(np.linalg.norm(Rd) ** 2 + np.linalg.norm(rd) ** 2) / nc
        gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        err = max(pres, dres, gap)
        if not np.isfinite(err):
            break
        if best is None or err < best[0]:
            best = (err, X, z, y, pobj, dobj, pres, dres, gap, it)
        if err < tol:
            break

        mu = (np.real(np.vdot(X, S)) + z @ s) / n_cone
        try:
            Sinv = _herm(np.linalg.inv(S))
            chol = sla.cho_factor(_schur(prob, X, Sinv, z / s), lower=True)
        except np.linalg.LinAlgError:
            # near-degenerate optimum; the best iterate so far is returned
            break

        def direction(Rc, rc):
            T = Rc @ Sinv - X @ Rd @ Sinv
            rhs = Rp - prob.apply(_herm(T)) - Lz @ ((rc - z * rd) / s)
            dy = sla.cho_solve(chol, rhs)
            dS = Rd - prob.adjoint(dy)
            dX = _herm((Rc - X @ dS) @ Sinv)
            ds = rd - Lz.T @ dy
            dz = (rc - z * ds) / s
            return dX, dy, dS, dz, ds

        try:
            # predictor
            dXa, _, dSa, dza, dsa = direction(-X @ S, -z * s)
            ap = min(1.0, _max_step(X, dXa), _max_step_vec(z, dza))
            ad = min(1.0, _max_step(S, dSa), _max_step_vec(s, dsa))
            mu_a = (
                np.real(np.vdot(X + ap * dXa, S + ad * dSa)) + (z + ap * dza) @ (s + ad * dsa)
            ) / n_cone
            sigma = float(np.clip((mu_a / mu) ** 3, 0.0, 1.0))

            # corrector
            Rc = sigma * mu * np.eye(d) - X @ S - dXa @ dSa
            rc = sigma * mu - z * s - dza * dsa
            dX, dy, dS, dz, ds = direction(Rc, rc)
            ap = min(1.0, 0.98 * _max_step(X, dX), 0.98 * _max_step_vec(z, dz))
            ad = min(1.0, 0.98 * _max_step(S, dS), 0.98 * _max_step_vec(s, ds))
        except (np.linalg.LinAlgError, ValueError):
            break
        if not (np.isfinite(ap) and np.isfinite(ad)):
            break
        X = _herm(X + ap * dX)
        z = z + ap * dz
        S = _herm(S + ad * dS)
        y = y + ad * dy
        s = s + ad * ds

    if best is None:
        raise SdpError("interior-point method produced non-finite residuals")
    err, X, z, y, pobj, dobj, pres, dres, gap, it_best = best
    if err > accept_tol:
        raise SdpError(
            f"interior-point method stalled at residual {err:.2e} after {it} iterations"
        )
    return ConicSolution(
        x_mat=X,
        z=z,
        y=y,
        primal_obj=pobj,
        dual_obj=dobj,
        primal_res=float(pres),
        dual_res=float(dres),
        gap=float(gap),
        iterations=it_best,
        converged=err < tol,
    )


def _split(v: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    dd = d * d
    return (v[:dd] + 1j * v[dd : 2 * dd]).reshape(d, d), v[2 * dd :]


def _join(mat: np.ndarray, z: np.ndarray) -> np.ndarray:
    m = mat.ravel()
    return np.concatenate([m.real, m.imag, z])


def _project_cone(v: np.ndarray, d: int) -> np.ndarray:
    mat, z = _split(v, d)
    w, q = np.linalg.eigh(_herm(mat))
    pos = w > 0
    qp = q[:, pos]
    return _join((qp * w[pos]) @ qp.conj().T, np.maximum(z, 0.0))


def _solve_admm(
    prob: ConicProblem, tol: float, max_iter: int, warm: dict | None, mu: float = 1.0
) -> ConicSolution:
    d = prob.dim
    A = prob.dense_rows()
    b = prob.rhs
    c = _join(np.asarray(prob.cost_mat, dtype=complex), prob.cost_lin)
    try:
        chol = sla.cho_factor(A @ A.T, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SdpError("constraint operator is rank deficient") from exc

    n = A.shape[1]
    if warm is not None and warm.get("x", np.empty(0)).shape == (n,):
        x, s, mu = warm["x"].copy(), warm["s"].copy(), warm["mu"]
    else:
        x, s = np.zeros(n), np.zeros(n)
    nb = 1.0 + np.linalg.norm(b)
    nc = 1.0 + np.linalg.norm(c)
    y = np.zeros(len(b))
    pres = dres = gap = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        y = -sla.cho_solve(chol, mu * (A @ x - b) + A @ (s - c))
        v = c - A.T @ y - mu * x
        s = _project_cone(v, d)
        x = (s - v) / mu
        if it % 10 == 0 or it == max_iter:
            pres = np.linalg.norm(A @ x - b) / nb
            dres = np.linalg.norm(c - A.T @ y - s) / nc
            pobj, dobj = c @ x, b @ y
            gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
            if max(pres, dres, gap) < tol:
                converged = True
                break
            # small mu weights dual feasibility; rebalance residuals
            if it % 50 == 0:
                if pres > 10 * dres:
                    mu *= 1.6
                elif dres > 10 * pres:
                    mu /= 1.6

    mat, z = _split(x, d)
    return ConicSolution(
        x_mat=_herm(mat),
        z=z,
        y=y,
        primal_obj=float(c @ x),
        dual_obj=float(b @ y),
        primal_res=float(pres),
        dual_res=float(dres),
        gap=float(gap),
        iterations=it,
        converged=converged,
        state={"x": x, "s": s, "mu": mu},
    )


def solve_conic(
    prob: ConicProblem,
    method: str = "ipm",
    tol: float | None = None,
    max_iter: int | None = None,
    warm: dict | None = None,
    start: tuple | None = None,
) -> ConicSolution:
    if method == "ipm":
        return _solve_ipm(prob, tol or 1e-9, max_iter or 100, start)
    if method == "admm":
        return _solve_admm(prob, tol or 1e-7, max_iter or 50000, warm)
    raise ValueError(f"unknown conic method {method!r}")
