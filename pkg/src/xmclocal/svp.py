"""Low-rank PSD completion of the neighbor-restricted label Gram matrix.

Projected gradient descent where the projection is rank-limited PSD
eigenvalue truncation: starting from M = 0,

    M_next = P(M + eta * sym(R)),    R = observed (G - M) on the index set,

with P keeping the top positive eigenvalues up to the embedding dimension.
The iterate is never materialized: it is carried as an eigenfactor
(U, sigma) and the projection runs on the structured matvec

    v  ->  U sigma (U' v) + eta * sym(R) v,

whose cost is linear in the number of points.  The residual is
symmetrized because membership in the index set is row-wise, while the
iterate lives on the symmetric PSD cone; on a symmetric index set (e.g.
full observation) this coincides with the plain update.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError
from .linalg import SymmetricOperator, top_eig

log = logging.getLogger(__name__)

_RANK_TRIM = 1e-10    # drop eigenvalues below this fraction of the largest
_ACCEPT_SLACK = 1e-12
_MAX_HALVINGS = 10


@dataclass
class SvpConfig:
    l_hat: int
    eta: float = 1.0
    max_iters: int = 150
    rel_tol: float = 1e-5
    step_backoff: bool = True  # False = fixed-step mode, no divergence handling
    eig_tol: float = 1e-8
    eig_max_iter: int = 300

    def validate(self):
        if self.l_hat < 1:
            raise ValueError("embedding dimension must be >= 1")
        if self.eta <= 0:
            raise ValueError("step size must be > 0")
        return self


@dataclass(frozen=True)
class Factor:
    """Eigenfactor (U, sigma) of the completed Gram matrix, sigma descending >= 0."""

    U: np.ndarray        # (n, r), orthonormal columns
    sigma: np.ndarray    # (r,)
    l_hat: int

    @property
    def rank(self):
        return self.sigma.shape[0]


@dataclass
class SvpStats:
    """Per-run diagnostics: objective trajectory and matvec accounting."""

    objective: list = field(default_factory=list)    # f(M_t) for accepted iterates, incl. M_1 = 0
    matvecs: list = field(default_factory=list)      # operator applications per accepted step
    flops: list = field(default_factory=list)        # estimated matvec flops per accepted step
    eta_final: float = 0.0
    iterations: int = 0
    converged: bool = False


def gram_on_omega(factor, omega):
    """Entries of U diag(sigma) U' at the observed positions, shape (n, m)."""
    return _reconstruct(factor.U, factor.sigma, omega)


def _reconstruct(U, sigma, omega):
    n, m = omega.indices.shape
    r = U.shape[1]
    if r == 0:
        return np.zeros((n, m))
    W = U * sigma
    out = np.empty((n, m))
    block = max(1, 4_000_000 // (m * r))
    for start in range(0, n, block):
        stop = min(start + block, n)
        out[start:stop] = np.einsum(
            "br,bmr->bm", W[start:stop], U[omega.indices[start:stop]]
        )
    return out


def _project(U, sigma, S, eta, k, cfg):
    """Rank-k PSD truncation of U diag(sigma) U' + eta * S via the structured matvec."""
    n = S.shape[0]
    W = U * sigma

    def matvec(v):
        out = eta * (S @ v)
        if W.shape[1]:
            out += W @ (U.T @ v)
        return out

    flops = 4 * n * W.shape[1] + 2 * S.nnz + n
    op = SymmetricOperator(n, matvec, flops_per_apply=flops)
    Uk, lam = top_eig(op, k, tol=cfg.eig_tol, max_iter=cfg.eig_max_iter)
    lam = np.maximum(lam, 0.0)
    keep = lam > _RANK_TRIM * max(lam[0] if lam.size else 0.0, 0.0)
    keep &= lam > 0.0
    return np.ascontiguousarray(Uk[:, keep]), lam[keep], op


def svp_complete(omega, cfg, stats=None):
    """Complete the observed Gram matrix; returns the final eigenfactor.

    The observed-entry objective sum((g - m)^2) is non-increasing across
    accepted iterations.  With ``step_backoff`` the step size is halved
    (up to 10 times) whenever a step would increase the objective; if no
    decreasing step is found the current iterate is returned.
    """
    cfg.validate()
    if omega.nnz == 0:
        raise ValueError("empty observation set")
    if stats is None:
        stats = SvpStats()

    n = omega.n
    k = min(cfg.l_hat, n)
    g = omega.values
    eta = cfg.eta

    U = np.zeros((n, 0))
    sigma = np.zeros(0)
    f_cur = float(np.sum(g * g))
    f_floor = 1e-14 * max(f_cur, 1.0)
    m_vals = np.zeros_like(g)
    stats.objective.append(f_cur)

    for t in range(1, cfg.max_iters + 1):
        if f_cur <= f_floor:
            stats.converged = True
            break
        resid = g - m_vals
        if not np.all(np.isfinite(resid)):
            raise NumericsError(f"non-finite SVP residual at iteration {t}")
        R = omega.csr_with_values(resid)
        S = (R + R.T) * 0.5

        accepted = False
        for halving in range(_MAX_HALVINGS + 1):
            U_new, sig_new, op = _project(U, sigma, S, eta, k, cfg)
            m_new = _reconstruct(U_new, sig_new, omega)
            f_new = float(np.sum((g - m_new) ** 2))
            if (not cfg.step_backoff) or f_new <= f_cur + _ACCEPT_SLACK * max(1.0, f_cur):
                accepted = True
                break
            eta *= 0.5
        if not accepted:
            log.warning("svp: no decreasing step after %d halvings; stopping", _MAX_HALVINGS)
            break

        U, sigma, m_vals = U_new, sig_new, m_new
        rel_change = abs(f_cur - f_new) / max(f_cur, 1e-30)
        f_cur = f_new
        stats.objective.append(f_cur)
        stats.matvecs.append(op.apply_count)
        stats.flops.append(op.apply_count * op.flops_per_apply)
        stats.iterations = t
        if rel_change < cfg.rel_tol:
            stats.converged = True
            break

    stats.eta_final = eta
    return Factor(U=U, sigma=sigma, l_hat=cfg.l_hat)


def embeddings_from_factor(factor):
    """Per-point embeddings Z = U sqrt(sigma), zero-padded to the target width.

    Returns an (n, l_hat) dense matrix whose row Gram reproduces
    U diag(sigma) U'.
    """
    n, r = factor.U.shape
    Z = np.zeros((n, factor.l_hat))
    if r:
        Z[:, :r] = factor.U * np.sqrt(factor.sigma)
    return Z
