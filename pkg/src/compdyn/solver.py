"""Equality-constrained quadratic solves and Newton utilities.

The production path factors the bordered (KKT) matrix

    [[Q, C^T],
     [C,  0 ]]

with SuperLU.  ``null_space_solve`` eliminates the constraint with a QR basis
of ``ker(C)`` and exists to cross-check the bordered solve.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as spla

log = logging.getLogger(__name__)


class KKTError(RuntimeError):
    pass


@dataclass
class ConstraintMatrix:
    """Constraint rows ``C = J^T M D`` (shape ``m x dn``) and the last multipliers."""

    C: np.ndarray
    lam: np.ndarray | None = None

    @property
    def shape(self):
        return self.C.shape

    def residual(self, uc):
        """``||C uc||_inf``."""
        if self.C.shape[0] == 0:
            return 0.0
        return float(np.abs(self.C @ uc).max())


@dataclass
class KKTSystem:
    Q: object  # sparse or dense (dn x dn), symmetric
    C: np.ndarray  # (m x dn)
    rhs: np.ndarray
    reg: float | None = None


def _as_sparse(Q):
    return Q.tocsc() if sparse.issparse(Q) else sparse.csc_matrix(np.asarray(Q))


def _inf_norm(Q):
    if sparse.issparse(Q):
        return float(abs(Q).sum(axis=1).max())
    return float(np.abs(Q).sum(axis=1).max())


class KKTFactor:
    """Reusable factorization of a bordered KKT matrix.

    Identically zero constraint rows carry no information and are dropped
    (their multipliers are reported as 0).  If SuperLU reports a singular
    matrix, or the solve residual is poor, the factorization is retried once
    with ``-reg * I`` in the (2,2) block.
    """

    def __init__(self, Q, C, reg=None):
        Q = _as_sparse(Q)
        C = np.atleast_2d(np.asarray(C, dtype=float)).reshape(-1, Q.shape[0])
        self.dn = Q.shape[0]
        self.m = C.shape[0]
        self.active = np.flatnonzero(np.any(C != 0, axis=1))
        self.Q = Q
        self.C = C
        self.Ca = C[self.active]
        self.qnorm = _inf_norm(Q)
        self.regularized = False
        self._lu = None
        if reg is not None:
            self._factor(reg)
            self.regularized = True
            return
        try:
            self._factor(0.0)
            self._probe()
        except (RuntimeError, KKTError):
            eps = 1e-10 * max(self.qnorm, 1.0)
            log.warning("KKT factorization failed; retrying with regularization %.3g", eps)
            try:
                self._factor(eps)
                self._probe()
            except (RuntimeError, KKTError) as exc:
                raise KKTError("rank-deficient rig Jacobian") from exc
            self.regularized = True

    def _factor(self, reg):
        k = len(self.active)
        if k == 0:
            K = self.Q
        else:
            Cs = sparse.csr_matrix(self.Ca)
            B = -reg * sparse.identity(k, format="csc") if reg else None
            K = sparse.bmat([[self.Q, Cs.T], [Cs, B]], format="csc")
        self._reg = reg
        self._lu = spla.splu(K)

    def _probe(self):
        # SuperLU does not always flag near-singular matrices; check a solve
        rng = np.random.default_rng(0)
        b = rng.standard_normal(self.dn)
        x, lam = self._solve_raw(b)
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(lam))):
            raise KKTError("non-finite KKT solution")
        r1, r2 = self._residuals(x, lam, b)
        scale = 1.0 + np.abs(b).max() + self.qnorm * np.abs(x).max()
        if r1 > 1e-6 * scale or r2 > 1e-6 * scale:
            raise KKTError("inaccurate KKT factorization")

    def _solve_raw(self, rhs):
        k = len(self.active)
        full = np.concatenate([rhs, np.zeros(k)])
        sol = self._lu.solve(full)
        # one step of iterative refinement
        res = full - self._apply(sol)
        sol = sol + self._lu.solve(res)
        x = sol[: self.dn]
        lam = np.zeros(self.m)
        lam[self.active] = sol[self.dn:]
        return x, lam

    def _apply(self, sol):
        x, la = sol[: self.dn], sol[self.dn:]
        top = self.Q @ x
        if len(la):
            top = top + self.Ca.T @ la
            bot = self.Ca @ x - self._reg * la
            return np.concatenate([top, bot])
        return top

    def _residuals(self, x, lam, rhs):
        r1 = np.abs(self.Q @ x + self.C.T @ lam - rhs).max()
        r2 = np.abs(self.C @ x).max() if self.m else 0.0
        return float(r1), float(r2)

    def solve(self, rhs):
        """Return ``(x, lam)`` with ``Q x + C^T lam = rhs`` and ``C x = 0``."""
        return self._solve_raw(np.asarray(rhs, dtype=float))


def solve_kkt(sys):
    """Solve a :class:`KKTSystem`; returns ``(x, lam)``."""
    return KKTFactor(sys.Q, sys.C, reg=sys.reg).solve(sys.rhs)


def null_space_basis(C, tol=None):
    """Orthonormal basis ``N`` of ``ker(C)`` from a pivoted QR of ``C^T``."""
    C = np.atleast_2d(np.asarray(C, dtype=float))
    dn = C.shape[1]
    if C.shape[0] == 0 or not np.any(C):
        return np.eye(dn)
    Qf, R, _ = scipy.linalg.qr(C.T, mode="full", pivoting=True)
    d = np.abs(np.diag(R))
    if tol is None:
        tol = max(C.shape) * np.finfo(float).eps * d[0]
    rank = int(np.sum(d > tol))
    return Qf[:, rank:]


def null_space_solve(sys):
    """Constraint elimination: ``x = N y`` with ``(N^T Q N) y = N^T rhs``.

    Dense; intended as an oracle for :func:`solve_kkt` on small systems.
    """
    N = null_space_basis(sys.C)
    Q = sys.Q.toarray() if sparse.issparse(sys.Q) else np.asarray(sys.Q, dtype=float)
    A = N.T @ Q @ N
    y = scipy.linalg.solve(A, N.T @ sys.rhs, assume_a="sym")
    return N @ y


def psd_project(blocks):
    """Clamp eigenvalues of each symmetric block to ``>= 1e-10 * max(|eig|, 1)``.

    ``blocks`` has shape ``(k, s, s)``.  Returns a new array.
    """
    blocks = np.asarray(blocks, dtype=float)
    sym = 0.5 * (blocks + blocks.transpose(0, 2, 1))
    w, U = np.linalg.eigh(sym)
    floor = 1e-10 * np.maximum(np.abs(w).max(axis=1), 1.0)
    needs = (w < floor[:, None]).any(axis=1)
    out = sym.copy()
    if needs.any():
        wc = np.maximum(w[needs], floor[needs, None])
        Un = U[needs]
        out[needs] = np.einsum("kij,kj,klj->kil", Un, wc, Un)
    return out


@dataclass
class LineSearchResult:
    step: float
    ok: bool
    value: float
    trials: list = field(default_factory=list)

    @property
    def all_infinite(self):
        return bool(self.trials) and not any(np.isfinite(v) for v in self.trials)


def armijo_search(E, x, dx, gdx, c1=1e-4, shrink=0.5, max_backtracks=30, E0=None):
    """Backtracking line search for sufficient decrease.

    Tries ``s = 1, shrink, shrink**2, ...`` (``max_backtracks`` trials) and
    returns the first step with ``E(x + s dx) <= E(x) + c1 s gdx``.  Non-finite
    energies count as rejections.  On failure returns step 0 with ``ok=False``.
    """
    f0 = E(x) if E0 is None else E0
    trials = []
    s = 1.0
    for _ in range(max_backtracks):
        f = E(x + s * dx)
        trials.append(f)
        if np.isfinite(f) and f <= f0 + c1 * s * gdx:
            return LineSearchResult(s, True, f, trials)
        s *= shrink
    return LineSearchResult(0.0, False, f0, trials)
