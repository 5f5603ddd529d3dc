"""Finite-difference and constraint audits shared by the CLI and the tests."""

from dataclasses import dataclass

import numpy as np


@dataclass
class GradientReport:
    gradient_error: float
    hessian_error: float
    worst_gradient_dof: int
    worst_state: int

    def passed(self, grad_tol=1e-5, hess_tol=1e-4):
        return self.gradient_error < grad_tol and self.hessian_error < hess_tol


def random_states(mesh, count=10, scale=1e-2, rng=None):
    """Displacement fields with ``||u||_inf <= scale * bbox diagonal``."""
    rng = np.random.default_rng(rng)
    amp = scale * mesh.bbox_diagonal
    return [amp * rng.uniform(-1.0, 1.0, mesh.dim * mesh.n) for _ in range(count)]


def check_gradients(model, states, n_dofs=100, rng=None, gradient=None):
    """Central-difference audit of ``model.gradient`` and ``model.hessian``.

    For each state ``u``: up to ``n_dofs`` gradient entries are compared with
    ``(E(u + h e_i) - E(u - h e_i)) / 2h`` and one Hessian-vector product
    ``H v`` with ``(g(u + h v) - g(u - h v)) / 2h`` for a random unit ``v``,
    where ``h = 1e-5 * max(1, ||u||_inf)``.  Errors are relative to the
    largest magnitude of the analytic quantity.  ``gradient`` overrides the
    analytic gradient (used to inject faults).
    """
    rng = np.random.default_rng(rng)
    grad = model.gradient if gradient is None else gradient
    g_err = h_err = 0.0
    worst_dof = worst_state = -1
    for s, u in enumerate(states):
        u = np.asarray(u, dtype=float)
        h = 1e-5 * max(1.0, np.abs(u).max())
        g = grad(u)
        dofs = rng.choice(len(u), size=min(n_dofs, len(u)), replace=False)
        fd = np.empty(len(dofs))
        for k, i in enumerate(dofs):
            e = np.zeros_like(u)
            e[i] = h
            fd[k] = (model.energy(u + e) - model.energy(u - e)) / (2 * h)
        diff = np.abs(fd - g[dofs])
        err = diff.max() / max(np.abs(g[dofs]).max(), 1e-12)
        if err > g_err:
            g_err, worst_dof, worst_state = err, int(dofs[diff.argmax()]), s
        v = rng.standard_normal(len(u))
        v /= np.linalg.norm(v)
        Hv = model.hessian(u) @ v
        fd_Hv = (grad(u + h * v) - grad(u - h * v)) / (2 * h)
        h_err = max(h_err, np.abs(fd_Hv - Hv).max() / max(np.abs(Hv).max(), 1e-12))
    return GradientReport(float(g_err), float(h_err), worst_dof, worst_state)
