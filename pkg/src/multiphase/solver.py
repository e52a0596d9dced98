"""Newton and fixed-point solvers for the discrete multi-phase Dirichlet
problem, plus the first Dirichlet eigenvalue of the m-Laplacian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import HypothesisReport
from .mesh import FeFunction
from .operator import FluxParams, PhaseDiscretization

UNIQUENESS_SEED = 0xC0FFEE


@dataclass
class SourceTerm:
    """Right-hand side f(x, t, z) with its declared growth constants.

    eval is vectorized: (x1, x2, t, z1, z2) -> array.  The growth
    constants are trusted as declared; nothing certifies the callback.
    """

    eval: object
    grad_dependent: bool = False
    constants: dict = field(default_factory=dict)

    def __call__(self, x1, x2, t, z1, z2):
        return np.asarray(self.eval(x1, x2, t, z1, z2), dtype=float)

    @staticmethod
    def of_x(fn, **constants):
        return SourceTerm(lambda x1, x2, t, z1, z2: fn(x1, x2),
                          grad_dependent=False, constants=constants)

    @staticmethod
    def zero():
        return SourceTerm.of_x(lambda x1, x2: np.zeros(np.shape(x1)))


@dataclass
class PhaseProblem:
    mesh: object
    fp: FluxParams
    source: SourceTerm
    dirichlet: np.ndarray      # full nodal array; only boundary entries used

    def __post_init__(self):
        self.dirichlet = np.asarray(self.dirichlet, dtype=float)
        if not np.all(np.isfinite(self.dirichlet)):
            raise ValueError("dirichlet values must be finite")


@dataclass
class SolveReport:
    solution: FeFunction
    iterations: int
    residual_history: list
    energy_history: list
    converged: bool
    eps_schedule: list


def _linear_solve(J, rhs, method="direct"):
    if method == "cg":
        d = J.diagonal()
        d = np.where(d > 0, d, 1.0)
        M = sp.diags(1.0 / d)
        x, info = spla.cg(J, rhs, M=M, rtol=1e-12, atol=0.0, maxiter=10000)
        if info != 0:
            raise np.linalg.LinAlgError(f"CG failed (info={info})")
        return x
    return spla.spsolve(J.tocsc(), rhs)


def _eps_schedule(fp):
    if fp.eps == 0.0:
        return [0.0]
    start = max(fp.eps, 1e-2)
    sched = []
    e = start
    while e > fp.eps * 1.0000001:
        sched.append(e)
        e *= 0.1
    sched.append(fp.eps)
    return sched


def solve_variational(prob, tol=1e-10, max_iter=100, degree=5,
                      linear_solver="direct", initial=None):
    """Damped Newton minimization of energy(u) - <load, u>.

    Requires a gradient-independent source; f is evaluated at (t, z) =
    (0, 0), i.e. as a pure function of x.
    """
    if prob.source.grad_dependent:
        raise ValueError("solve_variational needs a gradient-independent source")
    if tol <= 0:
        raise ValueError("tol must be positive")
    disc = PhaseDiscretization(prob.fp, prob.mesh, degree)
    qp = disc.qpoints
    z = np.zeros(qp.shape[:2])
    fvals = np.broadcast_to(prob.source(qp[..., 0], qp[..., 1], z, z, z), z.shape)
    load = disc.load_vector(fvals)
    return _newton(disc, prob, load, tol, max_iter, linear_solver, initial)


def _newton(disc, prob, load, tol, max_iter, linear_solver, initial=None):
    mesh = prob.mesh
    u = np.where(mesh.boundary_flags, prob.dirichlet, 0.0)
    if initial is not None:
        u = np.where(mesh.boundary_flags, prob.dirichlet,
                     np.asarray(initial, dtype=float))
    free = disc.free
    sched = _eps_schedule(prob.fp)
    eps_used = []
    res_hist, energy_hist = [], []
    final_eps = sched[-1]
    check_eps = 0.0 if prob.fp.tf.exp.p_minus >= 2 else final_eps

    def merit(vals):
        return disc.energy(vals) - float(load[free] @ vals[free])

    iters = 0
    for eps in sched:
        eps_used.append(eps)
        retries = 0
        stage_tol = tol if eps == final_eps else max(tol, 1e-8)
        stage_iters = 0

        def merit_eps(vals, e=eps):
            return disc.energy(vals, eps=e) - float(load[free] @ vals[free])

        while stage_iters < max_iter:
            res = disc.residual(u, load, eps=eps)
            rnorm = float(np.max(np.abs(res))) if len(res) else 0.0
            if eps == final_eps:
                res_hist.append(rnorm)
                energy_hist.append(merit(u))
            if rnorm <= stage_tol:
                break
            try:
                J = disc.jacobian(u, eps=eps)
                step = _linear_solve(J, -res, linear_solver)
                if not np.all(np.isfinite(step)):
                    raise np.linalg.LinAlgError("non-finite step")
            except Exception:
                retries += 1
                if retries > 5:
                    raise RuntimeError("singular Jacobian after 5 eps retries")
                eps = max(eps * 10.0, 1e-6) if eps > 0 else 1e-6
                eps_used.append(eps)
                continue
            m0 = merit_eps(u)
            slope = float(res @ step)   # negative for a descent direction
            t = 1.0
            trial = u.copy()
            for _ in range(30):
                trial[free] = u[free] + t * step
                if merit_eps(trial) <= m0 + 1e-4 * t * slope:
                    break
                t *= 0.5
            u = trial
            iters += 1
            stage_iters += 1
    res_final = disc.residual(u, load, eps=check_eps)
    rnorm = float(np.max(np.abs(res_final))) if len(res_final) else 0.0
    # the eps-regularized iteration may stop above the eps=0 residual; one
    # last Newton polish at the check eps closes the gap for p_minus >= 2
    polish = 0
    while rnorm > tol and polish < 10 and iters < max_iter:
        try:
            J = disc.jacobian(u, eps=max(check_eps, final_eps))
            step = _linear_solve(J, -res_final, linear_solver)
        except Exception:
            break
        u = u.copy()
        u[free] += step
        res_final = disc.residual(u, load, eps=check_eps)
        rnorm = float(np.max(np.abs(res_final)))
        polish += 1
        iters += 1
    res_hist.append(rnorm)
    energy_hist.append(merit(u))
    converged = rnorm <= tol
    return SolveReport(FeFunction(prob.mesh, u), iters, res_hist,
                       energy_hist, converged, eps_used)


def solve_convection(prob, tol=1e-10, max_iter_outer=60, degree=5,
                     linear_solver="direct", initial=None, inner_tol=None):
    """Outer fixed point freezing f(x, u_k, grad u_k) as a load, inner
    damped Newton on the frozen variational problem."""
    disc = PhaseDiscretization(prob.fp, prob.mesh, degree)
    mesh = prob.mesh
    u = np.where(mesh.boundary_flags, prob.dirichlet, 0.0)
    if initial is not None:
        u = np.where(mesh.boundary_flags, prob.dirichlet,
                     np.asarray(initial, dtype=float))
    inner_tol = tol if inner_tol is None else inner_tol
    qp = disc.qpoints
    bary = disc.bary
    hist, eps_used = [], []
    energy_hist = []
    grow = 0
    prev_dist = np.inf
    converged = False
    it = 0
    for it in range(1, max_iter_outer + 1):
        uf = FeFunction(mesh, u)
        tvals = np.einsum("tj,kj->tk", u[mesh.triangles], bary)
        g = uf.gradients()
        z1 = np.broadcast_to(g[:, 0:1], tvals.shape)
        z2 = np.broadcast_to(g[:, 1:2], tvals.shape)
        fvals = np.broadcast_to(
            prob.source(qp[..., 0], qp[..., 1], tvals, z1, z2), tvals.shape)
        load = disc.load_vector(fvals)
        inner = _newton(disc, prob, load, inner_tol, 100, linear_solver,
                        initial=u)
        eps_used = inner.eps_schedule
        dist = float(np.max(np.abs(inner.solution.nodal_values[disc.free]
                                   - u[disc.free])))
        u = inner.solution.nodal_values
        hist.append(dist)
        energy_hist.append(inner.energy_history[-1])
        if dist <= tol and inner.converged:
            converged = True
            break
        grow = grow + 1 if dist > prev_dist else 0
        prev_dist = dist
        if grow >= 5:
            break
    return SolveReport(FeFunction(mesh, u), it, hist, energy_hist,
                       converged, eps_used)


def weak_residual_sup(prob, u, degree=5):
    """A-posteriori weak-form residual of a state, eps = 0 when p- >= 2."""
    disc = PhaseDiscretization(prob.fp, prob.mesh, degree)
    qp = disc.qpoints
    tvals = np.einsum("tj,kj->tk", u.nodal_values[prob.mesh.triangles], disc.bary)
    g = u.gradients()
    z1 = np.broadcast_to(g[:, 0:1], tvals.shape)
    z2 = np.broadcast_to(g[:, 1:2], tvals.shape)
    fvals = np.broadcast_to(
        prob.source(qp[..., 0], qp[..., 1], tvals, z1, z2), tvals.shape)
    load = disc.load_vector(fvals)
    eps = 0.0 if prob.fp.tf.exp.p_minus >= 2 else prob.fp.eps
    res = disc.residual(u.nodal_values, load, eps=eps)
    return float(np.max(np.abs(res))) if len(res) else 0.0


def _p1_matrices(mesh):
    """Stiffness and consistent mass matrices over all nodes."""
    dots = np.einsum("tjd,tkd->tjk", mesh.basis_grads, mesh.basis_grads)
    K_loc = mesh.areas[:, None, None] * dots
    mass_ref = (np.ones((3, 3)) + np.eye(3)) / 12.0
    M_loc = mesh.areas[:, None, None] * mass_ref[None, :, :]
    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    n = mesh.n_vertices
    K = sp.coo_matrix((K_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    M = sp.coo_matrix((M_loc.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    return K, M


def first_eigenvalue(mesh, m, tol=1e-10, max_iter=2000, seed=7):
    """First Dirichlet eigenvalue of the m-Laplacian via the Rayleigh
    quotient; inverse iteration for m = 2, projected descent otherwise."""
    if m <= 1:
        raise ValueError("m must exceed 1")
    K, M = _p1_matrices(mesh)
    free = np.flatnonzero(~mesh.boundary_flags)
    Kf = K[np.ix_(free, free)].tocsc()
    Mf = M[np.ix_(free, free)].tocsr()
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=len(free))
    lu = spla.splu(Kf)
    lam = np.inf
    for _ in range(max_iter):
        y = lu.solve(Mf @ x)
        y /= np.sqrt(float(y @ (Mf @ y)))
        new_lam = float(y @ (Kf @ y))
        if abs(new_lam - lam) <= tol * abs(new_lam):
            lam, x = new_lam, y
            break
        lam, x = new_lam, y
    vals = np.zeros(mesh.n_vertices)
    vals[free] = x
    if abs(m - 2.0) < 1e-14:
        return lam, FeFunction(mesh, vals)
    return _rayleigh_descent(mesh, m, vals, free, tol)


def _m_power_quantities(disc, mesh, m, u_vals, degree=5):
    """N(u) = int |grad u|^m, D(u) = int |u|^m and their nodal gradients."""
    g = np.einsum("tj,tjd->td", u_vals[mesh.triangles], mesh.basis_grads)
    s = np.linalg.norm(g, axis=1)
    w = disc.qweights
    N = float(np.sum(w * (s ** m)[:, None]))
    with np.errstate(divide="ignore", invalid="ignore"):
        coef = np.where(s > 0, s ** (m - 2.0), 0.0)
    gdphi = np.einsum("td,tjd->tj", g, mesh.basis_grads)
    gN = np.zeros(mesh.n_vertices)
    np.add.at(gN, mesh.triangles.ravel(),
              (m * np.sum(w, axis=1)[:, None] * coef[:, None] * gdphi).ravel())
    tvals = np.einsum("tj,kj->tk", u_vals[mesh.triangles], disc.bary)
    D = float(np.sum(w * np.abs(tvals) ** m))
    dens = m * np.abs(tvals) ** (m - 2.0) * tvals
    dens = np.where(np.isfinite(dens), dens, 0.0)
    gD = np.zeros(mesh.n_vertices)
    np.add.at(gD, mesh.triangles.ravel(),
              np.einsum("tk,kj->tj", w * dens, disc.bary).ravel())
    return N, D, gN, gD


def _rayleigh_descent(mesh, m, init_vals, free, tol):
    from .fields import ExponentTriple, WeightPair
    from .modular import PhaseFunction

    fp = FluxParams(PhaseFunction(ExponentTriple.constants(m, m, m),
                                  WeightPair.constants(0.0, 0.0)), eps=1e-10)
    disc = PhaseDiscretization(fp, mesh)
    u = init_vals.copy()
    N, D, gN, gD = _m_power_quantities(disc, mesh, m, u)
    u /= D ** (1.0 / m)
    quotient = np.inf
    step = 1.0
    for _ in range(5000):
        N, D, gN, gD = _m_power_quantities(disc, mesh, m, u)
        quot = N / D
        if quotient - quot <= tol * abs(quot) and quotient != np.inf:
            quotient = min(quotient, quot)
            break
        quotient = quot
        # gradient of the quotient, restricted to free nodes
        grad = (gN - quot * gD) / D
        grad[mesh.boundary_flags] = 0.0
        gn = float(np.max(np.abs(grad)))
        if gn == 0:
            break
        accepted = False
        for _ in range(40):
            trial = u - step * grad / gn
            tN, tD, _, _ = _m_power_quantities(disc, mesh, m, trial)
            if tD > 0 and tN / tD < quot:
                u = trial / tD ** (1.0 / m)
                step *= 1.5
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
    N, D, _, _ = _m_power_quantities(disc, mesh, m, u)
    return N / D, FeFunction(mesh, u)


def check_h2(src, lambda_p_minus):
    """Existence margin 1 - k3 - k4 / lambda_{1,p-}."""
    if lambda_p_minus <= 0:
        raise ValueError("lambda must be positive")
    k3 = float(src.constants.get("k3", 0.0))
    k4 = float(src.constants.get("k4", 0.0))
    margin = 1.0 - k3 - k4 / lambda_p_minus
    return HypothesisReport("H2", margin > 0, (), margin)


def check_h3(src, lambda_2, threshold=1.0):
    """Uniqueness margin threshold - (k5/lambda + k6/sqrt(lambda))."""
    if lambda_2 <= 0:
        raise ValueError("lambda must be positive")
    k5 = float(src.constants.get("k5", 0.0))
    k6 = float(src.constants.get("k6", 0.0))
    margin = threshold - (k5 / lambda_2 + k6 / np.sqrt(lambda_2))
    return HypothesisReport("H3", margin > 0, (), margin)


def verify_uniqueness_empirical(prob, n_starts, tol=1e-10, **kwargs):
    """Max pairwise sup distance among multi-start fixed-point solutions."""
    if n_starts < 2:
        raise ValueError("need at least 2 starts")
    rng = np.random.default_rng(UNIQUENESS_SEED)
    free = np.flatnonzero(~prob.mesh.boundary_flags)
    sols = []
    for _ in range(n_starts):
        init = np.zeros(prob.mesh.n_vertices)
        init[free] = rng.uniform(-1, 1, size=len(free)) * prob.mesh.h_max
        rep = solve_convection(prob, tol=tol, initial=init, **kwargs)
        if rep.converged:
            sols.append(rep.solution.nodal_values[free])
    if len(sols) < 2:
        raise RuntimeError("insufficient converged solves")
    dist = 0.0
    for i in range(len(sols)):
        for j in range(i + 1, len(sols)):
            dist = max(dist, float(np.max(np.abs(sols[i] - sols[j]))))
    return dist
