"""Discrete triple-phase energy, residual, and Jacobian on P1 elements.

The flux is regularized through s = sqrt(|g|^2 + eps^2); reported energies
always use the unregularized integrand.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import quad_rule
from .modular import SampledPhase, luxemburg_norm


@dataclass(frozen=True)
class FluxParams:
    tf: object                 # PhaseFunction
    eps: float = 1e-8

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be nonnegative")
        if self.eps == 0 and self.tf.exp.p_minus < 2:
            raise ValueError("eps = 0 needs p_minus >= 2 "
                             "(flux derivative singular at zero gradient)")


@dataclass
class AssembledSystem:
    residual: np.ndarray       # over free nodes
    jacobian: sp.csr_matrix    # free x free
    energy: float


def flux(fp, x, g):
    """Pointwise flux (s^{p-2} + mu1 s^{q-2} + mu2 s^{r-2}) g."""
    x1, x2 = float(x[0]), float(x[1])
    tf = fp.tf
    g = np.asarray(g, dtype=float)
    s = np.sqrt(g @ g + fp.eps ** 2)
    if s == 0.0:
        return np.zeros(2)
    coef = (s ** (tf.exp.p(x1, x2) - 2)
            + tf.w.mu1(x1, x2) * s ** (tf.exp.q(x1, x2) - 2)
            + tf.w.mu2(x1, x2) * s ** (tf.exp.r(x1, x2) - 2))
    return float(coef) * g


class PhaseDiscretization:
    """Caches mesh geometry and field samples for repeated assembly."""

    def __init__(self, fp, mesh, degree=5):
        self.fp = fp
        self.mesh = mesh
        self.degree = degree
        bary, w = quad_rule(degree)
        self.bary = bary
        verts = mesh.vertices[mesh.triangles]
        qp = np.einsum("kj,tjd->tkd", bary, verts)       # (T, K, 2)
        self.qweights = mesh.areas[:, None] * w[None, :]  # (T, K)
        x1, x2 = qp[..., 0], qp[..., 1]
        tf = fp.tf
        self.p = tf.exp.p(x1, x2)
        self.q = tf.exp.q(x1, x2)
        self.r = tf.exp.r(x1, x2)
        self.m1 = tf.w.mu1(x1, x2)
        self.m2 = tf.w.mu2(x1, x2)
        self.qpoints = qp
        self.free = np.flatnonzero(~mesh.boundary_flags)
        self.free_pos = np.full(mesh.n_vertices, -1, dtype=np.int64)
        self.free_pos[self.free] = np.arange(len(self.free))

    # -- low-level pieces ------------------------------------------------

    def _gradients(self, u_vals):
        u = u_vals[self.mesh.triangles]
        return np.einsum("tj,tjd->td", u, self.mesh.basis_grads)

    def _s(self, g, eps):
        g2 = np.sum(g * g, axis=1)
        return np.sqrt(g2[:, None] + eps ** 2)           # (T, K) broadcast

    def energy(self, u_vals, eps=0.0):
        """Energy integral of the P1 state; reported energies use eps = 0,
        the regularized variant only steers the solver's line search."""
        g = self._gradients(u_vals)
        s = self._s(g, eps)
        dens = (s ** self.p / self.p
                + self.m1 * s ** self.q / self.q
                + self.m2 * s ** self.r / self.r)
        return float(np.sum(self.qweights * dens))

    @staticmethod
    def _pow(s, e):
        """s**e with the s = 0 limit taken termwise (needs e >= 0)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            v = s ** e
        return np.where(s > 0, v, np.where(e == 0, 1.0, 0.0))

    def _coef(self, s, eps):
        if eps > 0.0:
            return (s ** (self.p - 2) + self.m1 * s ** (self.q - 2)
                    + self.m2 * s ** (self.r - 2))
        return (self._pow(s, self.p - 2) + self.m1 * self._pow(s, self.q - 2)
                + self.m2 * self._pow(s, self.r - 2))

    def residual(self, u_vals, load=None, eps=None):
        """Galerkin residual over free nodes: flux tested against basis
        gradients, minus the load."""
        eps = self.fp.eps if eps is None else eps
        g = self._gradients(u_vals)
        s = self._s(g, eps)
        c = np.sum(self.qweights * self._coef(s, eps), axis=1)  # (T,)
        # flux . grad(phi_i) with per-triangle constant gradient
        gdphi = np.einsum("td,tjd->tj", g, self.mesh.basis_grads)
        contrib = c[:, None] * gdphi
        res = np.zeros(self.mesh.n_vertices)
        np.add.at(res, self.mesh.triangles.ravel(), contrib.ravel())
        res = res[self.free]
        if load is not None:
            res = res - load[self.free]
        return res

    def jacobian(self, u_vals, eps=None):
        """Exact derivative of the regularized residual, free nodes only."""
        eps = self.fp.eps if eps is None else eps
        g = self._gradients(u_vals)
        s = self._s(g, eps)
        if eps > 0.0:
            A = (s ** (self.p - 2) + self.m1 * s ** (self.q - 2)
                 + self.m2 * s ** (self.r - 2))
            B = ((self.p - 2) * s ** (self.p - 4)
                 + self.m1 * (self.q - 2) * s ** (self.q - 4)
                 + self.m2 * (self.r - 2) * s ** (self.r - 4))
        else:
            A = self._coef(s, eps)
            # the rank-one part carries a g g^T factor that vanishes with s,
            # so the s = 0 limit of each term is 0
            with np.errstate(divide="ignore", invalid="ignore"):
                B = ((self.p - 2) * s ** (self.p - 4)
                     + self.m1 * (self.q - 2) * s ** (self.q - 4)
                     + self.m2 * (self.r - 2) * s ** (self.r - 4))
            B = np.where(s > 0, B, 0.0)
        a_bar = np.sum(self.qweights * A, axis=1)        # (T,)
        b_bar = np.sum(self.qweights * B, axis=1)        # (T,)
        gdphi = np.einsum("td,tjd->tj", g, self.mesh.basis_grads)
        dots = np.einsum("tjd,tkd->tjk", self.mesh.basis_grads,
                         self.mesh.basis_grads)
        local = (a_bar[:, None, None] * dots
                 + b_bar[:, None, None] * np.einsum("tj,tk->tjk", gdphi, gdphi))
        rows = np.repeat(self.mesh.triangles, 3, axis=1).ravel()
        cols = np.tile(self.mesh.triangles, (1, 3)).ravel()
        fr, fc = self.free_pos[rows], self.free_pos[cols]
        keep = (fr >= 0) & (fc >= 0)
        n = len(self.free)
        J = sp.coo_matrix((local.ravel()[keep], (fr[keep], fc[keep])),
                          shape=(n, n)).tocsr()
        return J

    def load_vector(self, f_at_quad):
        """Nodal load from integrand values at quadrature points (T, K)."""
        contrib = np.einsum("tk,kj->tj", self.qweights * f_at_quad, self.bary)
        out = np.zeros(self.mesh.n_vertices)
        np.add.at(out, self.mesh.triangles.ravel(), contrib.ravel())
        return out

    def assemble(self, u_vals, load=None, eps=None):
        return AssembledSystem(self.residual(u_vals, load, eps),
                               self.jacobian(u_vals, eps),
                               self.energy(u_vals))


def energy(fp, u, degree=5):
    return PhaseDiscretization(fp, u.mesh, degree).energy(u.nodal_values)


def assemble(fp, u, load=None, degree=5):
    return PhaseDiscretization(fp, u.mesh, degree).assemble(u.nodal_values, load)


def check_gateaux(fp, u, h, delta, degree=5):
    """Central-difference discrepancy between the energy derivative and the
    assembled residual, paired against the direction h."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    disc = PhaseDiscretization(fp, u.mesh, degree)
    hv = h.nodal_values
    if np.any(hv[u.mesh.boundary_flags] != 0):
        raise ValueError("direction must vanish on boundary nodes")
    e_plus = disc.energy(u.nodal_values + delta * hv)
    e_minus = disc.energy(u.nodal_values - delta * hv)
    eps = 0.0 if fp.tf.exp.p_minus >= 2 else fp.eps
    res = disc.residual(u.nodal_values, eps=eps)
    pairing = float(res @ hv[disc.free])
    return abs((e_plus - e_minus) / (2.0 * delta) - pairing)


def check_monotone(fp, u, v, degree=5):
    """<A(u) - A(v), u - v> over free nodes."""
    disc = PhaseDiscretization(fp, u.mesh, degree)
    bnd = u.mesh.boundary_flags
    if not np.allclose(u.nodal_values[bnd], v.nodal_values[bnd]):
        raise ValueError("u and v must share boundary values")
    du = (u.nodal_values - v.nodal_values)[disc.free]
    ru = disc.residual(u.nodal_values)
    rv = disc.residual(v.nodal_values)
    return float((ru - rv) @ du)


def check_coercive(fp, u, scales, degree=5):
    """Rayleigh-type coercivity ratios <A(cu), cu> / ||grad(cu)||_T along
    increasing scales, with the norm-power lower bound per scale."""
    disc = PhaseDiscretization(fp, u.mesh, degree)
    if np.any(u.nodal_values[u.mesh.boundary_flags] != 0):
        raise ValueError("u must vanish on the boundary")
    if not np.any(u.nodal_values != 0):
        raise ValueError("u must be nonzero")
    quad = u.mesh.quadrature(degree)
    eps = 0.0 if fp.tf.exp.p_minus >= 2 else fp.eps
    g = disc._gradients(u.nodal_values)
    gnorm_tri = np.linalg.norm(g, axis=1)
    gvals = gnorm_tri[quad.tri_index]
    out = []
    for c in scales:
        cv = c * u.nodal_values
        res = disc.residual(cv, eps=eps)
        pairing = float(res @ cv[disc.free])
        nrm = luxemburg_norm(fp.tf, c * gvals, quad).luxemburg_norm
        ratio = pairing / nrm
        sp_ = SampledPhase(fp.tf, quad)
        bound = min(nrm ** (sp_.p_minus - 1.0), nrm ** (sp_.r_plus - 1.0))
        out.append((float(c), ratio, bound))
    return out
