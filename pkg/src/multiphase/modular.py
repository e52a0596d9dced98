"""The three-term generalized N-function, its modular, and Luxemburg norms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import ExponentTriple, WeightPair

DEFAULT_REL_TOL = 1e-10
_MAX_DOUBLINGS = 200


class NormBracketError(RuntimeError):
    """Raised when the Luxemburg bracket cannot be established."""


@dataclass(frozen=True)
class PhaseFunction:
    """t^p(x) + mu1(x) t^q(x) + mu2(x) t^r(x)."""

    exp: ExponentTriple
    w: WeightPair


@dataclass(frozen=True)
class ModularReport:
    modular_value: float
    luxemburg_norm: float
    bracket: tuple
    iterations: int


@dataclass(frozen=True)
class PropertyReport:
    """Outcome of an inequality check with its measured slacks."""

    name: str
    passed: bool
    slacks: dict

    @property
    def min_slack(self):
        return min(self.slacks.values())


class SampledPhase:
    """Phase function evaluated once at a fixed quadrature point set.

    Everything downstream (modular, Luxemburg bisection, seminorms)
    reduces to vectorized power sums over these cached arrays.
    """

    def __init__(self, tf, quad):
        x1, x2 = quad.points[:, 0], quad.points[:, 1]
        self.p = tf.exp.p(x1, x2)
        self.q = tf.exp.q(x1, x2)
        self.r = tf.exp.r(x1, x2)
        self.m1 = tf.w.mu1(x1, x2)
        self.m2 = tf.w.mu2(x1, x2)
        self.weights = quad.weights
        self.quad = quad
        # extremes over the actual quadrature points, merged with the cached
        # sampled extremes so the power bounds hold exactly for the sums
        self.p_minus = min(float(self.p.min()), tf.exp.p_minus)
        self.r_plus = max(float(self.r.max()), tf.exp.r_plus)

    def phi(self, t):
        """Pointwise N-function values for |u| samples t (t >= 0)."""
        return t ** self.p + self.m1 * t ** self.q + self.m2 * t ** self.r

    def modular(self, u_abs):
        vals = self.phi(u_abs)
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite integrand in modular")
        return float(np.dot(self.weights, vals))


def _as_values(u, quad):
    if hasattr(u, "at_quad"):
        return np.asarray(u.at_quad(quad), dtype=float)
    if callable(u):
        return np.asarray(u(quad.points[:, 0], quad.points[:, 1]), dtype=float)
    vals = np.asarray(u, dtype=float)
    if vals.shape != quad.weights.shape:
        raise ValueError("sampled values must align with quadrature points")
    return vals


def t_value(tf, x, t):
    """The N-function at a single point: t^p + mu1 t^q + mu2 t^r."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    x1, x2 = float(x[0]), float(x[1])
    return float(t ** tf.exp.p(x1, x2) + tf.w.mu1(x1, x2) * t ** tf.exp.q(x1, x2)
                 + tf.w.mu2(x1, x2) * t ** tf.exp.r(x1, x2))


def modular(tf, u, quad):
    """Quadrature approximation of the modular integral of |u|."""
    sp = SampledPhase(tf, quad)
    return sp.modular(np.abs(_as_values(u, quad)))


def _luxemburg_bisect(rho_of_alpha, R, p_minus, r_plus, rel_tol):
    """Bisection for the alpha with rho(u/alpha) = 1, bracketed by the
    norm-modular power bounds."""
    lo = min(R ** (1.0 / p_minus), R ** (1.0 / r_plus))
    hi = max(R ** (1.0 / p_minus), R ** (1.0 / r_plus))
    lo, hi = 0.999999 * lo, 1.000001 * hi
    n = 0
    while rho_of_alpha(lo) < 1.0:
        lo *= 0.5
        n += 1
        if n > _MAX_DOUBLINGS:
            raise NormBracketError("norm bracket failure (lower)")
    while rho_of_alpha(hi) > 1.0:
        hi *= 2.0
        n += 1
        if n > _MAX_DOUBLINGS:
            raise NormBracketError("norm bracket failure (upper)")
    bracket = (lo, hi)
    iters = 0
    alpha = 0.5 * (lo + hi)
    while True:
        alpha = 0.5 * (lo + hi)
        g = rho_of_alpha(alpha) - 1.0
        iters += 1
        if abs(g) <= rel_tol or (hi - lo) <= 1e-16 * alpha or iters > 400:
            break
        if g > 0:
            lo = alpha
        else:
            hi = alpha
    return alpha, bracket, iters


def luxemburg_norm(tf, u, quad, rel_tol=DEFAULT_REL_TOL):
    """Luxemburg norm inf{alpha > 0 : rho(u/alpha) <= 1} with its report."""
    if rel_tol <= 0:
        raise ValueError("rel_tol must be positive")
    sp = SampledPhase(tf, quad)
    vals = np.abs(_as_values(u, quad))
    R = sp.modular(vals)
    if R == 0.0:
        return ModularReport(0.0, 0.0, (0.0, 0.0), 0)
    alpha, bracket, iters = _luxemburg_bisect(
        lambda a: sp.modular(vals / a), R, sp.p_minus, sp.r_plus, rel_tol)
    return ModularReport(R, alpha, bracket, iters)


def weighted_seminorm(exponent, weight, u, quad, rel_tol=DEFAULT_REL_TOL):
    """Luxemburg-style seminorm for the single-term weighted modular."""
    x1, x2 = quad.points[:, 0], quad.points[:, 1]
    e = exponent(x1, x2)
    wv = weight(x1, x2)
    if np.any(wv < 0):
        raise ValueError("weight must be nonnegative")
    vals = np.abs(_as_values(u, quad))

    def rho(alpha):
        return float(np.dot(quad.weights, wv * (vals / alpha) ** e))

    R = rho(1.0)
    if R == 0.0:
        return 0.0
    alpha, _, _ = _luxemburg_bisect(rho, R, float(e.min()), float(e.max()), rel_tol)
    return alpha


def check_norm_modular_relations(tf, u, quad, rel_tol=DEFAULT_REL_TOL):
    """Unit-ball equivalences and the two-sided power bounds between the
    Luxemburg norm and the modular."""
    sp = SampledPhase(tf, quad)
    vals = np.abs(_as_values(u, quad))
    rho = sp.modular(vals)
    rep = luxemburg_norm(tf, u, quad, rel_tol)
    nrm = rep.luxemburg_norm
    pm, rp = sp.p_minus, sp.r_plus
    slacks = {}
    if rho == 0.0:
        slacks["zero_norm"] = 0.0 if nrm == 0.0 else -abs(nrm)
        return PropertyReport("norm_modular", slacks["zero_norm"] >= 0, slacks)
    # unit-sphere identity: rho(u/norm) = 1
    unit = sp.modular(vals / nrm)
    slacks["unit_sphere"] = rel_tol - abs(unit - 1.0)
    tol = 2.0 * rel_tol
    # unit-ball equivalences (both directions, three regimes)
    if nrm < 1.0 - tol:
        slacks["ball_lt"] = 1.0 - rho
        slacks["lower_power"] = rho - nrm ** rp
        slacks["upper_power"] = nrm ** pm - rho
    elif nrm > 1.0 + tol:
        slacks["ball_gt"] = rho - 1.0
        slacks["lower_power"] = rho - nrm ** pm
        slacks["upper_power"] = nrm ** rp - rho
    else:
        slacks["ball_eq"] = tol * max(rho, 1.0) - abs(rho - 1.0)
    passed = all(v >= -1e-8 for v in slacks.values())
    return PropertyReport("norm_modular", passed, slacks)


def _sample_fields(tf, xs):
    x1, x2 = xs[:, 0], xs[:, 1]
    return (tf.exp.p(x1, x2), tf.exp.q(x1, x2), tf.exp.r(x1, x2),
            tf.w.mu1(x1, x2), tf.w.mu2(x1, x2))


def _phi(p, q, r, m1, m2, t):
    return t ** p + m1 * t ** q + m2 * t ** r


def check_delta2(tf, xs, ts):
    """Doubling bound phi(x, 2t) <= 2^{r+} phi(x, t) at sampled (x, t)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ts = np.asarray(ts, dtype=float)
    p, q, r, m1, m2 = _sample_fields(tf, xs)
    c_delta = 2.0 ** max(float(r.max()), tf.exp.r_plus)
    ratio = _phi(p, q, r, m1, m2, 2.0 * ts) / _phi(p, q, r, m1, m2, ts)
    worst = float(ratio.max())
    return PropertyReport("delta2", worst <= c_delta * (1 + 1e-12),
                          {"c_delta_minus_max_ratio": c_delta - worst})


def check_subadditivity(tf, xs, ts, ss):
    """phi(x, t+s) <= C_Delta (phi(x,t) + phi(x,s)) with C_Delta = 2^{r+}."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ts, ss = np.asarray(ts, dtype=float), np.asarray(ss, dtype=float)
    p, q, r, m1, m2 = _sample_fields(tf, xs)
    c_delta = 2.0 ** max(float(r.max()), tf.exp.r_plus)
    denom = _phi(p, q, r, m1, m2, ts) + _phi(p, q, r, m1, m2, ss)
    num = _phi(p, q, r, m1, m2, ts + ss)
    mask = denom > 0
    ratio = np.where(mask, num / np.where(mask, denom, 1.0), 0.0)
    worst = float(ratio.max())
    return PropertyReport("subadditivity", worst <= c_delta * (1 + 1e-12),
                          {"c_delta_minus_max_ratio": c_delta - worst})


def check_uniform_convexity(tf, eps, xs, ts, ss):
    """Empirical convexity modulus over samples with |t-s| > eps max(t,s)."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ts, ss = np.asarray(ts, dtype=float), np.asarray(ss, dtype=float)
    keep = np.abs(ts - ss) > eps * np.maximum(ts, ss)
    if not np.any(keep):
        raise ValueError("no samples survive the |t-s| > eps max(t,s) filter")
    xs, ts, ss = xs[keep], ts[keep], ss[keep]
    p, q, r, m1, m2 = _sample_fields(tf, xs)
    mid = _phi(p, q, r, m1, m2, 0.5 * (ts + ss))
    avg = 0.5 * (_phi(p, q, r, m1, m2, ts) + _phi(p, q, r, m1, m2, ss))
    eta = float(np.min(1.0 - mid / avg))
    return PropertyReport("uniform_convexity", eta > 0, {"eta_hat": eta})


def check_seminorm_domination(tf, u, quad, rel_tol=DEFAULT_REL_TOL):
    """Weighted single-term seminorms never exceed the full Luxemburg norm."""
    nrm = luxemburg_norm(tf, u, quad, rel_tol).luxemburg_norm
    s1 = weighted_seminorm(tf.exp.q, tf.w.mu1, u, quad, rel_tol)
    s2 = weighted_seminorm(tf.exp.r, tf.w.mu2, u, quad, rel_tol)
    slacks = {"mu1_term": nrm - s1 + 1e-8, "mu2_term": nrm - s2 + 1e-8}
    return PropertyReport("seminorm_domination",
                          all(v >= 0 for v in slacks.values()), slacks)
