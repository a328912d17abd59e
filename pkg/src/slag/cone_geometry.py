"""Cone metrics of angle 4 pi and their smoothings.

The family (4 r^2 + t^2)(dr^2 + r^2 dtheta^2) on the unit disk is the
pullback of (1 + t^2 / (4 R)) (dR^2 + R^2 dPhi^2) under R = r^2, Phi = 2 theta;
at t = 0 it is a cone of total angle 4 pi.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal


class ResolutionError(RuntimeError):
    pass


@dataclass
class RadialMetric:
    """rho(r) (dr^2 + r^2 dtheta^2) on the disk of radius R."""

    rho: Callable
    R: float = 1.0
    t: float = 0.0
    name: str = "cone-family"

    def quasi_isometry_ratio(self, r):
        r = np.asarray(r, dtype=float)
        return self.rho(r) / (4 * r**2)


def cone_metric_family(t):
    if t < 0:
        raise ValueError("t must be nonnegative")
    return RadialMetric(lambda r, t=t: 4 * np.asarray(r, dtype=float) ** 2 + t * t, 1.0, t)


def flat_disk():
    return RadialMetric(lambda r: np.ones_like(np.asarray(r, dtype=float)), 1.0, np.nan, "flat")


def scaled_metric(metric, c2):
    return RadialMetric(lambda r, m=metric: c2 * m.rho(r), metric.R, metric.t, metric.name + "-scaled")


def pullback_coefficients(rt, t):
    """Radial and angular coefficients of the pullback of (1 + t^2/(4R))(dR^2 + R^2 dPhi^2)
    under R = rt^2, Phi = 2 theta, divided by (1, rt^2)."""
    rt = np.asarray(rt, dtype=float)
    Rr = rt**2
    conf = 1 + t * t / (4 * Rr)
    dR = 2 * rt          # dR / d rt
    dPhi = 2.0           # dPhi / d theta
    return conf * dR**2, conf * Rr**2 * dPhi**2 / rt**2


def _tridiagonal(metric, N, m=0):
    """Symmetric tridiagonal form of -(1/r)(r u')' + m^2 u / r^2 = lam rho u, u(R) = 0.

    Cell-centred grid r_i = (i + 1/2) h; the flux through r = 0 vanishes and
    the rim condition enters through a half-cell ghost value.
    """
    R = metric.R
    h = R / N
    r = (np.arange(N) + 0.5) * h
    rp = r + h / 2
    rm = r - h / 2
    diag = (rp + rm) / h**2 + m * m / r
    diag[-1] += rp[-1] / h**2          # ghost u_N = -u_{N-1}
    off = -rp[:-1] / h**2
    mass = r * metric.rho(r)
    if np.any(mass <= 0):
        raise ValueError("conformal factor must be positive")
    s = 1 / np.sqrt(mass)
    return diag * s * s, off * s[:-1] * s[1:]


def radial_eigenvalues(metric, N=400, m=0, k=1):
    d, e = _tridiagonal(metric, N, m)
    # bisect to the last bit: the default stopping rule is absolute in ||T||,
    # which is O(N^2 / rho(0)) here and swamps the low eigenvalues
    return eigh_tridiagonal(d, e, select="i", select_range=(0, k - 1), eigvals_only=True,
                            tol=np.finfo(float).tiny)


@dataclass
class EigenResult:
    lam: float
    lam_coarse: float
    lam_fine: float
    rel_disagreement: float


def dtheta_eigenvalue(metric, N=400, m=0, tol=0.01):
    """First Dirichlet eigenvalue in angular mode m with a two-resolution Richardson value."""
    l1 = float(radial_eigenvalues(metric, N, m)[0])
    l2 = float(radial_eigenvalues(metric, 2 * N, m)[0])
    dis = abs(l1 - l2) / abs(l2)
    if dis > tol:
        raise ResolutionError(f"resolutions disagree by {dis:.2%}")
    return EigenResult((4 * l2 - l1) / 3, l1, l2, dis)


def dense_radial_eigenvalue(metric, N, m=0):
    """Oracle: full symmetric eigensolve of the same discretisation."""
    d, e = _tridiagonal(metric, N, m)
    A = np.diag(d) + np.diag(e, 1) + np.diag(e, -1)
    return float(np.linalg.eigvalsh(A)[0])


def eigenvalue_sweep(ts=(0.4, 0.2, 0.1, 0.05), N=400):
    lam0 = dtheta_eigenvalue(cone_metric_family(0.0), N)
    rows = []
    for t in ts:
        lt = dtheta_eigenvalue(cone_metric_family(t), N)
        rows.append((t, lt.lam, abs(lt.lam - lam0.lam)))
    return lam0, rows


# ------------------------------------------------------ curvature and sizes

def curve_points(t, s):
    """(z, w) = (s^2 / t^2, s) in real coordinates (x1, y1, x2, y2), with derivatives."""
    s = np.asarray(s, dtype=float)
    zero = np.zeros_like(s)
    X = np.stack([s**2 / t**2, zero, s, zero], -1)
    d1 = np.stack([2 * s / t**2, zero, np.ones_like(s), zero], -1)
    d2 = np.stack([np.full_like(s, 2 / t**2), zero, zero, zero], -1)
    return X, d1, d2


def second_fundamental_form_curve(t, s):
    """Curvature |K| of s -> (s^2/t^2, s) in flat C^2 (also the branch-point value 2/t^2)."""
    if t <= 0:
        raise ValueError("t must be positive")
    _, d1, d2 = curve_points(t, s)
    n1 = np.sum(d1 * d1, -1)
    cross = n1 * np.sum(d2 * d2, -1) - np.sum(d1 * d2, -1) ** 2
    return np.sqrt(np.maximum(cross, 0)) / n1**1.5


def curvature_bound_sweep(ts=(0.5, 0.25), s=None):
    """max over s of (r(s) + t^2) |K|(s) with r = |z| = s^2/t^2."""
    s = np.linspace(0, 1, 2001) if s is None else s
    out = {}
    for t in ts:
        K = second_fundamental_form_curve(t, s)
        out[t] = float(np.max((s**2 / t**2 + t**2) * K))
    return out


def injectivity_and_weinstein(tau, C=1.0):
    """(pi / (C + tau), C / tau)."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return np.pi / (C + tau), C / tau


def model_weinstein_size(t, C=1.0):
    tau = float(second_fundamental_form_curve(t, np.array([0.0]))[0])
    return injectivity_and_weinstein(tau, C)[1]
