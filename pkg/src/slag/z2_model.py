"""Two-valued fields on the annulus model and their Poisson problems.

A twisted field is stored by half-integer angular modes

    f(r, theta) = sum_{k >= 0} Re( f_k(r) exp(i (k + 1/2) theta) ),

which changes sign under theta -> theta + 2 pi.  Negative frequencies are
folded into k >= 0 by conjugation.  Radial problems are solved in
s = log r, where the mode equation becomes f'' - nu^2 f = r^2 rhs.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .asymptotics import (ComplexField, FitError, Term, leading_exponent,
                          mellin_transform, polyhom_fit)
from .flat_cy import Immersion, make_c2_hk_structure, pullback_forms


class ArgumentError(ValueError):
    pass


class NondegeneracyError(ValueError):
    pass


# --------------------------------------------------------- radial grid

def radial_grid(R=1.0, ratio=1.05, r_min_frac=1e-4):
    n = int(np.ceil(np.log(1.0 / r_min_frac) / np.log(ratio))) + 1
    s = np.log(R) - np.log(ratio) * np.arange(n)[::-1]
    return np.exp(s)


def fornberg_weights(x0, x, m):
    """Finite-difference weights for the m-th derivative at x0 on nodes x."""
    n = len(x)
    c = np.zeros((n, m + 1))
    c1, c4 = 1.0, x[0] - x0
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, m)
        c2, c5, c4 = 1.0, c4, x[i] - x0
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, m]


def fd_matrix(s, m, order=8):
    """Dense derivative matrix on a grid; centred stencils inside, one-sided at the ends."""
    N = len(s)
    half = order // 2
    D = np.zeros((N, N))
    for i in range(N):
        if half <= i < N - half:
            idx = np.arange(i - half, i + half + 1)
        else:
            w = order + 2 if m == 2 else order + 1
            lo = 0 if i < half else N - w
            idx = np.arange(lo, lo + w)
        D[i, idx] = fornberg_weights(s[i], s[idx], m)
    return D


# --------------------------------------------------------- twisted fields

@dataclass
class TwistedField:
    r: np.ndarray
    modes: np.ndarray          # (K+1, Nr) complex, frequency k + 1/2
    R: float = 1.0
    bc: str = "dirichlet"
    flags: dict = field(default_factory=dict)

    @property
    def K(self):
        return self.modes.shape[0] - 1

    @property
    def nus(self):
        return np.arange(self.modes.shape[0]) + 0.5

    def evaluate(self, theta):
        theta = np.asarray(theta, dtype=float)
        ph = np.exp(1j * np.outer(self.nus, theta))
        return np.real(self.modes.T @ ph)

    def tail_energy(self):
        e = np.sum(np.abs(self.modes) ** 2, axis=1)
        tot = e.sum()
        if tot == 0:
            return 0.0
        return float(e[3 * len(e) // 4:].sum() / tot)

    def to_rows(self):
        rows = []
        for k in range(self.modes.shape[0]):
            for j, rj in enumerate(self.r):
                c = self.modes[k, j]
                rows.append((k, rj, c.real, c.imag))
        return rows

    @classmethod
    def from_function(cls, func, r, K=8, ntheta=None):
        """Sample func(r, theta) on the cover and decompose."""
        ntheta = ntheta or 4 * (K + 1) + 4
        th = 4 * np.pi * np.arange(ntheta) / ntheta
        Rg, Tg = np.meshgrid(r, th, indexing="ij")
        return mode_decompose(func(Rg, Tg), r, K=K)

    @classmethod
    def from_complex_field(cls, F, r, K=8):
        modes = np.zeros((K + 1, len(r)), dtype=complex)
        for (a, b, p), c in F.canonical().terms.items():
            nu = a - b
            k = nu - 0.5
            if abs(k - round(k)) > 1e-9:
                raise ArgumentError(f"term with frequency {nu} is not twisted")
            k = int(round(k))
            if k <= K:
                modes[k] += c * r ** (a + b) * np.log(r) ** p
        return cls(np.asarray(r, dtype=float), modes)


def mode_decompose(samples, r, K=32, tol=1e-8):
    """Half-integer angular transform of samples on (r_j, theta_l), theta_l = 4 pi l / N."""
    samples = np.asarray(samples, dtype=float)
    N = samples.shape[1]
    if N % 2:
        raise ArgumentError("need an even number of angular samples on [0, 4 pi)")
    defect = np.max(np.abs(samples + np.roll(samples, -N // 2, axis=1)))
    scale = max(1.0, float(np.max(np.abs(samples))))
    if defect > tol * scale:
        raise ArgumentError(f"samples are not anti-periodic: defect {defect:.3e}")
    c = np.fft.fft(samples, axis=1) / N
    kmax = min(K, (N // 2 - 2) // 2)
    modes = np.stack([2 * c[:, 2 * k + 1] for k in range(kmax + 1)])
    return TwistedField(np.asarray(r, dtype=float), modes)


def apply_twisted_laplacian(f, order=8):
    """Mode-wise (d_ss - nu^2) f / r^2 with the same stencils as the solver."""
    s = np.log(f.r)
    D2 = fd_matrix(s, 2, order)
    out = (D2 @ f.modes.T).T - (f.nus**2)[:, None] * f.modes
    return TwistedField(f.r, out / f.r**2, f.R, f.bc)


# ------------------------------------------------------------- solves

@dataclass
class SolveResult:
    field: TwistedField
    resonant: dict
    particular: dict           # k -> list of Term (explicit power-law particular parts)
    source_fit: dict


def _local_power(r, sigma, npts=2):
    """sigma ~ kappa r^mu from the two innermost samples."""
    s0, s1 = sigma[0], sigma[1]
    if abs(s0) == 0 or abs(s1) == 0:
        return 0j, 0.0
    mu = float(np.log(abs(s1) / abs(s0)) / np.log(r[1] / r[0]))
    return s0 / r[0] ** mu, mu


def radial_mode_solve(r, nu, sigma, outer_value=0.0, order=8):
    """Solve f'' - nu^2 f = sigma in s = log r with the decaying branch at r -> 0.

    The inner row imposes (d_s - nu) f = kappa r^mu / (mu + nu), which holds
    exactly for f = c r^nu + kappa r^mu / (mu^2 - nu^2) and, in the resonant
    limit mu -> nu, for the log solution kappa r^nu log r / (2 nu).
    """
    s = np.log(r)
    N = len(s)
    D2 = fd_matrix(s, 2, order)
    D1 = fd_matrix(s, 1, order)
    A = (D2 - nu**2 * np.eye(N)).astype(complex)
    b = np.asarray(sigma, dtype=complex).copy()
    kappa, mu = _local_power(r, b)
    A[0] = D1[0] - nu * np.eye(N)[0]
    if kappa == 0:
        b[0] = 0.0
    else:
        if abs(mu + nu) < 1e-6:
            raise ArgumentError("source matches the excluded r^-nu branch")
        b[0] = kappa * r[0] ** mu / (mu + nu)
    A[-1] = 0.0
    A[-1, -1] = 1.0
    b[-1] = outer_value
    return np.linalg.solve(A, b), kappa, mu


def twisted_poisson_solve(rhs, boundary=None, order=8, resonance_tol=0.05):
    """Solve the twisted Poisson problem mode by mode with regularity at r = 0.

    ``boundary`` gives f_k(R) per mode (zero by default).
    """
    r = rhs.r
    K = rhs.K
    bvals = np.zeros(K + 1, dtype=complex) if boundary is None else np.asarray(boundary, dtype=complex)
    out = np.zeros_like(rhs.modes, dtype=complex)
    resonant, particular, fits = {}, {}, {}
    for k in range(K + 1):
        nu = k + 0.5
        sigma = r**2 * rhs.modes[k]
        if not np.any(sigma) and bvals[k] == 0:
            continue
        f, kappa, mu = radial_mode_solve(r, nu, sigma, bvals[k], order)
        out[k] = f
        fits[k] = (kappa, mu)
        if kappa != 0:
            if abs(mu - nu) < resonance_tol:
                resonant[k] = True
                particular[k] = [Term(nu, 1, nu, kappa / (2 * nu))]
            else:
                resonant[k] = False
                particular[k] = [Term(mu, 0, nu, kappa / (mu**2 - nu**2))]
    tf = TwistedField(r, out, rhs.R, "dirichlet", {"resonant": resonant})
    return SolveResult(tf, resonant, particular, fits)


def rim_modes(F, R=1.0):
    """Angular coefficients of Re F on the circle r = R, keyed by frequency >= 0."""
    out = {}
    L = np.log(R)
    for (a, b, p), c in F.canonical().terms.items():
        nu = round(a - b, 10)
        out[nu] = out.get(nu, 0j) + c * R ** (a + b) * L**p
    return out


def disk_poisson_terms(source, R=1.0, boundary=None):
    """Exact solution of  Delta F = Re(source)  on the disk/cover with rim data.

    Particular parts come from :meth:`ComplexField.poisson_particular`; the
    regular homogeneous terms Re(c z^nu) then fix the rim values to those of
    ``boundary`` (zero if omitted).  Returns (solution, particular, homogeneous).
    """
    P = source.poisson_particular()
    have = rim_modes(P, R)
    want = rim_modes(boundary, R) if boundary is not None else {}
    Hh = ComplexField()
    for nu in sorted(set(have) | set(want)):
        d = want.get(nu, 0j) - have.get(nu, 0j)
        if nu == 0:
            d = d.real
        if abs(d) > 0:
            Hh.add(nu, 0.0, 0, d / R**nu)
    return P + Hh, P, Hh


# ------------------------------------------------------ leading terms

@dataclass
class LeadingCoefficients:
    A: complex
    B: complex
    fitResidual: float
    log_amplitude: complex = 0j
    A_uncertainty: float = 0.0
    B_uncertainty: float = 0.0


def leading_coefficients(f, decades=2.0, skip=2, cond_max=1e8):
    """A from mode k=0 and B from mode k=1 by least squares over the inner decades."""
    r = f.r
    lr = np.log10(r / r[0])
    idx = np.nonzero(lr <= decades + 1e-12)[0][skip:]
    fit0 = polyhom_fit(r, f.modes[0], [(0.5, 0), (1.5, 0), (2.5, 0)], nu=0.5,
                       window=idx, cond_max=cond_max)
    if f.modes.shape[0] > 1:
        fit1 = polyhom_fit(r, f.modes[1], [(1.5, 0), (1.5, 1), (2.5, 0), (3.5, 0)], nu=1.5,
                           window=idx, cond_max=cond_max)
        B = fit1.coefficient(1.5, 0)
        logamp = fit1.coefficient(1.5, 1)
        uB = fit1.uncertainty[(1.5, 0)]
        tail1 = fit1.residual_tail
    else:
        B, logamp, uB, tail1 = 0j, 0j, 0.0, 0.0
    return LeadingCoefficients(fit0.coefficient(0.5, 0), B, max(fit0.residual_tail, tail1),
                               logamp, fit0.uncertainty[(0.5, 0)], uB)


def leading_coefficients_exact(F):
    """A and B read off an exact ComplexField (coefficients of z^1/2 and z^3/2)."""
    can = F.canonical().terms
    return LeadingCoefficients(can.get((0.5, 0.0, 0), 0j), can.get((1.5, 0.0, 0), 0j), 0.0)


def mellin_residue(r, profile, s, tail_points=8, offsets=(0.08, 0.04, 0.02, 0.01, 0.005)):
    """Residue of the Mellin transform of a sampled radial profile at zeta = i s.

    On the grid the profile is interpolated in log r by a degree-7 spline and
    integrated numerically; below the grid a local two-term power fit is
    integrated in closed form.  The product d * u_M(i (s - d)) is then
    extrapolated to d = 0.
    """
    from scipy.interpolate import make_interp_spline

    r = np.asarray(r)
    lr = np.log(r)
    spl_re = make_interp_spline(lr, np.real(profile), k=7)
    spl_im = make_interp_spline(lr, np.imag(profile), k=7)
    rt, pt = r[:tail_points], np.asarray(profile)[:tail_points]
    M = np.stack([rt**s, rt ** (s + 1)], axis=1)
    tail, *_ = np.linalg.lstsq(M.astype(complex), pt.astype(complex), rcond=None)

    def u(x):
        lx = np.log(np.clip(x, r[0], r[-1]))
        return spl_re(lx) + 1j * spl_im(lx)

    def transform(zeta):
        w = 1j * zeta
        inner = sum(c * r[0] ** (g + w) / (g + w) for c, g in zip(tail, (s, s + 1)))
        return inner + mellin_transform(u, zeta, s, r[-1], r_min=r[0])

    d = np.array(offsets)
    vals = np.array([d_ * transform(1j * (s - d_)) for d_ in d])
    coef = np.polyfit(d, vals, len(d) - 1)
    return complex(coef[-1])


def classify_nondegenerate(f, scale=None, tol=1e-6):
    """'nondegenerate' | 'degenerate-A' | 'B-vanishing'."""
    lc = f if isinstance(f, LeadingCoefficients) else leading_coefficients(f)
    if scale is None:
        scale = float(np.max(np.abs(f.modes))) if isinstance(f, TwistedField) else max(abs(lc.A), abs(lc.B), 1.0)
    if abs(lc.A) >= tol * scale:
        return "degenerate-A"
    if abs(lc.B) <= tol * scale:
        return "B-vanishing"
    return "nondegenerate"


# ------------------------------------------------------ local models

def local_model_potential(k, t):
    """t * 2/(2k+1) * Re z^(k+1/2) as a ComplexField."""
    return ComplexField.monomial(k + 0.5, 0.0, t * 2.0 / (2 * k + 1))


@dataclass
class CurveReport:
    immersion: Immersion
    variety_defect: float
    smooth: bool
    singular_at_origin: bool
    unbounded_gradient: bool
    omega_max: float
    im_omega_max: float


def graph_of_multivalued(k, t, n_samples=1000, radius=1.0, seed=0):
    """Graph of d f_t^k as the curve z = zeta^2, w = t zeta^(2k-1) in the c2-hk model.

    Sampling in the cover coordinate zeta avoids the branch point singularity.
    """
    if k not in (0, 1, 2, 3) or t <= 0:
        raise ArgumentError("k must be in {0,1,2,3} and t > 0")
    rng = np.random.default_rng(seed)
    rad = radius * np.sqrt(rng.random(n_samples - 1))
    ang = 2 * np.pi * rng.random(n_samples - 1)
    zeta = np.concatenate([[0.0 + 0j], rad * np.exp(1j * ang)])
    if k == 0:
        zeta[0] = 1e-3 * radius   # the k = 0 curve is not defined at the origin
    m = 2 * k - 1
    z = zeta**2
    w = t * zeta**m
    dz = 2 * zeta
    dw = t * m * zeta ** (m - 1) if m != 0 else np.zeros_like(zeta)
    d2z = 2 * np.ones_like(zeta)
    d2w = t * m * (m - 1) * zeta ** (m - 2) if m not in (0, 1) else np.zeros_like(zeta)
    vals = np.stack([z.real, z.imag, w.real, w.imag], axis=1)

    def real_frame(dzv, dwv):
        # d/dxi -> (dz, dw); d/deta -> i (dz, dw)
        e1 = np.stack([dzv.real, dzv.imag, dwv.real, dwv.imag], axis=1)
        i_dz, i_dw = 1j * dzv, 1j * dwv
        e2 = np.stack([i_dz.real, i_dz.imag, i_dw.real, i_dw.imag], axis=1)
        return e1, e2

    e1, e2 = real_frame(dz, dw)
    d1 = np.stack([e1, e2], axis=1)
    h11, _ = real_frame(d2z, d2w)
    h12, _ = real_frame(1j * d2z, 1j * d2w)
    h22, _ = real_frame(-d2z, -d2w)
    d2 = np.stack([np.stack([h11, h12], 1), np.stack([h12, h22], 1)], 1)
    im = Immersion(vals, d1, d2, "parametric-curve", -1, np.stack([zeta.real, zeta.imag], 1))
    S = make_c2_hk_structure()
    pb = pullback_forms(S, im)
    defect = float(np.max(np.abs(w**2 - t**2 * z ** (2 * k - 1))))
    # at zeta = 0: dz = 0 always, dw = t for k = 1, 0 for k >= 2, and |w| blows up for k = 0
    sing = m > 1
    unbounded = m < 0
    return CurveReport(im, defect, not sing and not unbounded, sing, unbounded,
                       float(np.max(np.abs(pb.omega))), float(np.max(np.abs(pb.im_Omega))))
