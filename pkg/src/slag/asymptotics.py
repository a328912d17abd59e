"""Mellin transforms, indicial roots and polyhomogeneous fitting.

Exact expansions are handled through :class:`ComplexField`, a finite sum
``sum c * z^a * zbar^b * (log r)^p`` whose real part is the physical field.
On the double cover the angle runs over [0, 4 pi) and ``z^a zbar^b`` means
``r^(a+b) exp(i (a-b) theta)``, so half-integer ``a - b`` gives two-valued
fields.  Derivatives use the Wirtinger rules
``d/dz (z^a zbar^b L^p) = z^(a-1) zbar^b (a L^p + p/2 L^(p-1))`` with
``L = log r``, together with ``d/dx = d/dz + d/dzbar`` and
``d/dy = i (d/dz - d/dzbar)``.
"""

from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy import integrate


class PoleError(ZeroDivisionError):
    def __init__(self, s, p):
        super().__init__(f"pole hit: i*zeta + s = 0 for s={s}, p={p}")
        self.s = s
        self.p = p


class DomainError(ValueError):
    pass


class FitError(RuntimeError):
    pass


def _key(x):
    return round(float(x), 10) + 0.0


class ComplexField:
    """Finite sum of c * z^a zbar^b (log r)^p; the field is its real part."""

    def __init__(self, terms=None):
        self.terms = {}
        for (a, b, p), c in (terms or {}).items():
            self.add(a, b, p, c)

    def add(self, a, b, p, c):
        if c == 0:
            return self
        key = (_key(a), _key(b), int(p))
        val = self.terms.get(key, 0j) + complex(c)
        if val == 0:
            self.terms.pop(key, None)
        else:
            self.terms[key] = val
        return self

    @classmethod
    def monomial(cls, a, b, c=1.0, p=0):
        return cls({(a, b, p): c})

    def copy(self):
        return ComplexField(self.terms)

    def __add__(self, other):
        out = self.copy()
        for (a, b, p), c in other.terms.items():
            out.add(a, b, p, c)
        return out

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        return ComplexField({k: s * c for k, c in self.terms.items()})

    __rmul__ = __mul__

    def __len__(self):
        return len(self.terms)

    def dz(self):
        out = ComplexField()
        for (a, b, p), c in self.terms.items():
            out.add(a - 1, b, p, c * a)
            if p > 0:
                out.add(a - 1, b, p - 1, c * p / 2)
        return out

    def dzbar(self):
        out = ComplexField()
        for (a, b, p), c in self.terms.items():
            out.add(a, b - 1, p, c * b)
            if p > 0:
                out.add(a, b - 1, p - 1, c * p / 2)
        return out

    def dx(self):
        return self.dz() + self.dzbar()

    def dy(self):
        return (self.dz() - self.dzbar()) * 1j

    def laplacian(self):
        return self.dz().dzbar() * 4.0

    def canonical(self):
        """Same real field with every term rewritten so that a - b >= 0."""
        out = ComplexField()
        for (a, b, p), c in self.terms.items():
            if a - b < 0:
                out.add(b, a, p, np.conj(c))
            else:
                out.add(a, b, p, c)
        return out

    def is_zero(self, tol=0.0):
        return all(abs(c) <= tol for c in self.canonical().terms.values())

    def evaluate_complex(self, r, theta):
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(np.broadcast(r, theta).shape, dtype=complex)
        L = np.log(r)
        for (a, b, p), c in self.terms.items():
            out = out + c * r ** (a + b) * np.exp(1j * (a - b) * theta) * L**p
        return out

    def __call__(self, r, theta):
        return self.evaluate_complex(r, theta).real

    def derivatives(self, r, theta):
        """(value, gradient (...,2), hessian (...,2,2)) of the real field."""
        fx, fy = self.dx(), self.dy()
        val = self(r, theta)
        g = np.stack([fx(r, theta), fy(r, theta)], axis=-1)
        hxx = fx.dx()(r, theta)
        hxy = fx.dy()(r, theta)
        hyy = fy.dy()(r, theta)
        H = np.stack([np.stack([hxx, hxy], -1), np.stack([hxy, hyy], -1)], -2)
        return val, g, H

    def support(self):
        """Exponent pairs (a, b) of the real field in canonical form."""
        return sorted({(a, b) for (a, b, p) in self.canonical().terms})

    def poisson_particular(self):
        """A field F with laplacian(F) equal to this field (no homogeneous part).

        Each monomial is inverted by the ansatz z^(a+1) zbar^(b+1) Q(log r)
        with Q a polynomial; resonant cases (a = -1 or b = -1) pick up extra
        log powers.
        """
        out = ComplexField()
        for (a, b, p), c in self.terms.items():
            A, B = a + 1, b + 1
            for q, cq in enumerate(_log_poly_inverse(A, B, p)):
                out.add(A, B, q, c * cq)
        return out

    def to_expansion(self):
        terms = []
        for (a, b, p), c in sorted(self.canonical().terms.items()):
            terms.append(Term(a + b, p, a - b, c))
        return PolyhomExpansion(terms)

    def to_json(self):
        return [[a, b, p, c.real, c.imag] for (a, b, p), c in sorted(self.terms.items())]


def _log_poly_inverse(A, B, p):
    """Coefficients c_q of Q with 4 dz dzbar (z^A zbar^B Q(L)) = z^(A-1) zbar^(B-1) L^p.

    The image coefficient at L^q is
    4AB c_q + 2(q+1)(A+B) c_(q+1) + (q+2)(q+1) c_(q+2).
    """
    AB = 4 * A * B
    S = 2 * (A + B)
    tol = 1e-12
    if abs(AB) > tol:
        c = [0j] * (p + 3)
        for q in range(p, -1, -1):
            rhs = (1.0 if q == p else 0.0) - (q + 1) * S * c[q + 1] - (q + 2) * (q + 1) * c[q + 2]
            c[q] = rhs / AB
        return c[: p + 1]
    if abs(S) > tol:
        c = [0j] * (p + 4)
        for q in range(p, -1, -1):
            rhs = (1.0 if q == p else 0.0) - (q + 2) * (q + 1) * c[q + 2]
            c[q + 1] = rhs / ((q + 1) * S)
        return c[: p + 2]
    c = [0j] * (p + 3)
    c[p + 2] = 1.0 / ((p + 2) * (p + 1))
    return c


@dataclass(frozen=True)
class Term:
    """Re(coeff * r^gamma * (log r)^p * exp(i nu theta))."""

    gamma: float
    p: int
    nu: float
    coeff: complex


@dataclass
class PolyhomExpansion:
    terms: list
    index_set: tuple = ()
    residual_tail: float = 0.0
    uncertainty: dict = field(default_factory=dict)
    log_flags: dict = field(default_factory=dict)
    condition: float = 1.0

    def coefficient(self, gamma, p=0, nu=None):
        for t in self.terms:
            if abs(t.gamma - gamma) < 1e-9 and t.p == p and (nu is None or abs(t.nu - nu) < 1e-9):
                return t.coeff
        return 0j

    def has_log(self):
        return any(self.log_flags.values())

    def to_field(self):
        F = ComplexField()
        for t in self.terms:
            F.add((t.gamma + t.nu) / 2, (t.gamma - t.nu) / 2, t.p, t.coeff)
        return F

    def evaluate(self, r, theta=0.0):
        return self.to_field()(r, theta)

    def radial(self, r):
        """Complex radial profile sum coeff r^gamma (log r)^p (single-mode use)."""
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape, dtype=complex)
        for t in self.terms:
            out = out + t.coeff * r**t.gamma * np.log(r) ** t.p
        return out

    def to_json(self):
        return {"terms": [{"gamma": t.gamma, "p": t.p, "nu": t.nu,
                           "re": t.coeff.real, "im": t.coeff.imag} for t in self.terms],
                "index_set": [list(x) for x in self.index_set],
                "residual_tail": self.residual_tail,
                "log_flags": {f"{g}:{p}": bool(v) for (g, p), v in self.log_flags.items()},
                "condition": self.condition}


# --------------------------------------------------------------- Mellin

def mellin_pole_formula(s, p, zeta):
    """Closed form (-1)^(p+1) p! / (i zeta + s)^(p+1)."""
    w = 1j * complex(zeta) + s
    if w == 0:
        raise PoleError(s, p)
    return (-1) ** (p + 1) * factorial(p) / w ** (p + 1)


def mellin_transform(u, zeta, s0, R=1.0, r_min=0.0, tol=1e-10):
    """Numerical Mellin transform  int_0^R u(r) r^(i zeta - 1) dr.

    ``u`` is a callable radial profile supported in (0, R] with
    u(r) = O(r^s0) as r -> 0; the integral converges for Im zeta < s0.
    Integration runs in sigma = log r.
    """
    zetas = np.atleast_1d(np.asarray(zeta, dtype=complex))
    out = np.empty(zetas.shape, dtype=complex)
    lo = -np.inf if r_min <= 0 else np.log(r_min)
    hi = np.log(R)
    for i, z in enumerate(zetas):
        if z.imag >= s0:
            raise DomainError(f"zeta={z} outside the strip Im zeta < {s0}")

        def g(sig, z=z):
            if sig < -700:
                return 0j
            v = complex(u(np.exp(sig)))
            if v == 0:
                return 0j
            # combine magnitudes in log form so r^(-Im zeta) cannot overflow
            mag = np.exp(np.log(abs(v)) - z.imag * sig)
            return v / abs(v) * mag * np.exp(1j * z.real * sig)

        re = integrate.quad(lambda x: g(x).real, lo, hi, epsabs=tol, epsrel=tol, limit=400)[0]
        im = integrate.quad(lambda x: g(x).imag, lo, hi, epsabs=tol, epsrel=tol, limit=400)[0]
        out[i] = re + 1j * im
    return out if np.ndim(zeta) else out[0]


def mellin_pole_location(u, s0, p=0, R=1.0, offsets=(0.3, 0.2, 0.1)):
    """Locate the Mellin pole on the imaginary axis nearest the strip edge.

    Along zeta = i eta the transform behaves like K (s - eta)^(-(p+1)), so
    u_M^(-1/(p+1)) is affine in eta near the pole; a linear fit through
    samples inside the strip is extrapolated to its zero.
    """
    etas = np.array([s0 - d for d in offsets])
    vals = np.array([mellin_transform(u, 1j * e, s0, R) for e in etas])
    w = np.abs(vals) ** (-1.0 / (p + 1))
    slope, icpt = np.polyfit(etas, w, 1)
    return -icpt / slope


# ------------------------------------------------------- indicial roots

def antiperiodic_d2(K):
    """Second-derivative matrix on 2K nodes for fields with monodromy -1.

    Nodes theta_j = 2 pi j / (2K); the trial space is spanned by
    cos(nu theta), sin(nu theta) for nu = 1/2, ..., K - 1/2.
    """
    N = 2 * K
    th = 2 * np.pi * np.arange(N) / N
    nus = np.arange(K) + 0.5
    V = np.concatenate([np.cos(np.outer(th, nus)), np.sin(np.outer(th, nus))], axis=1)
    lam = -np.concatenate([nus**2, nus**2])
    return V @ np.diag(lam) @ np.linalg.inv(V)


def indicial_operator(zeta, K=8):
    return antiperiodic_d2(K) + zeta**2 * np.eye(2 * K)


def indicial_multiplicity(zeta, K=8, tol=1e-8):
    sv = np.linalg.svd(indicial_operator(zeta, K), compute_uv=False)
    return int(np.sum(sv < tol * max(1.0, sv.max())))


def indicial_min_singular(zeta, K=8):
    return float(np.linalg.svd(indicial_operator(zeta, K), compute_uv=False).min())


def indicial_roots(window=(0.0, 3.0), K=None, tol=1e-8):
    """Sorted zeta in the window where the model operator is singular, with multiplicities."""
    lo, hi = window
    if K is None:
        K = int(np.ceil(max(abs(lo), abs(hi)))) + 4
    ev = np.linalg.eigvals(-antiperiodic_d2(K)).real
    cand = np.sqrt(np.clip(ev, 0, None))
    cand = np.concatenate([cand, -cand])
    roots = []
    for z in np.sort(cand):
        if lo - tol <= z <= hi + tol and not any(abs(z - q) < 1e-6 for q, _ in roots):
            roots.append((float(np.round(z, 12)), indicial_multiplicity(z, K)))
    return roots


# --------------------------------------------------------- fitting

def default_window(r, frac=0.6, skip=2):
    r = np.asarray(r)
    lr = np.log10(r)
    cut = lr.min() + frac * (lr.max() - lr.min())
    idx = np.nonzero(lr <= cut + 1e-12)[0]
    return idx[skip:]


def _lstsq(r, data, basis, weights=None):
    cols = [r**g * np.log(r) ** p for g, p in basis]
    A = np.stack(cols, axis=1).astype(complex)
    if weights is not None:
        A = A * weights[:, None]
        data = data * weights
    scale = np.linalg.norm(A, axis=0)
    scale[scale == 0] = 1.0
    As = A / scale
    cond = np.linalg.cond(As)
    coef, *_ = np.linalg.lstsq(As, data, rcond=None)
    coef = coef / scale
    resid = data - A @ coef
    return coef, cond, resid


def polyhom_fit(r, data, index_set, nu=0.0, window=None, weights=None,
                cond_max=1e8, log_factor=5.0, log_floor=1e-9):
    """Least-squares fit of radial data against r^gamma (log r)^p.

    ``index_set`` lists (gamma, p).  Default weights are r^-g_min so each
    sample is judged relative to the leading behaviour.  Uncertainty is
    the change between the fit on the window and on every other point of
    it.  A log term is flagged when its coefficient exceeds ``log_factor``
    times its uncertainty and ``log_floor`` relative to the data scale.
    """
    r = np.asarray(r, dtype=float)
    data = np.asarray(data, dtype=complex)
    idx = default_window(r) if window is None else np.asarray(window)
    if len(idx) < len(index_set) + 1:
        raise FitError(f"{len(idx)} samples cannot resolve {len(index_set)} terms")
    rr, dd = r[idx], data[idx]
    if weights is None:
        gmin = min(g for g, _ in index_set)
        w = rr ** (-gmin)
    else:
        w = np.asarray(weights)[idx]
    coef, cond, resid = _lstsq(rr, dd, index_set, w)
    if cond > cond_max:
        raise FitError(f"dictionary collinear over the sampled range (cond={cond:.2e})")
    coef2, _, _ = _lstsq(rr[::2], dd[::2], index_set, w[::2])
    unc = np.abs(coef - coef2) + np.sqrt(np.mean(np.abs(resid) ** 2)) * 1e-3 + 1e-15
    scale = max(np.max(np.abs(dd * w)), 1e-300)
    terms, ucert, flags = [], {}, {}
    for (g, p), c, u in zip(index_set, coef, unc):
        terms.append(Term(g, p, nu, complex(c)))
        ucert[(g, p)] = float(u)
        if p > 0:
            flags[(g, p)] = bool(abs(c) > log_factor * u and abs(c) > log_floor * scale)
    tail = float(np.max(np.abs(resid)) / scale)
    order = np.argsort([t.gamma + 1e-3 * t.p for t in terms])
    return PolyhomExpansion([terms[i] for i in order], tuple(index_set), tail, ucert, flags, float(cond))


def leading_exponent(r, values, window=None):
    """Free-exponent fit: log-log slope of |values| against r, with the slope
    from every other sample as an uncertainty estimate."""
    r = np.asarray(r, dtype=float)
    v = np.abs(np.asarray(values))
    idx = np.arange(len(r)) if window is None else np.asarray(window)
    x, y = np.log(r[idx]), np.log(v[idx])
    if len(x) < 3 or not np.all(np.isfinite(y)):
        raise FitError("insufficient radial range for an exponent fit")
    s1 = np.polyfit(x, y, 1)[0]
    s2 = np.polyfit(x[::2], y[::2], 1)[0]
    return float(s1), float(abs(s1 - s2))


def nearest_half_integer(x):
    return np.floor(x) + 0.5
