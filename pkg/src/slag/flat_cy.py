"""Flat Calabi-Yau models and pullbacks of their constant forms.

Two structures are provided:

* ``standard-Cn``: real coordinates ``(x1..xn, y1..yn)`` with z_j = x_j + i y_j,
  g = sum |dz|^2, omega = sum dx_j ^ dy_j, Omega = dz_1 ^ ... ^ dz_n.  A 1-form
  ``p`` on the base R^n is embedded as the graph ``x + i p``.
* ``c2-hk``: real coordinates ``(x1, y1, x2, y2)`` with z = x1 + i y1,
  w = x2 + i y2, omega = dx1^dx2 - dy1^dy2, Im Omega = dx1^dy2 + dy1^dx2,
  Re Omega = -dx1^dy1 - dx2^dy2.  The base is the z-plane and the fibre
  coordinates are (p1, p2) = (x2, -y2), so omega is the canonical form.

Forms are stored as :class:`ConstForm`, a dictionary from increasing index
tuples to complex coefficients.
"""

from dataclasses import dataclass, field
from itertools import permutations
from math import factorial

import numpy as np


class ArgumentError(ValueError):
    pass


class StateError(RuntimeError):
    pass


class NonLagrangianError(ValueError):
    def __init__(self, max_omega):
        super().__init__(f"immersion is not Lagrangian: max |i*omega| = {max_omega:.3e}")
        self.max_omega = max_omega


def _perm_sign(seq):
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


class ConstForm:
    """Constant complex k-form on R^d."""

    def __init__(self, d, k, coeffs=None):
        self.d = d
        self.k = k
        self.coeffs = {}
        for idx, c in (coeffs or {}).items():
            self._add(tuple(idx), complex(c))

    def _add(self, idx, c):
        if len(idx) != self.k:
            raise ArgumentError(f"index {idx} does not have length {self.k}")
        if len(set(idx)) < len(idx):
            return
        if any(i < 0 or i >= self.d for i in idx):
            raise ArgumentError(f"index {idx} out of range for d={self.d}")
        s = _perm_sign(idx)
        key = tuple(sorted(idx))
        val = self.coeffs.get(key, 0j) + s * c
        if val == 0:
            self.coeffs.pop(key, None)
        else:
            self.coeffs[key] = val

    @classmethod
    def basis(cls, d, i):
        return cls(d, 1, {(i,): 1.0})

    def __add__(self, other):
        if (self.d, self.k) != (other.d, other.k):
            raise ArgumentError("cannot add forms of different type")
        out = ConstForm(self.d, self.k, self.coeffs)
        for idx, c in other.coeffs.items():
            out._add(idx, c)
        return out

    def __neg__(self):
        return ConstForm(self.d, self.k, {i: -c for i, c in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __mul__(self, s):
        return ConstForm(self.d, self.k, {i: s * c for i, c in self.coeffs.items()})

    __rmul__ = __mul__

    def wedge(self, other):
        if self.d != other.d:
            raise ArgumentError("dimension mismatch in wedge")
        out = ConstForm(self.d, self.k + other.k)
        for i, a in self.coeffs.items():
            for j, b in other.coeffs.items():
                out._add(i + j, a * b)
        return out

    __xor__ = wedge

    def conj(self):
        return ConstForm(self.d, self.k, {i: c.conjugate() for i, c in self.coeffs.items()})

    @property
    def real(self):
        return ConstForm(self.d, self.k, {i: c.real for i, c in self.coeffs.items()})

    @property
    def imag(self):
        return ConstForm(self.d, self.k, {i: c.imag for i, c in self.coeffs.items()})

    def max_abs(self):
        return max((abs(c) for c in self.coeffs.values()), default=0.0)

    def component(self, idx):
        idx = tuple(idx)
        if len(set(idx)) < len(idx):
            return 0j
        return _perm_sign(idx) * self.coeffs.get(tuple(sorted(idx)), 0j)

    def evaluate(self, vectors):
        """Evaluate on k vectors; ``vectors`` has shape (..., k, d)."""
        V = np.asarray(vectors)
        if V.shape[-2:] != (self.k, self.d):
            raise ArgumentError(
                f"a {self.k}-form on R^{self.d} needs vectors of shape (k, d)="
                f"({self.k}, {self.d}), got {V.shape[-2:]}")
        out = np.zeros(V.shape[:-2], dtype=complex)
        for idx, c in self.coeffs.items():
            out = out + c * np.linalg.det(V[..., :, list(idx)])
        return out

    def matrix(self):
        """The d x d antisymmetric matrix of a 2-form."""
        if self.k != 2:
            raise ArgumentError("matrix() is only defined for 2-forms")
        M = np.zeros((self.d, self.d), dtype=complex)
        for (i, j), c in self.coeffs.items():
            M[i, j] = c
            M[j, i] = -c
        return M

    def to_json(self):
        return {"d": self.d, "k": self.k,
                "coeffs": [[list(i), c.real, c.imag] for i, c in sorted(self.coeffs.items())]}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["d"], obj["k"], {tuple(i): complex(re, im) for i, re, im in obj["coeffs"]})


def evaluate_by_leibniz(form, vectors):
    """Independent evaluation through the full antisymmetrised sum.

    Used as a cross-check of :meth:`ConstForm.evaluate` (which uses minors).
    """
    V = np.asarray(vectors, dtype=complex)
    k = form.k
    total = 0j
    for idx in np.ndindex(*([form.d] * k)):
        c = form.component(idx)
        if c == 0:
            continue
        acc = 0j
        for perm in permutations(range(k)):
            term = _perm_sign(perm)
            for slot, p in enumerate(perm):
                term = term * V[p, idx[slot]]
            acc += term
        total += c * acc / factorial(k)
    return total


@dataclass
class FlatCYStructure:
    name: str
    n: int
    coords: list
    metric: np.ndarray
    J: np.ndarray
    omega: ConstForm
    Omega: ConstForm
    embed: np.ndarray = field(repr=False)   # total coords = embed @ (q, p)
    base_orientation: int = 1

    @property
    def dim(self):
        return 2 * self.n

    @property
    def re_Omega(self):
        return self.Omega.real

    @property
    def im_Omega(self):
        return self.Omega.imag

    def compatibility_residual(self):
        """max |omega(u, v) - g(Ju, v)| over pairs of basis vectors."""
        W = self.omega.matrix().real
        G = self.metric
        JG = (self.J.T @ G)        # g(J e_a, e_b) = (J e_a)^T G e_b
        return float(np.max(np.abs(W - JG)))

    def normalization_residual(self):
        """Coefficient-wise omega^n/n! - (-1)^{n(n-1)/2} (i/2)^n Omega ^ conj(Omega)."""
        n = self.n
        wn = self.omega
        for _ in range(n - 1):
            wn = wn.wedge(self.omega)
        lhs = wn * (1.0 / factorial(n))
        rhs = self.Omega.wedge(self.Omega.conj()) * ((-1) ** (n * (n - 1) // 2) * (0.5j) ** n)
        return (lhs - rhs).max_abs()

    def to_json(self):
        return {"name": self.name, "n": self.n, "coords": list(self.coords),
                "metric": self.metric.tolist(), "J": self.J.tolist(),
                "omega": self.omega.to_json(), "Omega": self.Omega.to_json(),
                "embed": self.embed.tolist(), "base_orientation": self.base_orientation}

    @classmethod
    def from_json(cls, obj):
        return cls(obj["name"], obj["n"], list(obj["coords"]), np.array(obj["metric"]),
                   np.array(obj["J"]), ConstForm.from_json(obj["omega"]),
                   ConstForm.from_json(obj["Omega"]), np.array(obj["embed"]),
                   obj.get("base_orientation", 1))


def make_flat_structure(n):
    """Standard flat structure on C^n, 1 <= n <= 4."""
    if not isinstance(n, (int, np.integer)) or n < 1 or n > 4:
        raise ArgumentError(f"n must be an integer in [1, 4], got {n!r}")
    d = 2 * n
    dx = [ConstForm.basis(d, j) for j in range(n)]
    dy = [ConstForm.basis(d, n + j) for j in range(n)]
    omega = ConstForm(d, 2)
    for j in range(n):
        omega = omega + dx[j].wedge(dy[j])
    Omega = dx[0] + 1j * dy[0]
    for j in range(1, n):
        Omega = Omega.wedge(dx[j] + 1j * dy[j])
    J = np.zeros((d, d))
    for j in range(n):
        J[n + j, j] = 1.0     # J dx_j-direction -> dy_j-direction
        J[j, n + j] = -1.0
    coords = [f"x{j + 1}" for j in range(n)] + [f"y{j + 1}" for j in range(n)]
    return FlatCYStructure("standard-Cn", n, coords, np.eye(d), J, omega, Omega, np.eye(d), 1)


def make_c2_hk_structure():
    """The C^2 structure in which complex curves of (z, w) are special Lagrangian."""
    d = 4
    x1, y1, x2, y2 = (ConstForm.basis(d, i) for i in range(4))
    omega = x1.wedge(x2) - y1.wedge(y2)
    im_Omega = x1.wedge(y2) + y1.wedge(x2)
    re_Omega = -x1.wedge(y1) - x2.wedge(y2)
    Omega = re_Omega + 1j * im_Omega
    J = np.zeros((d, d))
    # J d/dx1 = d/dx2, J d/dy1 = -d/dy2 (columns are images of basis vectors)
    J[2, 0] = 1.0
    J[0, 2] = -1.0
    J[3, 1] = -1.0
    J[1, 3] = 1.0
    embed = np.diag([1.0, 1.0, 1.0, -1.0])     # (q1, q2, p1, p2) -> (x1, y1, x2, y2)
    return FlatCYStructure("c2-hk", 2, ["x1", "y1", "x2", "y2"], np.eye(d), J,
                           omega, Omega, embed, -1)


def holomorphic_two_form_c2(S):
    """dz ^ dw in the real coordinates of the c2-hk structure."""
    d = 4
    x1, y1, x2, y2 = (ConstForm.basis(d, i) for i in range(4))
    return (x1 + 1j * y1).wedge(x2 + 1j * y2)


@dataclass
class Immersion:
    """Sampled map from an m-dimensional parameter domain into R^{2n}.

    ``values`` has shape (N, 2n), ``d1`` (N, m, 2n) holds the partial
    derivatives along the parameter axes and ``d2`` (N, m, m, 2n) the second
    partials (optional).  ``orientation`` multiplies the parameter volume.
    """

    values: np.ndarray
    d1: np.ndarray = None
    d2: np.ndarray = None
    kind: str = "parametric-curve"
    orientation: int = 1
    params: np.ndarray = None

    @property
    def m(self):
        if self.d1 is not None:
            return self.d1.shape[1]
        return None

    @property
    def npts(self):
        return self.values.shape[0]


def graph_immersion(S, base, grad, hess=None, third=None):
    """Graph of a closed 1-form over the base R^n of ``S``.

    ``grad`` are the components of the 1-form at ``base`` points, ``hess``
    their first derivatives (d_j alpha_k) and ``third`` the second
    derivatives, used for the second fundamental form.
    """
    base = np.atleast_2d(np.asarray(base, dtype=float))
    grad = np.atleast_2d(np.asarray(grad, dtype=float))
    n = S.n
    if base.shape[1] != n or grad.shape[1] != n:
        raise ArgumentError(f"graph over R^{n} needs n={n} components")
    E = S.embed
    vals = np.concatenate([base, grad], axis=1) @ E.T
    d1 = d2 = None
    if hess is not None:
        hess = np.asarray(hess, dtype=float)
        N = base.shape[0]
        tang = np.zeros((N, n, 2 * n))
        for a in range(n):
            tang[:, a, a] = 1.0
            tang[:, a, n:] = hess[:, a, :]
        d1 = tang @ E.T
        if third is not None:
            third = np.asarray(third, dtype=float)
            sec = np.zeros((N, n, n, 2 * n))
            sec[:, :, :, n:] = third
            d2 = sec @ E.T
    return Immersion(vals, d1, d2, "graph-of-1-form", S.base_orientation, base)


def _require_frame(S, im):
    if im.d1 is None:
        raise StateError("immersion has no derivative samples")
    if im.values.shape[1] != S.dim or im.d1.shape[2] != S.dim:
        raise ArgumentError(f"immersion lands in R^{im.d1.shape[2]}, structure is on R^{S.dim}")


@dataclass
class Pullbacks:
    omega: np.ndarray      # (N, m, m)
    im_Omega: np.ndarray   # (N,) density against du_1 ^ ... ^ du_n (oriented)
    re_Omega: np.ndarray


def pullback_forms(S, im, pts=None):
    """Pull back omega, Im Omega and Re Omega along ``im`` at sample indices ``pts``."""
    _require_frame(S, im)
    if im.m != S.n:
        raise ArgumentError(f"Lagrangian candidates need dimension n={S.n}, got {im.m}")
    F = im.d1 if pts is None else im.d1[pts]
    W = S.omega.matrix().real
    om = np.einsum("nai,ij,nbj->nab", F, W, F)
    Om = S.Omega.evaluate(F) * im.orientation
    return Pullbacks(om, Om.imag, Om.real)


def pullback_form(form, im, pts=None):
    """Pull back an arbitrary constant form; its degree must match the immersion."""
    if im.d1 is None:
        raise StateError("immersion has no derivative samples")
    if form.k != im.m:
        raise ArgumentError(f"cannot pull back a {form.k}-form to a {im.m}-dimensional immersion")
    F = im.d1 if pts is None else im.d1[pts]
    return form.evaluate(F) * im.orientation


def induced_metric(S, im):
    _require_frame(S, im)
    return np.einsum("nai,ij,nbj->nab", im.d1, S.metric, im.d1)


def induced_volume(S, im):
    return np.sqrt(np.abs(np.linalg.det(induced_metric(S, im))))


def lagrangian_angle(S, im, pts=None, tol=1e-8):
    """Phase theta in (-pi, pi] with i*Omega = e^{i theta} vol."""
    pb = pullback_forms(S, im, pts)
    m = float(np.max(np.abs(pb.omega))) if pb.omega.size else 0.0
    if m > tol:
        raise NonLagrangianError(m)
    th = np.angle(pb.re_Omega + 1j * pb.im_Omega)
    th = np.where(th <= -np.pi, np.pi, th)
    return th


def star_pullbacks(S, im, pts=None):
    """(*i*Re Omega, *i*Im Omega) with respect to the induced volume."""
    pb = pullback_forms(S, im, pts)
    vol = induced_volume(S, im)
    if pts is not None:
        vol = vol[pts]
    return pb.re_Omega / vol, pb.im_Omega / vol


def spectral_derivatives(f, L=1.0, order=2):
    """Gradient, Hessian (and third derivatives if order=3) of periodic samples."""
    f = np.asarray(f, dtype=float)
    n = f.ndim
    shape = f.shape
    ks = [2j * np.pi * np.fft.fftfreq(N, d=L / N) for N in shape]
    grids = np.meshgrid(*ks, indexing="ij")
    for ax, N in enumerate(shape):
        if N % 2 == 0:
            # zero the Nyquist mode so odd derivatives stay real
            sl = [slice(None)] * n
            sl[ax] = N // 2
            grids = [g.copy() for g in grids]
            for g in grids:
                g[tuple(sl)] = 0.0 if g is grids[ax] else g[tuple(sl)]
    F = np.fft.fftn(f)
    grad = np.stack([np.fft.ifftn(grids[a] * F).real for a in range(n)], axis=-1)
    kk = [2j * np.pi * np.fft.fftfreq(N, d=L / N) for N in shape]
    full = np.meshgrid(*kk, indexing="ij")
    hess = np.empty(shape + (n, n))
    for a in range(n):
        for b in range(a, n):
            h = np.fft.ifftn(full[a] * full[b] * F).real
            hess[..., a, b] = h
            hess[..., b, a] = h
    if order < 3:
        return grad, hess
    third = np.empty(shape + (n, n, n))
    for a in range(n):
        for b in range(n):
            for c in range(n):
                third[..., a, b, c] = np.fft.ifftn(grids[a] * grids[b] * grids[c] * F).real
    return grad, hess, third


def graph_on_torus(S, f, L=1.0, shift=None, order=2):
    """Graph of d(f + shift.x) over the flat torus (R/LZ)^n sampled on a grid.

    ``shift`` is a constant covector (a harmonic 1-form) added to df.
    """
    f = np.asarray(f, dtype=float)
    n = f.ndim
    if n != S.n:
        raise ArgumentError(f"torus dimension {n} does not match n={S.n}")
    axes = [np.arange(N) * (L / N) for N in f.shape]
    X = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    out = spectral_derivatives(f, L, order=order)
    grad, hess = out[0], out[1]
    grad = grad.reshape(-1, n)
    if shift is not None:
        grad = grad + np.asarray(shift, dtype=float)[None, :]
    third = out[2].reshape(-1, n, n, n) if order >= 3 else None
    return graph_immersion(S, X, grad, hess.reshape(-1, n, n), third)
