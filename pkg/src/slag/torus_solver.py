"""Spectral solves on flat tori and the nearby special Lagrangian iteration.

Fields live on (R / L Z)^n sampled on uniform grids.  The Laplacian here is
Delta = sum_a d_a^2, so ``invert_laplacian(cos x)`` on the 2 pi torus gives
``-cos x``.

The graph of d(f0 + f) is special Lagrangian when

    Delta F + P(Hess F) = 0,   F = f0 + f,   P = -P_3 + P_5 - ...

Writing h = Delta f this is the fixed point h = T(h) with
T(h) = -Delta f0 - P(Hess(f0 + Delta^{-1} h)).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.sparse.linalg import LinearOperator, gmres, lobpcg

from .sl_operator import im_det, odd_nonlinearity


class ArgumentError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, msg, trace):
        super().__init__(msg)
        self.trace = trace


# ------------------------------------------------------------- spectral

def wavenumbers(shape, L=1.0):
    ks = [2 * np.pi * np.fft.fftfreq(N, d=L / N) for N in shape]
    return np.meshgrid(*ks, indexing="ij")


def _odd_wavenumbers(shape, L=1.0):
    """Wavenumbers with the Nyquist entry zeroed, for first derivatives."""
    out = []
    for ax, k in enumerate(wavenumbers(shape, L)):
        k = k.copy()
        N = shape[ax]
        if N % 2 == 0:
            sl = [slice(None)] * len(shape)
            sl[ax] = N // 2
            k[tuple(sl)] = 0.0
        out.append(k)
    return out


@dataclass
class TorusField:
    values: np.ndarray
    L: float = 1.0
    _coeffs: np.ndarray = field(default=None, repr=False)

    @property
    def n(self):
        return self.values.ndim

    @property
    def shape(self):
        return self.values.shape

    @property
    def coeffs(self):
        if self._coeffs is None:
            self._coeffs = np.fft.fftn(self.values)
        return self._coeffs

    @property
    def mean(self):
        return float(self.coeffs.flat[0].real / self.values.size)

    @property
    def mean_zero(self):
        return abs(self.mean) < 1e-13

    def grid(self):
        axes = [np.arange(N) * self.L / N for N in self.shape]
        return np.meshgrid(*axes, indexing="ij")


def laplacian(f):
    k2 = sum(k**2 for k in wavenumbers(f.shape, f.L))
    return TorusField(np.fft.ifftn(-k2 * f.coeffs).real, f.L)


def invert_laplacian(h, tol=1e-12):
    """Mean-zero f with Delta f = h."""
    scale = max(1.0, float(np.max(np.abs(h.values))))
    if abs(h.mean) > tol * scale:
        raise ArgumentError(f"right-hand side has nonzero mean {h.mean:.3e}")
    k2 = sum(k**2 for k in wavenumbers(h.shape, h.L))
    k2.flat[0] = 1.0
    fh = -h.coeffs / k2
    fh.flat[0] = 0.0
    return TorusField(np.fft.ifftn(fh).real, h.L)


def hessian(f):
    ks = wavenumbers(f.shape, f.L)
    n = f.n
    H = np.empty(f.shape + (n, n))
    for a in range(n):
        for b in range(a, n):
            v = np.fft.ifftn(-ks[a] * ks[b] * f.coeffs).real
            H[..., a, b] = v
            H[..., b, a] = v
    return H


def gradient(f):
    ks = _odd_wavenumbers(f.shape, f.L)
    return np.stack([np.fft.ifftn(1j * k * f.coeffs).real for k in ks], axis=-1)


def band_limited_field(shape, kmax, amplitude, seed=0, L=1.0):
    """Random real field with modes |k_a| <= kmax, zero mean, scaled so sup|Hess| = amplitude."""
    rng = np.random.default_rng(seed)
    c = np.zeros(shape, dtype=complex)
    idx = [np.fft.fftfreq(N, d=1.0 / N) for N in shape]
    mask = np.ones(shape, dtype=bool)
    for ax, ii in enumerate(idx):
        sh = [1] * len(shape)
        sh[ax] = -1
        mask &= (np.abs(ii) <= kmax).reshape(sh)
    c[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
    c.flat[0] = 0.0
    f = np.fft.ifftn(c).real
    tf = TorusField(f, L)
    H = hessian(tf)
    s = amplitude / np.max(np.abs(H))
    return TorusField(f * s, L)


# ------------------------------------------------------------- solver

@dataclass
class SolveOptions:
    tol: float = 1e-11
    max_iter: int = 100
    stall_ratio: float = 0.9
    stall_steps: int = 3
    diverge_steps: int = 5
    newton_tol: float = 1e-13


@dataclass
class TraceRow:
    it: int
    residual_sup: float
    residual_l2: float
    contraction_ratio: float
    method: str


def sl_residual(F):
    return im_det(hessian(F))


def _mean_free(v):
    return v - v.mean()


def _linearized(F, d):
    """Derivative of Im det(I + i Hess F) in direction d: Re(det A tr(A^-1 Hess d))."""
    A = np.eye(F.n) + 1j * hessian(F)
    K = hessian(d)
    Ainv = np.linalg.inv(A)
    return np.real(np.linalg.det(A) * np.einsum("...ij,...ji->...", Ainv, K))


def nearby_sl_solve(f0, opts=None, upsilon_gate=None):
    """Solve for mean-zero f with graph of d(f0 + f) special Lagrangian.

    Returns (f, trace).  A constant 1-form added to d f0 does not change the
    residual on a flat torus, so harmonic data converge in zero iterations.
    """
    opts = opts or SolveOptions()
    h0 = laplacian(f0).values
    res = sl_residual(f0)
    trace = [TraceRow(0, float(np.max(np.abs(res))), float(np.sqrt(np.mean(res**2))), np.nan, "init")]
    if upsilon_gate is not None and trace[0].residual_sup > upsilon_gate:
        warnings.warn(f"initial residual {trace[0].residual_sup:.3e} exceeds the gate {upsilon_gate:.3e}")
    f = TorusField(np.zeros(f0.shape), f0.L)
    if trace[0].residual_sup < opts.tol:
        return f, trace
    h = np.zeros(f0.shape)
    stall = grow = 0
    method = "contraction"
    prev = trace[0].residual_sup
    for it in range(1, opts.max_iter + 1):
        if method == "contraction":
            F = TorusField(f0.values + f.values, f0.L)
            h = _mean_free(-h0 - odd_nonlinearity(hessian(F)))
            f = invert_laplacian(TorusField(h, f0.L), tol=1e-8)
        else:
            f = _newton_update(f0, f, opts)
        F = TorusField(f0.values + f.values, f0.L)
        res = sl_residual(F)
        sup = float(np.max(np.abs(res)))
        ratio = sup / prev if prev > 0 else 0.0
        trace.append(TraceRow(it, sup, float(np.sqrt(np.mean(res**2))), ratio, method))
        if sup < opts.tol:
            return f, trace
        stall = stall + 1 if ratio > opts.stall_ratio else 0
        grow = grow + 1 if ratio > 1.0 else 0
        if grow >= opts.diverge_steps:
            raise ConvergenceError(f"residual grew for {grow} consecutive steps", trace)
        if method == "contraction" and stall >= opts.stall_steps:
            method = "newton"
            stall = 0
        prev = sup
    raise ConvergenceError(f"no convergence in {opts.max_iter} iterations", trace)


def _newton_update(f0, f, opts):
    F = TorusField(f0.values + f.values, f0.L)
    res = _mean_free(sl_residual(F))
    shape = f0.shape

    def matvec(x):
        d = invert_laplacian(TorusField(_mean_free(x.reshape(shape)), f0.L), tol=1e-6)
        return _mean_free(_linearized(F, d)).ravel()

    op = LinearOperator((res.size, res.size), matvec=matvec, dtype=float)
    x, info = gmres(op, -res.ravel(), rtol=opts.newton_tol, atol=0.0, restart=50, maxiter=20)
    d = invert_laplacian(TorusField(_mean_free(x.reshape(shape)), f0.L), tol=1e-6)
    return TorusField(f.values + d.values, f0.L)


# ------------------------------------------------------------ eigenvalue

def weighted_operator(w, L=1.0):
    """Matrix-free f -> -sum_a D_a (w D_a f) with spectral D_a (Nyquist removed)."""
    w = np.asarray(w, dtype=float)
    shape = w.shape
    ks = _odd_wavenumbers(shape, L)

    def apply(x):
        F = np.fft.fftn(x.reshape(shape))
        out = np.zeros(shape, dtype=complex)
        for k in ks:
            g = np.fft.ifftn(1j * k * F).real * w
            out += 1j * k * np.fft.fftn(g)
        return -np.fft.ifftn(out).real.ravel()

    return apply


def dense_weighted_operator(w, L=1.0):
    apply = weighted_operator(w, L)
    N = np.asarray(w).size
    A = np.empty((N, N))
    e = np.zeros(N)
    for j in range(N):
        e[j] = 1.0
        A[:, j] = apply(e)
        e[j] = 0.0
    return A


def sample_weight(weight, n, N, L=1.0):
    """Samples of a weight given as an array or as a callable of the grid axes."""
    if callable(weight):
        axes = [np.arange(N) * L / N] * n
        return np.asarray(weight(*np.meshgrid(*axes, indexing="ij")), dtype=float) * np.ones((N,) * n)
    return np.asarray(weight, dtype=float)


def first_eigenvalue(weight, n=None, N=17, L=1.0, seed=0, tol=1e-6, maxiter=400):
    """Smallest positive eigenvalue of f -> d*(w df) on mean-zero fields (LOBPCG).

    Grids must have odd size per axis: with an even size the Nyquist modes
    lie in the kernel of the spectral first derivative and would show up as
    spurious zero eigenvalues.
    """
    w = sample_weight(weight, n, N, L)
    if any(m % 2 == 0 for m in w.shape):
        raise ArgumentError("use an odd number of grid points per axis")
    if np.min(w) <= 0:
        raise ArgumentError(f"weight must be positive, min = {np.min(w):.3e}")
    size = w.size
    block = 2 * w.ndim + 2
    if size < 5 * block:
        # too small for a block iteration; the assembled matrix is tiny
        return dense_first_eigenvalue(w, L=L)
    apply = weighted_operator(w, L)

    def matmat(X):
        return np.stack([apply(c) for c in X.T], 1)

    A = LinearOperator((size, size), matvec=apply, matmat=matmat, dtype=float)
    k2 = sum(k**2 for k in wavenumbers(w.shape, L))
    k2.flat[0] = 1.0
    wbar = float(np.mean(w))

    def prec(X):
        cols = []
        for c in X.T:
            F = np.fft.fftn(c.reshape(w.shape)) / (wbar * k2)
            F.flat[0] = 0.0
            cols.append(np.fft.ifftn(F).real.ravel())
        return np.stack(cols, 1)

    M = LinearOperator((size, size), matvec=lambda x: prec(x[:, None])[:, 0], matmat=prec,
                       dtype=float)
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((size, block))
    Y = np.ones((size, 1)) / np.sqrt(size)
    with warnings.catch_warnings():
        # the warning reports on the whole block; only the lowest pair is used
        warnings.simplefilter("ignore", UserWarning)
        vals, vecs = lobpcg(A, X, M=M, Y=Y, tol=tol, maxiter=maxiter, largest=False)
    j = int(np.argmin(vals))
    v = vecs[:, j] / np.linalg.norm(vecs[:, j])
    resid = float(np.linalg.norm(apply(v) - vals[j] * v))
    if resid > 10 * tol * max(1.0, abs(vals[j])):
        warnings.warn(f"lowest eigenpair residual {resid:.2e} above tolerance")
    return float(vals[j])


def dense_first_eigenvalue(weight, n=None, N=17, L=1.0):
    A = dense_weighted_operator(sample_weight(weight, n, N, L), L)
    ev = np.linalg.eigvalsh((A + A.T) / 2)
    return float(ev[ev > 1e-8 * max(1.0, ev.max())].min())


def operator_asymmetry(w, L=1.0):
    A = dense_weighted_operator(w, L)
    return float(np.max(np.abs(A - A.T)) / max(1.0, np.max(np.abs(A))))


# ------------------------------------------------------- geometry report

@dataclass
class GeometryReport:
    tau: float
    lam: float
    vol: float
    weinstein_size: float
    inj_bound: float
    upsilon: float
    gamma: float
    C: float

    def to_dict(self):
        return dict(self.__dict__)


def _max_normal_curvature(II, g, ndir=720):
    """max over unit tangent X of |II(X, X)| for one sample."""
    m = g.shape[0]
    Lc = np.linalg.cholesky(np.linalg.inv(g))      # columns give a g-orthonormal frame
    E = np.einsum("abk,ai,bj->ijk", II, Lc, Lc)
    if m == 1:
        return float(np.linalg.norm(E[0, 0]))
    if m == 2:
        ph = np.linspace(0, np.pi, ndir, endpoint=False)
        c, s = np.cos(ph), np.sin(ph)
        V = c[:, None] ** 2 * E[0, 0] + 2 * (c * s)[:, None] * E[0, 1] + s[:, None] ** 2 * E[1, 1]
        vals = np.linalg.norm(V, axis=1)
        j = int(np.argmax(vals))
        if vals[j] == 0:
            return 0.0
        d = np.pi / ndir

        def neg(p):
            cc, ss = np.cos(p), np.sin(p)
            return -np.linalg.norm(cc * cc * E[0, 0] + 2 * cc * ss * E[0, 1] + ss * ss * E[1, 1])

        r = minimize_scalar(neg, bounds=(ph[j] - d, ph[j] + d), method="bounded", options={"xatol": 1e-12})
        return float(max(vals[j], -r.fun))
    rng = np.random.default_rng(0)
    X = rng.standard_normal((4000, m))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    V = np.einsum("pi,pj,ijk->pk", X, X, E)
    return float(np.max(np.linalg.norm(V, axis=1)))


def second_fundamental_norms(S, im):
    """Per-sample max |II(X, X)| over unit tangent vectors (Gauss formula)."""
    if im.d2 is None:
        raise ArgumentError("immersion has no second derivatives")
    F = im.d1
    G = S.metric
    g = np.einsum("nai,ij,nbj->nab", F, G, F)
    out = np.empty(len(F))
    for p in range(len(F)):
        gi = np.linalg.inv(g[p])
        Pt = F[p].T @ gi @ F[p] @ G             # tangential projector
        Nn = np.eye(G.shape[0]) - Pt
        II = np.einsum("ij,abj->abi", Nn, im.d2[p])
        out[p] = _max_normal_curvature(II, g[p])
    return out


def geometry_report(im, S, gamma=0.5, C=1.0, lam=1.0, vol=1.0):
    """Curvature scale and the derived neighbourhood sizes, evaluated verbatim.

    weinstein_size = C / tau and inj_bound = pi / (C + tau);
    upsilon = C (1 + vol tau^(2 + gamma + n/2) / lam)^2 tau^gamma with
    tau replaced by max(tau, 1) (the curvature scale is assumed >= 1 there).
    """
    tau = float(np.max(second_fundamental_norms(S, im)))
    n = im.m
    th = max(tau, 1.0)
    ups = C * (1 + vol * th ** (2 + gamma + n / 2) / lam) ** 2 * th**gamma
    ws = C / tau if tau > 0 else np.inf
    return GeometryReport(tau, lam, vol, ws, np.pi / (C + tau), ups, gamma, C)
