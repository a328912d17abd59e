"""Order-by-order improvement of branched approximate solutions.

A family is stored as A_t = sum_j t^j a_j with each a_j a :class:`Pair`.
One correction step

1. extracts the leading residual coefficient rho = lim t^-m pSL(A_t),
2. checks that rho = u(x3) * sigma(x1, x2) on the conformal model,
   u = exp(-2 phi), and fits sigma mode by mode,
3. solves Delta F = -sigma on the unit disk/cover with zero rim data,
4. reads the coefficient a of Re(a z^1/2) in the twisted part and removes it
   with the shift v = -2a / (3 B1), i.e. adds d_v f1_minus,
5. appends t^m a_m to the family.

On the model every order satisfies pSL = u * (Delta_2 F + c^2 q(F)) with q
independent of x3, so each step reduces to a planar problem.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .asymptotics import ComplexField, FitError, leading_exponent, polyhom_fit
from .sl_operator import (Pair, linear_conformal_metric, pair_residual,
                          polar_cover_grid, split_residual)
from .z2_model import (LeadingCoefficients, NondegeneracyError, TwistedField,
                       classify_nondegenerate, disk_poisson_terms,
                       leading_coefficients, leading_coefficients_exact)


class OrderError(RuntimeError):
    pass


class ModelInconsistencyError(RuntimeError):
    pass


DEFAULT_TS = (0.2, 0.1, 0.05, 0.025)


@dataclass
class SampleGrid:
    r: np.ndarray
    ntheta: int
    x3: np.ndarray

    def mesh(self):
        return polar_cover_grid(self.r, self.ntheta, self.x3)

    @property
    def theta(self):
        return 4 * np.pi * np.arange(self.ntheta) / self.ntheta


def default_grid(r_min=1e-3, nr=40, ntheta=64, nx3=5):
    return SampleGrid(np.geomspace(r_min, 1.0, nr), ntheta, np.linspace(0.0, 1.0, nx3))


@dataclass
class Family:
    """A_t = sum_j t^j components[j]."""

    components: dict
    n: int = 3

    def at(self, t):
        minus, plus, extra = ComplexField(), ComplexField(), None
        for j, a in self.components.items():
            s = t**j
            minus = minus + a.minus * s
            plus = plus + a.plus * s
            if a.plus_extra is not None:
                if extra is not None:
                    raise ValueError("only one component may carry an extra untwisted form")
                extra = a.plus_extra.scaled(s)
        return Pair(minus, plus, extra, n=self.n, t=t)

    def minus_potential(self, t):
        return self.at(t).minus

    def copy(self):
        return Family(dict(self.components), self.n)


@dataclass
class OrderTerm:
    rho: Optional[np.ndarray]
    order: float
    slope: float
    exact: bool
    norms: dict = field(default_factory=dict)


@dataclass
class IterationState:
    family: Family
    metric: object
    order: float
    B1: complex
    T: float = 1.0
    shifts: list = field(default_factory=list)      # (order, v)
    ladder: list = field(default_factory=list)      # (stage, t, weighted residual, slope)
    slopes: list = field(default_factory=list)
    grid: SampleGrid = field(default_factory=default_grid)
    c: float = 0.25


def weighted_residual(metric, pair, grid):
    """sup over the grid of r * |pSL(pair)|, and the raw residual array."""
    R, T, Z = grid.mesh()
    res = pair_residual(metric, pair, R, T, Z)
    return float(np.max(np.abs(R * res))), res


def _slope(ts, norms):
    x, y = np.log(ts), np.log(norms)
    slope, icpt = np.polyfit(x, y, 1)
    return float(slope), float(icpt)


def residual_sweep(metric, family, grid, ts=DEFAULT_TS, exact_tol=1e-14):
    norms, fields = [], []
    for t in ts:
        w, res = weighted_residual(metric, family.at(t), grid)
        norms.append(w)
        fields.append(res)
    norms = np.array(norms)
    if np.all(norms <= exact_tol):
        return np.inf, np.nan, norms, fields
    slope, icpt = _slope(np.array(ts), norms)
    return slope, icpt, norms, fields


def _richardson(ts, values, powers=(2, 4, 6)):
    """Extrapolate E(t) = E0 + c1 t^p1 + ... to t = 0 from a halving sequence."""
    ts = np.asarray(ts)
    order = np.argsort(-ts)
    cur = [values[i] for i in order]
    tt = ts[order]
    for p in powers:
        if len(cur) < 2:
            break
        ratio = (tt[0] / tt[1]) ** p
        cur = [(ratio * cur[i + 1] - cur[i]) / (ratio - 1) for i in range(len(cur) - 1)]
        tt = tt[1:]
    return cur[-1]


def extract_order_term(state, ts=DEFAULT_TS, slope_tol=0.2, powers=(2, 4, 6)):
    """Leading t-power of the residual and its Richardson-extrapolated coefficient field."""
    if len(ts) < 4:
        raise ValueError("need at least 4 values of t")
    ratios = np.array(ts[:-1]) / np.array(ts[1:])
    if np.max(np.abs(ratios - ratios[0])) > 1e-12:
        raise ValueError("t values must form a geometric progression")
    slope, icpt, norms, fields = residual_sweep(state.metric, state.family, state.grid, ts)
    if not np.isfinite(slope):
        return OrderTerm(None, np.inf, np.inf, True, dict(zip(ts, norms)))
    m = round(slope)
    if abs(slope - m) > slope_tol:
        raise OrderError(f"residual slope {slope:.3f} is not close to an integer")
    scaled = [f / t**m for f, t in zip(fields, ts)]
    rho = _richardson(ts, scaled, powers)
    return OrderTerm(rho, m, slope, False, dict(zip(ts, norms)))


def shift_vector(a, B1, gate=1e-12):
    """v = -2a / (3 B1) as a complex number v1 + i v2."""
    if abs(B1) <= gate:
        raise NondegeneracyError(f"|B1| = {abs(B1):.3e} below gate")
    return -2.0 * complex(a) / (3.0 * complex(B1))


def directional_derivative(F, v):
    """Potential of d_v Re F for a constant vector v = v1 + i v2."""
    v = complex(v)
    return F.dx() * v.real + F.dy() * v.imag


def cutoff_profile(r, r0=0.5, r1=0.9):
    """Smooth radial cutoff: 1 for r < r0, 0 for r > r1 (declared extension knob)."""
    r = np.asarray(r, dtype=float)
    x = np.clip((r - r0) / (r1 - r0), 0.0, 1.0)
    return 1.0 - x * x * (3.0 - 2.0 * x)


# ---------------------------------------------------------- source fitting

def _support_product(*fields):
    """Exponent pairs of products of real parts of the given fields."""
    supp = [(0.0, 0.0)]
    for F in fields:
        new = set()
        for a, b in supp:
            for (c, d) in F.support():
                new.add((a + c, b + d))
                new.add((a + d, b + c))
        supp = new
    out = set()
    for a, b in supp:
        if a < b:
            a, b = b, a
        out.add((round(a, 10), round(b, 10)))
    return sorted(out)


def residual_index_set(F):
    """Candidate exponents (gamma per frequency nu) of c^2 q(F), q = -grad^T adj(Hess) grad."""
    fx, fy = F.dx(), F.dy()
    grad = fx + fy
    hess = fx.dx() + fx.dy() + fy.dy()
    idx = {}
    for a, b in _support_product(grad, grad, hess):
        nu = round(a - b, 10)
        idx.setdefault(nu, set()).add(round(a + b, 10))
    return {nu: sorted(g) for nu, g in idx.items()}


def fit_source(sigma, grid, index_set, rel_floor=1e-13, miss_tol=1e-9):
    """Fit sigma(r, theta) (theta on the cover) by sum Re(c r^gamma e^{i nu theta})."""
    N = sigma.shape[1]
    coeffs = np.fft.fft(sigma, axis=1) / N
    scale = float(np.max(np.abs(sigma)))
    S = ComplexField()
    report = {}
    for m in range(N // 2):
        nu = m / 2.0
        prof = coeffs[:, m] * (1.0 if m == 0 else 2.0)
        if np.max(np.abs(prof)) <= rel_floor * scale:
            continue
        gammas = index_set.get(round(nu, 10))
        if not gammas:
            raise ModelInconsistencyError(f"residual has a frequency-{nu} mode outside the index set")
        exps = [(g, 0) for g in gammas]
        # uniform weights: the samples carry absolute roundoff, which r^-gamma weights would inflate
        fit = polyhom_fit(grid.r, prof, exps, nu=nu, window=np.arange(len(grid.r)),
                          weights=np.ones(len(grid.r)))
        miss = float(np.max(np.abs(prof - fit.radial(grid.r)))) / scale
        if miss > miss_tol:
            raise FitError(f"mode {nu}: fit misses the samples by {miss:.2e} (relative)")
        for term in fit.terms:
            S.add((term.gamma + nu) / 2, (term.gamma - nu) / 2, 0, term.coeff)
        report[nu] = fit
    return S, report


def split_field(F):
    """(twisted, untwisted) parts of a ComplexField by frequency parity."""
    minus, plus = ComplexField(), ComplexField()
    for (a, b, p), c in F.terms.items():
        nu = a - b
        if abs(nu - round(nu)) > 1e-9:
            minus.add(a, b, p, c)
        else:
            plus.add(a, b, p, c)
    return minus, plus


# --------------------------------------------------------------- steps

@dataclass
class StepReport:
    order_before: float
    slope_before: float
    order_after: float
    slope_after: float
    a: complex
    v: complex
    A_after: complex
    A_after_fit: complex
    B_new: complex
    plus_mean: float
    x3_defect: float


def correction_step(state, ts=DEFAULT_TS, mean_gate=1e-6, x3_gate=1e-8):
    """One correction of the family; returns (new state, StepReport)."""
    ot = extract_order_term(state, ts)
    if ot.exact:
        return state, None
    m = int(ot.order)
    if m < 3:
        raise OrderError(f"order {m} below the first nonlinear order 3")
    grid = state.grid
    R, T, Z = grid.mesh()
    u = 1.0 - 2.0 * state.c * Z
    sig3 = ot.rho / u
    sigma = sig3.mean(axis=2)
    defect = float(np.max(np.abs(sig3 - sigma[:, :, None])) / max(np.max(np.abs(sigma)), 1e-300))
    # dividing by t^m lifts roundoff in the O(t) terms to about eps / t_min^(m-1)
    floor = 1e3 * np.finfo(float).eps / min(ts) ** (m - 1)
    if defect > max(x3_gate, floor):
        raise ModelInconsistencyError(f"order-{m} residual is not separable in x3 (defect {defect:.2e})")

    F_all = state.family.at(1.0).potential()
    index_set = residual_index_set(F_all)
    S, _ = fit_source(sigma, grid, index_set, rel_floor=max(1e-13, floor), miss_tol=max(1e-9, floor))
    S_minus, S_plus = split_field(S)
    # plus-part integral over the unit disk: only frequency-0 terms contribute
    mean = 0.0
    for (a, b, p), c in S_plus.canonical().terms.items():
        if abs(a - b) < 1e-12:
            mean += 2 * np.pi * c.real / (a + b + 2)
    smax = float(np.max(np.abs(sigma)))
    if abs(mean) > mean_gate * smax:
        raise ModelInconsistencyError(f"plus-part source integrates to {mean:.3e}")

    sol, _, _ = disk_poisson_terms(-S, 1.0)
    f_minus, f_plus = split_field(sol)
    a = f_minus.canonical().terms.get((0.5, 0.0, 0), 0j)
    v = shift_vector(a, state.B1)
    f1_minus = state.family.components[1].minus
    f_minus = f_minus + directional_derivative(f1_minus, v)
    lc_new = leading_coefficients_exact(f_minus)
    # numeric oracle for the eliminated A: decompose samples of the new twisted potential
    r_fit = np.geomspace(1e-4, 1.0, 190)
    tw = TwistedField.from_function(lambda rr, th: f_minus(rr, th), r_fit, K=4)
    A_fit = leading_coefficients(tw).A

    comps = dict(state.family.components)
    comps[m] = Pair(f_minus, f_plus, None, 0j, lc_new.A, lc_new.B, state.family.n)
    fam = Family(comps, state.family.n)
    Bnew = abs(lc_new.B)
    T = state.T if Bnew == 0 else min(state.T, 0.25 * abs(state.B1) / Bnew)
    new = IterationState(fam, state.metric, m, state.B1, T, state.shifts + [(m, v)],
                         list(state.ladder), list(state.slopes), grid, state.c)
    slope2, _, norms2, _ = residual_sweep(state.metric, fam, grid, ts)
    new.order = slope2 if not np.isfinite(slope2) else round(slope2)
    if not state.slopes:
        state.slopes.append(ot.slope)
        new.slopes = [ot.slope]
        for t, w in zip(ts, ot.norms.values()):
            new.ladder.append((m, t, w, ot.slope))
    new.slopes.append(slope2)
    for t, w in zip(ts, norms2):
        new.ladder.append((new.order, t, w, slope2))
    rep = StepReport(m, ot.slope, new.order, slope2, a, v, lc_new.A, A_fit, lc_new.B, mean, defect)
    return new, rep


# -------------------------------------------------------- the demo model

def conformal_demo(c=0.25, B=1.0, C=1.0, D=0.5j, grid=None):
    """Initial state on R^2 x [0, 1] with exp(-2 phi) = 1 - 2 c x3.

    a1 = d Re(B z^3/2) + d Re(C z + D z^2): both parts are harmonic for the
    conformal metric because they have no x3 component and phi depends on x3
    only.  The frequency-0 part of the first residual is -c^2 Re(2 conj(D) C^2),
    which vanishes for the default D = i/2 so the plus equation is solvable.
    """
    metric = linear_conformal_metric(c, 3, 2)
    minus = ComplexField.monomial(1.5, 0.0, B)
    plus = ComplexField({(1.0, 0.0, 0): C, (2.0, 0.0, 0): D})
    a1 = Pair(minus, plus, None, 0j, 0j, B, 3)
    fam = Family({1: a1}, 3)
    st = IterationState(fam, metric, 0, B, 1.0, grid=grid or default_grid(), c=c)
    return st


def build_approximate_pair(state, N, budget=6, ts=DEFAULT_TS):
    """Apply correction steps until the residual order reaches N + 1."""
    a1 = state.family.components[1]
    verdict = classify_nondegenerate(leading_coefficients_exact(a1.minus),
                                     scale=max(abs(a1.leadingB), 1.0))
    if verdict != "nondegenerate":
        raise NondegeneracyError(f"initial pair is {verdict}")
    ot = extract_order_term(state, ts)
    state.order = ot.order
    reports = []
    steps = 0
    while state.order < N + 1 and steps < budget:
        state, rep = correction_step(state, ts)
        if rep is None:
            break
        reports.append(rep)
        steps += 1
    return state, reports


@dataclass
class SlopeRow:
    stage: int
    slope: float
    intercept: float


def residual_order_check(state, ts=DEFAULT_TS):
    """Slope table for the family truncated after each stored order."""
    rows = []
    keys = sorted(state.family.components)
    for i in range(len(keys)):
        fam = Family({k: state.family.components[k] for k in keys[: i + 1]}, state.family.n)
        slope, icpt, norms, _ = residual_sweep(state.metric, fam, state.grid, ts)
        rows.append(SlopeRow(keys[i], slope, icpt))
    return rows


def deviation_slope(state, ts=DEFAULT_TS):
    """Log-log slope of sup |A_t - t a_1| (gradient norm) against t."""
    grid = state.grid
    R, T, Z = grid.mesh()
    norms = []
    for t in ts:
        full = state.family.at(t)
        lin = state.family.components[1].scaled(t)
        _, a_full, _ = full.evaluate(R, T, Z)
        _, a_lin, _ = lin.evaluate(R, T, Z)
        norms.append(np.max(np.linalg.norm(a_full - a_lin, axis=1)))
    norms = np.array(norms)
    if np.all(norms == 0):
        return np.inf
    return _slope(np.array(ts), norms)[0]


def composed_shift(state, t):
    """Translation of the branch point accumulated from the shifts, sum t^(m-1) v_m."""
    return sum(t ** (m - 1) * v for m, v in state.shifts)


def classify_family(state, t):
    F = state.family.minus_potential(t)
    lc = leading_coefficients_exact(F)
    return classify_nondegenerate(lc, scale=max(abs(lc.B), abs(lc.A)))
