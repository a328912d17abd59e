"""Experiment runner: JSON configs in, deterministic CSVs and a manifest out."""

import csv
import hashlib
import io
import json
import platform
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import click
import numpy as np
import scipy

from . import __version__


class UsageError(ValueError):
    def __init__(self, problems):
        super().__init__("; ".join(problems))
        self.problems = list(problems)


# name -> (type, default, lo, hi); None bounds are open
PARAMS = {
    "local-model": {"k": (int, 1, 0, 3), "t": (float, 0.5, 1e-6, 10.0),
                    "n_samples": (int, 1000, 10, 10**6),
                    "identity_samples": (int, 10_000, 0, 10**6)},
    "torus-solve": {"n": (int, 3, 1, 4), "N": (int, 64, 8, 256), "kmax": (int, 2, 1, 16),
                    "hess": (float, 0.05, 0.0, 0.5), "tol": (float, 1e-11, 1e-15, 1e-3)},
    "z2-solve": {"terms": (list, None, None, None), "R": (float, 1.0, 1e-3, 1e3),
                 "ratio": (float, 1.05, 1.001, 1.5)},
    "iterate": {"c": (float, 0.25, 1e-3, 0.49), "orders": (int, 1, 1, 2),
                "ts": (list, [0.2, 0.1, 0.05, 0.025], None, None)},
    "mellin": {"input": (str, "", None, None), "zeta_line": (float, -0.5, -10.0, 10.0),
               "p": (int, 0, 0, 4), "s": (float, 0.5, -0.99, 10.0)},
    "cone-eig": {"ts": (list, [0.4, 0.2, 0.1, 0.05], None, None), "N": (int, 400, 50, 20000),
                 "curvature_ts": (list, [0.5, 0.25], None, None)},
    "link": {"pd": (str, "trefoil", None, None)},
    "obstruct": {"covering": (dict, None, None, None), "les": (bool, True, None, None)},
}


@dataclass
class ExperimentConfig:
    id: str
    params: dict = field(default_factory=dict)
    out: str = "runs"
    seed: int = 0

    def validated(self):
        probs = []
        if self.id not in PARAMS:
            raise UsageError([f"id: unknown experiment {self.id!r} (known: {', '.join(PARAMS)})"])
        schema = PARAMS[self.id]
        for k in self.params:
            if k not in schema:
                probs.append(f"params.{k}: not a parameter of {self.id}")
        full = {}
        for k, (typ, default, lo, hi) in schema.items():
            v = self.params.get(k, default)
            if v is not None:
                try:
                    v = v if typ in (list, dict) else (float(v) if typ is float else typ(v))
                except (TypeError, ValueError):
                    probs.append(f"params.{k}: expected {typ.__name__}, got {v!r}")
                    continue
                if typ in (list, dict) and not isinstance(v, typ):
                    probs.append(f"params.{k}: expected {typ.__name__}")
                    continue
                if lo is not None and not lo <= v <= hi:
                    probs.append(f"params.{k}: {v} outside [{lo}, {hi}]")
            full[k] = v
        if not isinstance(self.seed, int):
            probs.append("seed: must be an integer")
        if probs:
            raise UsageError(probs)
        return ExperimentConfig(self.id, full, self.out, self.seed)

    @classmethod
    def from_json(cls, text):
        d = json.loads(text)
        unknown = set(d) - {"id", "params", "out", "seed"}
        if unknown or "id" not in d:
            raise UsageError([f"config: unknown keys {sorted(unknown)}" if unknown else "config: missing id"])
        return cls(d["id"], d.get("params", {}), d.get("out", "runs"), d.get("seed", 0))


# ------------------------------------------------------------------ output

def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12e}"
    return str(v)


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())
    return path


def _sha(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _jsonable(o):
    if isinstance(o, dict):
        return {str(k): _jsonable(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_jsonable(v) for v in o]
    if isinstance(o, (bool, np.bool_)):
        return bool(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (float, np.floating)):
        return float(o) if np.isfinite(o) else str(float(o))
    if isinstance(o, complex):
        return [o.real, o.imag]
    return o


def emit_plot_data(results, out):
    """One CSV per figure-type result; absent results give a header-only file."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    ladder = results.get("ladder", [])
    eig = results.get("eigen", [])
    coeffs = results.get("coefficients", [])
    files = [
        write_csv(out / "plot_ladder.csv", ["log_t", "log_weighted_residual"],
                  [(np.log(t), np.log(w)) for _, t, w, _ in ladder if w > 0]),
        write_csv(out / "plot_eigen.csv", ["t", "lambda_t", "abs_gap"], list(eig)),
        write_csv(out / "plot_coefficients.csv", ["name", "re", "im"],
                  [(n, complex(c).real, complex(c).imag) for n, c in coeffs]),
    ]
    return [str(f) for f in files]


# ------------------------------------------------------------ experiments

def _exp_local_model(p, seed, out):
    from .sl_operator import symmetric_identity_errors
    from .z2_model import graph_of_multivalued

    rep = graph_of_multivalued(p["k"], p["t"], p["n_samples"], seed=seed)
    resid = max(rep.omega_max, rep.im_omega_max)
    rows = [(p["k"], p["t"], rep.omega_max, rep.im_omega_max, rep.variety_defect,
             rep.smooth, rep.singular_at_origin, rep.unbounded_gradient)]
    f = write_csv(out / "local_model.csv", ["k", "t", "omega_max", "im_omega_max", "variety_defect",
                                            "smooth", "singular", "unbounded"], rows)
    if p["k"] == 0:
        gates = {"unbounded_flagged": rep.unbounded_gradient}
    else:
        gates = {"residual_max<1e-10": resid < 1e-10, "variety<1e-10": rep.variety_defect < 1e-10}
    summary = {"residual_max": resid, "smooth": rep.smooth, "singular": rep.singular_at_origin,
               "unbounded": rep.unbounded_gradient}
    if p["identity_samples"]:
        err_poly, err_im = symmetric_identity_errors(p["identity_samples"], 5, seed)
        summary["identity_errors"] = {"char_poly": err_poly, "im_det": err_im}
        gates["symmetric_identity<1e-9"] = max(err_poly, err_im) < 1e-9
    return summary, gates, [f], {}


def _exp_torus(p, seed, out):
    from .torus_solver import SolveOptions, band_limited_field, nearby_sl_solve

    f0 = band_limited_field((p["N"],) * p["n"], p["kmax"], p["hess"], seed)
    f, trace = nearby_sl_solve(f0, SolveOptions(tol=p["tol"]))
    rows = [(r.it, r.residual_sup, r.residual_l2, r.contraction_ratio) for r in trace]
    fpath = write_csv(out / "trace.csv", ["iter", "residual_sup", "residual_l2", "contraction_ratio"], rows)
    ratios = [r.contraction_ratio for r in trace[2:]]
    gates = {"final<tol": trace[-1].residual_sup < p["tol"],
             "ratio<=0.5": all(x <= 0.5 for x in ratios)}
    return {"iterations": len(trace) - 1, "final_residual": trace[-1].residual_sup}, gates, [fpath], {}


def _exp_z2(p, seed, out):
    from .asymptotics import leading_exponent
    from .z2_model import TwistedField, radial_grid, twisted_poisson_solve

    terms = p["terms"] or [{"gamma": -0.5, "nu": 0.5, "coeff": [1.0, 0.0]}]
    r = radial_grid(p["R"], p["ratio"])
    K = max(int(round(t["nu"] - 0.5)) for t in terms)
    modes = np.zeros((K + 1, len(r)), dtype=complex)
    for t in terms:
        k = int(round(t["nu"] - 0.5))
        if abs(t["nu"] - (k + 0.5)) > 1e-12:
            raise UsageError([f"params.terms: nu={t['nu']} is not a half-integer"])
        c = complex(*t["coeff"]) if isinstance(t["coeff"], list) else complex(t["coeff"])
        modes[k] += c * r ** t["gamma"]
    res = twisted_poisson_solve(TwistedField(r, modes, p["R"]))
    f = res.field
    rows = [(k, rr, v.real, v.imag) for k in range(f.K + 1) for rr, v in zip(f.r, f.modes[k])]
    fpath = write_csv(out / "field.csv", ["k", "r", "re", "im"], rows)
    summary, coeffs = {}, []
    gates = {}
    for k, plist in sorted(res.particular.items()):
        part = plist[0]
        hom = f.modes[k] - part.coeff * f.r**part.gamma * (np.log(f.r) ** part.p)
        inner = np.nonzero(f.r < 1e-2 * p["R"])[0][2:]
        e, u = leading_exponent(f.r, hom, inner)
        summary[f"mode{k}"] = {"particular_gamma": part.gamma, "particular_coeff": part.coeff,
                               "log": bool(part.p), "homogeneous_exponent": e}
        coeffs.append((f"particular_k{k}", part.coeff))
        gates[f"mode{k}_half_integer"] = abs(e - round(e - 0.5) - 0.5) < 0.02
    return summary, gates, [fpath], {"coefficients": coeffs}


def _exp_iterate(p, seed, out):
    from .branched_iteration import conformal_demo, correction_step

    ts = tuple(float(t) for t in p["ts"])
    state = conformal_demo(p["c"])
    reps = []
    for _ in range(p["orders"]):
        state, rep = correction_step(state, ts)
        if rep is None:
            break
        reps.append(rep)
    fpath = write_csv(out / "ladder.csv", ["order", "t", "weighted_residual", "slope"], state.ladder)
    first = reps[0]
    scale = max(abs(first.B_new), abs(state.B1))
    gates = {"slope_before_in_[2.9,3.1]": 2.9 <= first.slope_before <= 3.1,
             "slope_after>=3.9": first.slope_after >= 3.9,
             "A_after<1e-5*scale": abs(first.A_after_fit) < 1e-5 * scale}
    if len(reps) > 1:
        sl = state.slopes
        gates["slope_gain>=0.9_per_step"] = all(b >= a + 0.9 for a, b in zip(sl, sl[1:]))
        gates["shift_ratio<0.5"] = all(abs(b.v) < 0.5 * abs(a.v) for a, b in zip(reps, reps[1:]))
    summary = {"slopes": state.slopes, "a": first.a, "shift": first.v,
               "A_after": first.A_after, "A_after_fit": first.A_after_fit}
    return summary, gates, [fpath], {"ladder": state.ladder,
                                     "coefficients": [("a", first.a), ("A_after_fit", first.A_after_fit)]}


def _exp_mellin(p, seed, out):
    from .asymptotics import (indicial_roots, mellin_pole_formula, mellin_transform,
                              nearest_half_integer, polyhom_fit)

    roots = indicial_roots((0.0, 3.0))
    s, q, c = p["s"], p["p"], p["zeta_line"]
    if p["input"]:
        data = np.loadtxt(p["input"], delimiter=",", skiprows=1)
        r, u = data[:, 0], data[:, 1]
        fit = polyhom_fit(r, u, [(0.5, 0), (1.5, 0), (2.5, 0)])
        summary = {"fit": {f"{t.gamma}": t.coeff for t in fit.terms}, "residual_tail": fit.residual_tail}
        s = float(nearest_half_integer(fit.terms[0].gamma))
        q = 0
        prof = None
    else:
        summary = {}

        def prof(rr):
            return rr**s * np.log(rr) ** q
    rows = []
    worst = 0.0
    if prof is not None:
        for xi in np.linspace(-2.0, 2.0, 9):
            z = xi + 1j * c
            num = mellin_transform(prof, z, s)
            ref = mellin_pole_formula(s, q, z)
            worst = max(worst, abs(num - ref))
            rows.append((xi, c, num.real, num.imag, ref.real, ref.imag))
    fpath = write_csv(out / "mellin.csv", ["xi", "eta", "num_re", "num_im", "formula_re", "formula_im"], rows)
    files = [fpath]
    if prof is None:
        report = {"leading_exponent": s, "terms": summary["fit"], "residual_tail": summary["residual_tail"]}
        epath = out / "expansion.json"
        epath.write_text(json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n")
        files.append(epath)
    summary.update({"roots": roots, "max_formula_gap": worst})
    gates = {"roots={0.5,1.5,2.5}": [x for x, _ in roots] == [0.5, 1.5, 2.5]}
    if prof is not None:
        gates["formula_match<1e-6"] = worst < 1e-6
    return summary, gates, files, {}


def _exp_cone(p, seed, out):
    from .cone_geometry import (cone_metric_family, curvature_bound_sweep, dtheta_eigenvalue,
                                flat_disk, model_weinstein_size, second_fundamental_form_curve)

    lam0 = dtheta_eigenvalue(cone_metric_family(0.0), p["N"])
    flat = dtheta_eigenvalue(flat_disk(), p["N"])
    rows = []
    for t in p["ts"]:
        lt = dtheta_eigenvalue(cone_metric_family(float(t)), p["N"])
        rows.append((float(t), lt.lam, abs(lt.lam - lam0.lam)))
    fpath = write_csv(out / "eig.csv", ["t", "lambda_t", "abs_gap"], rows)
    curv = []
    for t in p["curvature_ts"]:
        t = float(t)
        K0 = float(second_fundamental_form_curve(t, np.array([0.0]))[0])
        bound = curvature_bound_sweep((t,))[t]
        curv.append((t, K0, bound, model_weinstein_size(t)))
    cpath = write_csv(out / "curvature.csv", ["t", "K_branch", "weighted_K_max", "weinstein_size"], curv)
    gaps = [g for _, _, g in sorted(rows, reverse=True)]
    j0sq = 2.404825557695773**2
    gates = {"gap_strictly_decreasing": all(a > b for a, b in zip(gaps, gaps[1:])),
             "lambda_t>=0.5*lambda_0": all(l >= 0.5 * lam0.lam for _, l, _ in rows),
             "resolution_agreement<1%": lam0.rel_disagreement < 0.01,
             "flat_disk_within_0.1%": abs(flat.lam - j0sq) / j0sq < 1e-3}
    if curv:
        gates["K_branch=2/t^2"] = all(abs(K - 2 / t**2) <= 1e-6 * 2 / t**2 for t, K, _, _ in curv)
        gates["weighted_K_bounded"] = max(b for _, _, b, _ in curv) <= 2.0 + 1e-9
        gates["size=t^2/2"] = all(abs(w - t * t / 2) <= 1e-12 * t * t for t, _, _, w in curv)
    return {"lambda_0": lam0.lam, "flat": flat.lam, "curvature": curv}, gates, [fpath, cpath], {"eigen": rows}


def _exp_link(p, seed, out):
    from .branch_topology import PD_CODES, bundled_diagram, double_cover_homology, make_diagram

    pd = p["pd"]
    d = bundled_diagram(pd) if pd in PD_CODES or pd == "unknot" else make_diagram(pd)
    h = double_cover_homology(d)
    summary = {"det": h.determinant, "torsion": h.torsion, "b1": h.b1,
               "b1_positive": h.b1_positive, "components": d.components()}
    fpath = out / "link.json"
    fpath.write_text(json.dumps(_jsonable(summary), sort_keys=True, indent=2) + "\n")
    gates = {"parity": (h.determinant % 2 == 0) == (d.components() > 1)}
    return summary, gates, [fpath], {}


def _exp_obstruct(p, seed, out):
    from .branch_topology import (CoveringData, betti_obstruction, circle_double_cover,
                                  sphere_involution_example, tetrahedron_torus_cover,
                                  transfer_les_check)

    cov = p["covering"]
    cd = CoveringData(**cov) if cov else sphere_involution_example(5)
    summary = {"verdict": betti_obstruction(cd), "input": asdict(cd)}
    gates = {}
    if p["les"]:
        for cx in (tetrahedron_torus_cover(), circle_double_cover()):
            rep = transfer_les_check(cx)
            summary[f"les_{cx.name}"] = {"exact": rep.exact, "dims": rep.dims, "ranks": rep.map_ranks}
            gates[f"les_exact_{cx.name}"] = rep.exact
    fpath = out / "verdict.json"
    fpath.write_text(json.dumps(_jsonable(summary), sort_keys=True, indent=2) + "\n")
    return summary, gates, [fpath], {}


EXPERIMENTS = {
    "local-model": _exp_local_model,
    "torus-solve": _exp_torus,
    "z2-solve": _exp_z2,
    "iterate": _exp_iterate,
    "mellin": _exp_mellin,
    "cone-eig": _exp_cone,
    "link": _exp_link,
    "obstruct": _exp_obstruct,
}


def run_experiment(cfg):
    """Run one named pipeline; writes CSV/JSON outputs, plot data and manifest.json."""
    cfg = cfg.validated()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "config": asdict(cfg),
        "versions": {"slag": __version__, "python": platform.python_version(),
                     "numpy": np.__version__, "scipy": scipy.__version__},
    }
    t0 = time.perf_counter()
    try:
        summary, gates, files, plots = EXPERIMENTS[cfg.id](cfg.params, cfg.seed, out)
    except Exception as exc:
        manifest.update(status="error", error=f"{type(exc).__name__}: {exc}",
                        wall_time=time.perf_counter() - t0)
        (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
        raise
    files = [Path(f) for f in files] + [Path(f) for f in emit_plot_data(plots, out)]
    manifest.update(
        status="ok", summary=summary, gates=gates, gates_passed=all(gates.values()),
        outputs={f.name: _sha(f) for f in files}, wall_time=time.perf_counter() - t0)
    (out / "manifest.json").write_text(json.dumps(_jsonable(manifest), indent=2, sort_keys=True) + "\n")
    return _jsonable(manifest)


# --------------------------------------------------------------------- cli

def _run(ctx, exp_id, config, out, seed, params):
    if config:
        cfg = ExperimentConfig.from_json(Path(config).read_text())
        if cfg.id != exp_id:
            raise click.UsageError(f"config id {cfg.id!r} does not match command {exp_id!r}")
        merged = dict(cfg.params)
        merged.update({k: v for k, v in params.items() if v is not None})
        cfg = ExperimentConfig(exp_id, merged, out or cfg.out, cfg.seed if seed is None else seed)
    else:
        cfg = ExperimentConfig(exp_id, {k: v for k, v in params.items() if v is not None},
                               out or "runs/" + exp_id, seed or 0)
    try:
        man = run_experiment(cfg)
    except UsageError as exc:
        raise click.UsageError("\n".join(exc.problems))
    for k, v in man["gates"].items():
        click.echo(f"{'PASS' if v else 'FAIL'}  {k}")
    click.echo(f"manifest: {Path(cfg.out) / 'manifest.json'}")
    ctx.exit(0 if man["gates_passed"] else 1)


def _common(f):
    f = click.option("--seed", type=int, default=None)(f)
    f = click.option("--out", type=click.Path(), default=None, help="output directory")(f)
    f = click.option("--config", type=click.Path(exists=True), default=None)(f)
    return f


def _floats(text):
    return [float(v) for v in text.split(",")] if text else None


@click.group()
@click.version_option(__version__)
def main():
    """Special Lagrangian branched-deformation experiments."""


@main.command("residual")
@_common
@click.option("--k", type=int, default=None)
@click.option("--t", type=float, default=None)
@click.option("--n-samples", type=int, default=None)
@click.option("--identity-samples", type=int, default=None,
              help="random symmetric matrices for the determinant identity check (0 skips)")
@click.pass_context
def residual_cmd(ctx, config, out, seed, k, t, n_samples, identity_samples):
    """Pullback residuals of the local model curves."""
    _run(ctx, "local-model", config, out, seed,
         {"k": k, "t": t, "n_samples": n_samples, "identity_samples": identity_samples})


@main.command("solve-torus")
@_common
@click.option("--n", type=int, default=None)
@click.option("--N", "N", type=int, default=None)
@click.option("--hess", type=float, default=None)
@click.pass_context
def solve_torus_cmd(ctx, config, out, seed, n, N, hess):
    """Nearby special Lagrangian on the flat torus."""
    _run(ctx, "torus-solve", config, out, seed, {"n": n, "N": N, "hess": hess})


@main.group("z2")
def z2_group():
    """Twisted Poisson problems on the double cover."""


@z2_group.command("solve")
@_common
@click.option("--rhs", type=click.Path(exists=True), default=None, help="JSON list of source terms")
@click.pass_context
def z2_solve_cmd(ctx, config, out, seed, rhs):
    terms = json.loads(Path(rhs).read_text()) if rhs else None
    if isinstance(terms, dict):
        terms = terms.get("terms")
    _run(ctx, "z2-solve", config, out, seed, {"terms": terms})


@main.command("iterate")
@_common
@click.option("--model", type=click.Choice(["c3-conf"]), default="c3-conf")
@click.option("--orders", type=int, default=None, help="number of correction steps")
@click.option("--ts", type=str, default=None)
@click.pass_context
def iterate_cmd(ctx, config, out, seed, model, orders, ts):
    """Residual ladder of the conformally flat demo family."""
    _run(ctx, "iterate", config, out, seed, {"orders": orders, "ts": _floats(ts)})


@main.command("mellin")
@_common
@click.option("--input", "input_", type=click.Path(exists=True), default=None)
@click.option("--zeta-line", type=float, default=None, help="imaginary part of the test line")
@click.pass_context
def mellin_cmd(ctx, config, out, seed, input_, zeta_line):
    """Indicial roots and Mellin transforms of radial profiles."""
    _run(ctx, "mellin", config, out, seed, {"input": input_, "zeta_line": zeta_line})


@main.group("cone")
def cone_group():
    """Cone metrics and their smoothings."""


@cone_group.command("eig")
@_common
@click.option("--t", "ts", type=str, default=None)
@click.option("--N", "N", type=int, default=None)
@click.option("--curvature-t", "cts", type=str, default=None, help="t values for the curvature sweep")
@click.pass_context
def cone_eig_cmd(ctx, config, out, seed, ts, N, cts):
    _run(ctx, "cone-eig", config, out, seed, {"ts": _floats(ts), "N": N, "curvature_ts": _floats(cts)})


@main.group("link")
def link_group():
    """Link determinants and double branched covers."""


@link_group.command("det")
@_common
@click.option("--pd", type=str, default=None, help="PD code or a bundled name")
@click.pass_context
def link_det_cmd(ctx, config, out, seed, pd):
    _run(ctx, "link", config, out, seed, {"pd": pd})


@main.command("obstruct")
@_common
@click.option("--no-les", is_flag=True, default=False)
@click.pass_context
def obstruct_cmd(ctx, config, out, seed, no_les):
    """Betti-number verdict for a covering described in JSON."""
    params = {"les": False} if no_les else {}
    if config:
        d = json.loads(Path(config).read_text())
        if "id" not in d:
            params["covering"] = d
            config = None
    _run(ctx, "obstruct", config, out, seed, params)


if __name__ == "__main__":
    sys.exit(main())
