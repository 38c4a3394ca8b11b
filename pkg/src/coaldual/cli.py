"""Command-line front end.

    coaldual density   --alpha 1 --beta 1 --x 0.5 --y 0.5 --t 1 --method both
    coaldual lod       pmf --theta 2 --t 0.5 [--n 20]
    coaldual subforest pmf --theta 2 --t 0.6931471805599453
    coaldual spectra   poisson --alpha 1 --beta 2 --r 0.5 --x 0.3 --y 0.7
    coaldual simulate  forest --n inf --theta 2 --t 0.5 --replicates 10000
    coaldual verify    --suite all --seed 42

Results go to stdout (or ``--out``) as JSON ``{meta, rows}`` or as CSV with
a ``# meta:`` comment line. Exit status: 0 success, 1 failed verification,
2 invalid input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from importlib import metadata

import numpy as np

from .errors import (
    CombinatorialLimit,
    ConvergenceError,
    DivergentLambda,
    DomainError,
    NonTerminatingSeries,
    PrecisionLoss,
    TruncationError,
)
from .series import DEFAULT_CONTROL, ProbVector, SeriesControl
from .special import DirichletParams, ModelParams

EXIT_OK, EXIT_VERIFY, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
SEED_ENV = "CDL_DEFAULT_SEED"

ACTIONS = {
    "density": (),
    "lod": ("pmf", "q", "matrix"),
    "subforest": ("pmf", "pgf", "transition", "rate", "mc"),
    "spectra": ("dn", "mixing", "nu-tilde", "poisson", "kernel", "gasper", "cm", "qscan"),
    "simulate": ("wf", "forest", "dual2d", "subordinated"),
    "verify": (),
}


class InputError(ValueError):
    pass


def _version() -> str:
    try:
        return metadata.version("coaldual")
    except metadata.PackageNotFoundError:
        return "unknown"


def _count(text: str):
    """Integer count, or ``inf`` for a start at infinity."""
    from .subordination import INF

    if text.strip().lower() in ("inf", "infinity", "oo"):
        return INF
    try:
        value = int(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected an integer or 'inf', got {text!r}") from exc
    return value


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model and evaluation")
    g.add_argument("--alpha", type=float)
    g.add_argument("--beta", type=float)
    g.add_argument("--eps", type=_floats, help="comma-separated mutation rates of a d-type model")
    g.add_argument("--theta", type=float)
    g.add_argument("--t", type=float)
    g.add_argument("--x", type=_floats, help="point, or comma-separated simplex point")
    g.add_argument("--y", type=_floats)
    g.add_argument("--z", type=float)
    g.add_argument("--n", type=_count, help="count or 'inf'")
    g.add_argument("--k", type=int)
    g.add_argument("--i", type=_count, help="count or 'inf'")
    g.add_argument("--j", type=int)
    g.add_argument("--s", type=float)
    g.add_argument("--r", type=float)
    g.add_argument("--method", choices=("eigen", "dual", "both", "series", "mc"))
    g.add_argument("--killed", action="store_true", help="subordinated density with killing")
    o = common.add_argument_group("control and output")
    o.add_argument("--replicates", type=int, default=10**5)
    o.add_argument("--seed", type=int)
    o.add_argument("--max-terms", type=int, default=DEFAULT_CONTROL.max_terms)
    o.add_argument("--tail-tol", type=float, default=DEFAULT_CONTROL.tail_tol)
    o.add_argument("--out")
    o.add_argument("--format", choices=("json", "csv"), default="json")
    o.add_argument("--nu-file", help="CSV with header atom,mass")
    o.add_argument("--h-file", help="CSV with header atom,mass")
    o.add_argument("--suite", default="all", help="'all', suite names or criterion numbers, comma-separated")

    parser = argparse.ArgumentParser(prog="coaldual", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for command, actions in ACTIONS.items():
        p = sub.add_parser(command, parents=[common])
        if actions:
            p.add_argument("action", choices=actions)
    return parser


# ---------------------------------------------------------------------------
# helpers


def _need(args, *names):
    missing = [n for n in names if getattr(args, n.replace("-", "_")) is None]
    if missing:
        raise InputError(f"{args.command}: missing --{', --'.join(missing)}")


def _scalar(args, name):
    vals = getattr(args, name)
    if vals is None:
        raise InputError(f"{args.command}: missing --{name}")
    if len(vals) != 1:
        raise InputError(f"--{name} must be a single number here")
    return vals[0]


def _params(args) -> ModelParams:
    _need(args, "alpha", "beta")
    return ModelParams(args.alpha, args.beta)


def _theta(args) -> float:
    if args.theta is not None:
        return args.theta
    if args.alpha is not None and args.beta is not None:
        return args.alpha + args.beta
    raise InputError(f"{args.command}: give --theta (or --alpha and --beta)")


def _control(args) -> SeriesControl:
    return SeriesControl(max_terms=args.max_terms, tail_tol=args.tail_tol)


def _measure(path, name, probability=False):
    from .spectra import DiscreteMeasure

    if path is None:
        raise InputError(f"missing --{name}")
    return DiscreteMeasure.from_csv(path, is_probability=probability)


def _num(v):
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def _pmf_rows(pv: ProbVector, extra: dict) -> list[dict]:
    rows = [{"k": k + pv.offset, "value": float(p), **extra} for k, p in enumerate(pv.probs)]
    rows.append({"k": "norm_defect", "value": float(pv.norm_defect), **extra})
    return rows


# ---------------------------------------------------------------------------
# commands


def cmd_density(args):
    from . import jacobi, subordination

    method = args.method or "both"
    if method in ("mc", "series"):
        raise InputError("density supports --method eigen, dual or both")
    _need(args, "t")
    ctl = _control(args)
    rows = []
    if args.eps is not None:
        dp = DirichletParams(args.eps)
        if args.x is None or args.y is None:
            raise InputError("density: missing --x or --y")
        pairs = {"eigen": jacobi.density_ddim_eigen, "dual": jacobi.density_ddim_dual}
        for m in (("eigen", "dual") if method == "both" else (method,)):
            v = pairs[m](args.x, args.y, args.t, dp, ctl)
            rows.append({"method": m, "value": v.value, "truncation_order": v.truncation_order})
        return rows
    params = _params(args)
    x, y = _scalar(args, "x"), _scalar(args, "y")
    if args.killed:
        pairs = {"eigen": subordination.subordinated_density_eigen, "dual": subordination.subordinated_density_1d}
    else:
        pairs = {"eigen": jacobi.density_1d_eigen, "dual": jacobi.density_1d_dual}
    for m in (("eigen", "dual") if method == "both" else (method,)):
        if args.killed:
            v = pairs[m](x, y, args.t, params, True, ctl)
        else:
            v = pairs[m](x, y, args.t, params, ctl)
        rows.append({"method": m, "value": v.value, "truncation_order": v.truncation_order,
                     "unreliable": bool(v.unreliable)})
    return rows


def cmd_lod(args):
    from . import lod
    from .subordination import INF

    theta = _theta(args)
    _need(args, "t")
    n = args.n
    if n is INF:
        n = None
    if args.action == "pmf":
        if n is None:
            pv = lod.q_entrance_vector(theta, args.t, ctl=_control(args), precise=True)
            return _pmf_rows(pv, {"start": "inf", "order": int(_control(args).max_terms)})
        pv = lod.q_finite_vector(n, theta, args.t)
        return _pmf_rows(pv, {"start": n, "order": n})
    if args.action == "matrix":
        _need(args, "n")
        if n is None:
            raise InputError("matrix needs a finite --n")
        Q = lod.q_finite_matrix(n, theta, args.t)
        return [{"i": i, "j": j, "value": float(Q[i, j]), "order": n} for i in range(n + 1) for j in range(i + 1)]
    _need(args, "k")
    method = args.method or "series"
    if method not in ("series", "mc", "both"):
        raise InputError("lod q supports --method series, mc or both")
    rows = []
    if method in ("series", "both"):
        v = lod.q_entrance(args.k, theta, args.t, _control(args)) if n is None else lod.q_finite(n, args.k, theta, args.t)
        rows.append({"method": "series", "k": args.k, "value": v, "order": n if n is not None else int(args.max_terms)})
    if method in ("mc", "both"):
        if n is None:
            est = lod.q_entrance_mc(args.k, theta, args.t, args.replicates, args.seed)
        else:
            est = lod.q_finite_mc(n, args.k, theta, args.t, args.replicates, args.seed)
        rows.append({"method": "mc", "k": args.k, "value": est.mean, "std_error": est.std_error,
                     "imag_mean": est.imag_mean, "replicates": est.replicates})
    return rows


def cmd_subforest(args):
    from . import subordination as sb

    theta = _theta(args)
    if args.action != "rate":
        _need(args, "t")
    if args.action == "pmf":
        pv = sb.forest_pmf_vector(theta, args.t)
        return _pmf_rows(pv, {"order": len(pv) - 1 + pv.offset})
    if args.action == "pgf":
        _need(args, "s")
        return [{"s": args.s, "value": sb.forest_pgf(args.s, theta, args.t), "order": 0}]
    if args.action == "transition":
        _need(args, "i", "j")
        i = args.i
        value = sb.forest_transition(i, args.j, theta, args.t)
        order = "closed" if i is sb.INF else i - args.j
        return [{"i": "inf" if i is sb.INF else i, "j": args.j, "value": value, "order": order}]
    if args.action == "rate":
        _need(args, "i", "j")
        i = args.i
        return [{"i": "inf" if i is sb.INF else i, "j": args.j,
                 "value": sb.forest_jump_rate(i, args.j, theta), "order": "closed"}]
    kmax = args.k if args.k is not None else 5
    ests = sb.forest_pmf_mc(theta, args.t, kmax=kmax, replicates=args.replicates, seed=args.seed)
    exact = sb.forest_pmf_vector(theta, args.t)
    return [{"k": k, "value": e.mean, "std_error": e.std_error, "closed_form": exact[k],
             "replicates": e.replicates} for k, e in enumerate(ests)]


def cmd_spectra(args):
    from . import spectra as sp
    from .subordination import nu_tilde_from_H, subordinated_dn

    params = _params(args)
    nmax = args.n if args.n is not None else 20
    if not isinstance(nmax, int):
        raise InputError("--n must be finite here")
    if args.action == "dn":
        nu = _measure(args.nu_file, "nu-file")
        sigma = args.s if args.s is not None else 0.0
        dn = sp.spectrum_array(nmax, sigma, nu, params)
        return [{"n": n, "value": float(v), "order": len(nu)} for n, v in enumerate(dn)]
    if args.action == "mixing":
        zlaw = _measure(args.nu_file, "nu-file", probability=True)
        rho = sp.rho_from_mixing(nmax, zlaw, params)
        low, x, y = sp.bivariate_scan(rho, params)
        rows = [{"n": n, "value": float(v), "order": nmax} for n, v in enumerate(rho.values)]
        rows.append({"n": "density_min", "value": low, "order": nmax})
        return rows
    if args.action == "nu-tilde":
        H = _measure(args.h_file, "h-file")
        lam, nu = nu_tilde_from_H(H, params, nmax=nmax, tol=args.tail_tol)
        dn = sp.spectrum_array(nmax, 0.0, nu, params)
        rows = [{"n": n, "value": float(dn[n]), "direct": subordinated_dn(n, H, params), "order": len(nu)}
                for n in range(nmax + 1)]
        rows.append({"n": "lambda", "value": lam, "direct": lam, "order": len(nu)})
        return rows
    if args.action == "poisson":
        _need(args, "r")
        x, y = _scalar(args, "x"), _scalar(args, "y")
        value = sp.jacobi_poisson_kernel(args.r, x, y, params)
        closed = sp.poisson_kernel_scale(params) * sp.jacobi_poisson_bilinear(
            args.r, 2 * x - 1, 2 * y - 1, params.beta - 1, params.alpha - 1
        )
        return [{"method": "series", "value": value, "order": "adaptive"},
                {"method": "bilinear", "value": closed, "order": "adaptive"}]
    if args.action == "kernel":
        _need(args, "z")
        x, y = _scalar(args, "x"), _scalar(args, "y")
        r = args.r if args.r is not None else 0.99
        kv = sp.kernel_K(x, y, args.z, params, n_terms=nmax, r=r)
        return [{"method": "truncated", "value": kv.truncated, "order": kv.n_terms},
                {"method": "smoothed", "value": kv.smoothed, "order": kv.smoothed_order}]
    if args.action == "qscan":
        from .subordination import scan_generalized_transitions

        nu = _measure(args.nu_file, "nu-file") if args.nu_file else sp.DiscreteMeasure.empty()
        sigma = args.s if args.s is not None else 0.0
        dn = sp.spectrum_array(nmax, sigma, nu, params)
        scan = scan_generalized_transitions(dn, params.theta, nmax=nmax)
        return [{"minimum": scan.minimum, "n": scan.n, "k": scan.k, "t": scan.t,
                 "abs_error": scan.abs_error, "negative": scan.negative, "order": nmax}]
    if args.action == "gasper":
        return [{"alpha": params.alpha, "beta": params.beta, "value": bool(sp.gasper_domain(params)), "order": 0}]
    nu = _measure(args.nu_file, "nu-file")
    lam = np.logspace(-2, 2, 41)
    rep = sp.cm_probe(lam, nu, params)
    return [{"passed": bool(rep.passed), "failed_order": rep.failed_order, "max_order": rep.max_order,
             "order": len(lam)}]


def cmd_simulate(args):
    from . import simulation as sim
    from .subordination import INF

    seed = args.seed
    R = args.replicates
    if R < 1:
        raise InputError("--replicates must be positive")
    _need(args, "t")
    if args.action == "forest":
        theta = _theta(args)
        n0 = args.n if args.n is not None else INF
        counts = sim.forest_terminal_counts(n0, theta, args.t, R, seed)
        pv = sim.empirical_pmf(counts)
        return _pmf_rows(pv, {"replicates": R})
    if args.action == "dual2d":
        _need(args, "n", "k")
        params = _params(args)
        if args.n is INF:
            raise InputError("dual2d needs a finite start")
        pairs = sim.simulate_dual2d((args.n, args.k), params, args.t, R, seed)
        keys, cnt = np.unique(pairs, axis=0, return_counts=True)
        return [{"l1": int(a), "l2": int(b), "value": c / R, "replicates": R} for (a, b), c in zip(keys, cnt)]
    params = _params(args)
    x0 = _scalar(args, "x")
    if args.action == "wf":
        cfg = sim.PathConfig(x0=x0, t_end=args.t)
        xt = sim.simulate_wf_terminal(cfg, params, R, seed)
    else:
        mode = "kill" if args.killed else "restart"
        xt = sim.simulate_subordinated_wf(x0, params, args.t, R, seed, mode=mode)
    xt = np.asarray(xt, dtype=float)
    fin = xt[np.isfinite(xt)]
    mean = float(fin.mean()) if fin.size else math.nan
    se = float(fin.std(ddof=1) / math.sqrt(fin.size)) if fin.size > 1 else math.nan
    return [{"statistic": "mean", "value": mean, "std_error": se, "replicates": R},
            {"statistic": "killed_fraction", "value": 1.0 - fin.size / R, "std_error": None, "replicates": R}]


def cmd_verify(args):
    from .verify import resolve_suites, run_verification

    try:
        suites = resolve_suites(args.suite)
    except KeyError as exc:
        raise InputError(str(exc.args[0])) from None
    report = run_verification(suites, args.seed)
    print(report.table(), file=sys.stderr)
    rows = []
    for r in report.results:
        row = {"criterion": r.criterion, "check": r.name, "status": "pass" if r.passed else "fail",
               "value": r.metric, "tolerance": r.tolerance, "detail": r.detail}
        rows.append(row)
    return rows, report.passed


COMMANDS = {
    "density": cmd_density,
    "lod": cmd_lod,
    "subforest": cmd_subforest,
    "spectra": cmd_spectra,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


# ---------------------------------------------------------------------------
# output


def _meta(args) -> dict:
    from .subordination import INF

    skip = {"out", "format", "command", "action"}
    if args.command != "verify":
        skip.add("suite")
    params = {}
    for key, value in sorted(vars(args).items()):
        if key in skip or value is None or value is False:
            continue
        if value is INF:
            value = "inf"
        params[key] = list(value) if isinstance(value, tuple) else value
    return {
        "command": args.command,
        "action": getattr(args, "action", None),
        "parameters": params,
        "seed": args.seed,
        "max_terms": args.max_terms,
        "tail_tol": args.tail_tol,
        "version": _version(),
    }


def render(meta: dict, rows: list[dict], fmt: str) -> str:
    rows = [{k: _num(v) for k, v in row.items()} for row in rows]
    if fmt == "json":
        return json.dumps({"meta": meta, "rows": rows}, indent=1) + "\n"
    buf = io.StringIO()
    buf.write("# meta: " + json.dumps(meta, sort_keys=True) + "\n")
    fields = []
    for row in rows:
        fields.extend(k for k in row if k not in fields)
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: ("" if v is None else repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.seed is None:
            args.seed = _default_seed()
        result = COMMANDS[args.command](args)
    except (InputError, DomainError, DivergentLambda, CombinatorialLimit) as exc:
        print(f"coaldual: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (PrecisionLoss, TruncationError, ConvergenceError, NonTerminatingSeries) as exc:
        print(f"coaldual: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"coaldual: invalid input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    passed = True
    if isinstance(result, tuple):
        result, passed = result
    text = render(_meta(args), result, args.format)
    if args.out:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if passed else EXIT_VERIFY


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
