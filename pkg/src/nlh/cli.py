"""Command-line interface: ``nlh <subcommand> ...``.

Every number printed or written here comes from the library modules; this
file only parses arguments and arranges output.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bands import band_threshold, early_exceedance_prob, max_band_exceedance
from .cox import cox_curve, fit_cox_exponential
from .data import (
    DataFormatError,
    NoEventsError,
    build_risk_path,
    kernel_smooth_hazard,
    nelson_aalen,
    read_discrete_csv,
    read_sample_csv,
    write_sample_csv,
)
from .discrete import DiscreteFitError, delta_plot, discrete_curve, discrete_model_from_id, fit_discrete
from .documents import SCHEMA_VERSION, curve_document, write_curve_csv, write_curves_json
from .engine import BAND_LEVEL, LogMinusPhiHat, OneMinusThetaS, TabulatedWeight, nlh_curve
from .fitting import DegenerateFitError, SingularInformationError, fit_ml, fit_profile, fit_window
from .models import InadmissibleParameterError, ProportionalModel, _read_table, model_from_id
from .power import mc_study, predict, scenario_from_dict
from .svg import Series, render_svg

__all__ = ["main", "build_parser"]

SEED_ENV = "NLH_SEED"
WEIGHTS = {"log": LogMinusPhiHat, "frailty": OneMinusThetaS}


class UsageError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Argument helpers


def _window(text: str | None):
    if text is None:
        return None
    try:
        a, b = (float(x) for x in text.split(","))
    except ValueError:
        raise UsageError(f"window must be 'a,b', got {text!r}") from None
    if not 0 <= a < b:
        raise UsageError("window needs 0 <= a < b")
    return a, b


def _fixed(items) -> dict[str, float]:
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"--fix expects name=value, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--fix {name}: {value!r} is not a number") from None
    return out


def _types(text: str, allowed: str) -> list[str]:
    types = [t.strip().upper() for t in text.split(",") if t.strip()]
    bad = [t for t in types if t not in allowed]
    if not types or bad:
        raise UsageError(f"plot types must be drawn from {','.join(allowed)}")
    return types


def _seed(value):
    if value is not None:
        return value
    env = os.environ.get(SEED_ENV)
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"{SEED_ENV} must be an integer") from None


def _suffixed(path: str, tag: str, many: bool) -> Path:
    p = Path(path)
    return p.with_name(f"{p.stem}_{tag}{p.suffix}") if many else p


def _load_sample(args, allow_covariates: bool = False):
    sample = read_sample_csv(args.data, tau=getattr(args, "tau", None))
    if sample.p_z and not allow_covariates:
        warnings.warn("covariate columns are ignored by this model", stacklevel=2)
        sample = sample.without_covariates()
    return sample


def _summary_lines(names, estimates, std_errors) -> list[str]:
    lines = [f"{'parameter':>12} {'estimate':>14} {'approx sd':>14}"]
    for name, est, se in zip(names, estimates, std_errors):
        lines.append(f"{name:>12} {est:14.6g} {se:14.6g}")
    return lines


def _weight(spec: str):
    if spec in WEIGHTS:
        return WEIGHTS[spec]()
    if spec.startswith("file:"):
        knots, values = _read_table(spec[len("file:"):])
        return TabulatedWeight(knots, values)
    raise UsageError(f"unknown weight {spec!r}; use log, frailty or file:<table>")


def _write_outputs(args, curves, fit_doc, names, std_errors, title):
    docs = [curve_document(c, names, std_errors) for c in curves]
    many = len(curves) > 1
    if args.out:
        if args.out.endswith(".json"):
            args.json = args.json or args.out
        else:
            args.csv = args.csv or args.out
    if args.csv:
        for c, d in zip(curves, docs):
            write_curve_csv(d, _suffixed(args.csv, c.plot, many))
    if args.json:
        write_curves_json(docs, args.json, fit_doc)
    if args.svg:
        Path(args.svg).write_text(render_svg(curves, band=args.band_level, title=title))


def _add_curve_outputs(p):
    p.add_argument("--band-level", type=float, default=BAND_LEVEL, help="half-width of the drawn band")
    p.add_argument("--csv", help="curve table; several types get a _<type> suffix")
    p.add_argument("--json", help="all curves with metadata as one JSON document")
    p.add_argument("--svg", help="overlay plot of the curves")
    p.add_argument("--out", help="curve output; .json selects JSON, anything else CSV")


def _add_fit_options(p):
    p.add_argument("--data", required=True, help="CSV with time,status[,entry][,z1..]")
    p.add_argument("--model", default="exponential", help="exponential, weibull, gompertz, frailty, gamma, cpfrailty or fixed:<file>")
    p.add_argument("--fix", action="append", metavar="NAME=VALUE", help="hold a parameter fixed (repeatable)")
    p.add_argument("--window", help="fit and plot on [a,b] only")
    p.add_argument("--tau", type=float, help="end of follow-up")
    p.add_argument("--profile", action="store_true", help="profile likelihood over the shape parameter")


def _fit(args, sample):
    model = model_from_id(args.model)
    fixed = _fixed(args.fix)
    if fixed:
        unknown = set(fixed) - set(model.names)
        if unknown:
            raise UsageError(f"unknown parameter(s) {', '.join(sorted(unknown))} for {args.model}")
        model = model.restrict(fixed)
    window = _window(args.window)
    if window is not None:
        return fit_window(model, sample, window)
    if args.profile:
        if not isinstance(model, ProportionalModel) or model.p != 2:
            raise UsageError("--profile needs a two-parameter proportional model")
        return fit_profile(model, sample)
    return fit_ml(model, sample)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_fit(args) -> int:
    sample = _load_sample(args)
    fit = _fit(args, sample)
    doc = fit.as_dict()
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        print(f"model {fit.model.describe()}  n={fit.n}  events={sample.n_events}  loglik={fit.loglik:.6g}")
        print("\n".join(_summary_lines(fit.names, fit.theta, fit.std_errors)))
    else:
        print(json.dumps(doc, indent=2, sort_keys=True))
    return 0


def cmd_curve(args) -> int:
    sample = _load_sample(args)
    fit = _fit(args, sample)
    types = _types(args.type, "ABC")
    weight = None
    if "C" in types:
        if args.weight is None:
            raise UsageError("Type C needs --weight")
        weight = _weight(args.weight)
    curves = [nlh_curve(fit, t, args.flavor, weight if t == "C" else None) for t in types]
    print(f"model {fit.model.describe()}  n={fit.n}  events={sample.n_events}")
    print("\n".join(_summary_lines(fit.names, fit.theta, fit.std_errors)))
    for c in curves:
        print(f"Type {c.plot} ({c.flavor}): max |NLH| = {c.max_abs():.4g}")
    _write_outputs(args, curves, fit.as_dict(), fit.names, fit.std_errors, f"NLH curves, {fit.model.describe()} model")
    path = build_risk_path(fit.sample)
    H, _ = nelson_aalen(path)
    t_end = float(path.edges[-1])
    t0 = fit.window[0] if fit.window else 0.0
    grid = np.linspace(t0, t_end, 201)
    if args.na_svg:
        model_H = fit.model.cum_hazard(grid, fit.theta) - fit.model.cum_hazard(np.array([t0]), fit.theta)
        na = Series(np.concatenate([[t0], H.knots]), np.concatenate([[0.0], H.values]), "Nelson-Aalen", step=True)
        Path(args.na_svg).write_text(
            render_svg([na, Series(grid, model_H, "fitted model", dashed=True)], band=None, ylabel="cumulative hazard")
        )
    if args.hazard_svg:
        bw = args.bandwidth or 0.2 * t_end
        smooth = kernel_smooth_hazard(H, bw, grid)
        fitted = fit.model.hazard(np.maximum(grid, 1e-12 * t_end), fit.theta)
        Path(args.hazard_svg).write_text(
            render_svg(
                [Series(grid, smooth, f"kernel estimate (h={bw:g})"), Series(grid, fitted, "fitted model", dashed=True)],
                band=None,
                ylabel="hazard",
            )
        )
    return 0


def cmd_cox(args) -> int:
    sample = read_sample_csv(args.data, tau=args.tau)
    if sample.p_z == 0:
        raise UsageError("the regression model needs covariate columns z1..zp")
    fix_beta = None
    if args.fix_beta is not None:
        try:
            fix_beta = [float(x) for x in args.fix_beta.split(",")]
        except ValueError:
            raise UsageError("--fix-beta takes comma-separated numbers") from None
        if len(fix_beta) not in (1, sample.p_z):
            raise UsageError(f"--fix-beta needs 1 or {sample.p_z} values")
    fit = fit_cox_exponential(sample, fix_beta)
    if not fit.converged:
        print(
            f"warning: Newton iterations did not converge (relative gradient {fit.grad_norm:.3g}, "
            f"max |beta| = {np.max(np.abs(fit.beta)):.3g}); estimates may diverge",
            file=sys.stderr,
        )
    print(f"model theta*exp(beta'z)  n={fit.n}  events={sample.n_events}  loglik={fit.loglik:.6g}")
    if not fit.converged:
        # standard errors and curves are meaningless along a diverging direction
        print("\n".join(f"{name:>12} {est:14.6g}" for name, est in zip(fit.names, fit.params)))
        return 3
    print("\n".join(_summary_lines(fit.names, fit.params, fit.std_errors)))
    curves = [cox_curve(fit, t) for t in _types(args.type, "AB")]
    for c in curves:
        print(f"Type {c.plot}: max |NLH| = {c.max_abs():.4g}")
    _write_outputs(args, curves, fit.as_dict(), fit.names, fit.std_errors, "NLH curves, exponential regression")
    return 0


def cmd_discrete(args) -> int:
    table = read_discrete_csv(args.data, n=args.n)
    fit = fit_discrete(discrete_model_from_id(args.model), table)
    print(f"model {fit.model.name}  n={fit.n}  intervals={table.k}  loglik={fit.loglik:.6g}")
    print("\n".join(_summary_lines(fit.names, fit.theta, fit.std_errors)))
    types, want_delta = _discrete_plots(args)
    curves = [discrete_curve(fit, t) for t in types]
    for c in curves:
        print(f"Type {c.plot}: max |NLH| = {c.max_abs():.4g}")
    _write_outputs(args, curves, fit.as_dict(), fit.names, fit.std_errors, f"discrete NLH curves, {fit.model.name}")
    if want_delta:
        dp = delta_plot(fit)
        print("interval residuals: " + " ".join(f"{v:.3g}" if ok else "nan" for v, ok in zip(dp.values, dp.defined)))
        if args.delta_svg:
            Path(args.delta_svg).write_text(
                render_svg([Series(dp.midpoints, np.where(dp.defined, dp.values, np.nan), "interval residual")], band=args.band_level)
            )
    return 0


def _discrete_plots(args) -> tuple[list[str], bool]:
    if args.plot is None:
        return _types(args.type, "AB"), bool(args.delta_svg)
    names = [p.strip() for p in args.plot.split(",") if p.strip()]
    allowed = {"curveA": "A", "curveB": "B", "delta": None}
    bad = [p for p in names if p not in allowed]
    if not names or bad:
        raise UsageError("--plot takes curveA, curveB and/or delta")
    return [allowed[p] for p in names if allowed[p]], "delta" in names


def cmd_power(args) -> int:
    doc = json.loads(Path(args.scenario).read_text())
    scenario = scenario_from_dict(doc)
    model = model_from_id(args.model or doc.get("model", "exponential"))
    probes = []
    for p in (args.probes or "median").split(","):
        p = p.strip()
        probes.append(p if p == "median" else float(p))
    seed = _seed(args.seed)
    types = _types(args.type, "AB")
    flavors = [f.strip() for f in args.flavor.split(",")]
    summary = mc_study(
        scenario,
        model,
        types,
        flavors,
        reps=args.reps,
        probes=probes,
        seed=seed,
        band_level=args.band_level,
        workers=args.workers,
    )
    out = {
        "schema_version": SCHEMA_VERSION,
        "software_version": __version__,
        "seed": seed,
        "model": model.describe(),
        "scenario": scenario.describe(),
        "summary": summary.as_dict(),
    }
    numeric = [p for p in probes if p != "median"]
    if numeric and not args.no_predict:
        out["predictions"] = {t: predict(model, scenario.truth, scenario.n, numeric, t, scenario.censoring).as_dict() for t in types}
    text = json.dumps(out, indent=2, sort_keys=True, default=_json_default)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return 0


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def cmd_simulate(args) -> int:
    doc = json.loads(Path(args.scenario).read_text())
    if args.n is not None:
        doc = dict(doc, n=args.n)
    scenario = scenario_from_dict(doc)
    sample = scenario.simulate(_seed(args.seed))
    write_sample_csv(sample, args.out)
    print(f"wrote {sample.n} subjects, {sample.n_events} events to {args.out}")
    return 0


def cmd_band(args) -> int:
    out = {}
    if args.early:
        out["early"] = {str(k): early_exceedance_prob(k, args.threshold) for k in range(1, args.early + 1)}
    else:
        if args.m is not None:
            out["exceedance"] = max_band_exceedance(args.b1, args.b2, args.m)
        if args.level is not None:
            out["threshold"] = band_threshold(args.b1, args.b2, args.level)
        if not out:
            raise UsageError("give --m, --level or --early")
        out["band"] = [args.b1, args.b2]
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlh", description="Normalised local hazard curves for survival models.")
    parser.add_argument("--version", action="version", version=f"nlh {__version__} (schema {SCHEMA_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="maximum likelihood fit")
    _add_fit_options(p)
    p.add_argument("--out", help="write the fit as JSON and print a summary")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("curve", help="NLH curves for a fitted model")
    _add_fit_options(p)
    p.add_argument("--type", default="A,B", help="comma-separated plot types from A, B, C")
    p.add_argument("--flavor", "--variance", dest="flavor", choices=["pm", "np"], help="variance estimate; default depends on the model")
    p.add_argument(
        "--weight",
        "--cweight",
        dest="weight",
        help="Type C weight: log (log s - phi), frailty (1 - theta s) or file:<t,G table>",
    )
    p.add_argument("--na-svg", help="Nelson-Aalen plot with the fitted cumulative hazard")
    p.add_argument("--hazard-svg", help="kernel-smoothed hazard with the fitted hazard")
    p.add_argument("--bandwidth", type=float, help="kernel bandwidth (default 0.2 * last time)")
    _add_curve_outputs(p)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("cox", help="exponential regression and its NLH curves")
    p.add_argument("--data", required=True)
    p.add_argument("--tau", type=float)
    p.add_argument("--type", default="A,B")
    p.add_argument("--fix-beta", help="hold the coefficients fixed, e.g. 0 or 0.5,-1")
    _add_curve_outputs(p)
    p.set_defaults(func=cmd_cox)

    p = sub.add_parser("discrete", help="discrete-time life table fit and curves")
    p.add_argument("--data", required=True, help="CSV with left,right,at_risk,events")
    p.add_argument("--model", default="constant", help="constant or a continuous model id grouped over the intervals")
    p.add_argument("--n", type=int, help="normalising sample size (default: largest risk set)")
    p.add_argument("--type", default="B")
    p.add_argument("--plot", help="comma-separated curveA, curveB, delta (overrides --type)")
    p.add_argument("--delta-svg", help="per-interval standardized residuals")
    _add_curve_outputs(p)
    p.set_defaults(func=cmd_discrete)

    p = sub.add_parser("power", help="Monte Carlo calibration and power study")
    p.add_argument("--scenario", required=True, help="scenario JSON")
    p.add_argument("--model", help="model to test (default from the scenario, else exponential)")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", type=int, help=f"master seed (default ${SEED_ENV} or 0)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--type", default="A,B")
    p.add_argument("--flavor", default="pm", help="comma-separated variance flavors")
    p.add_argument("--probes", help="comma-separated times or 'median'")
    p.add_argument("--band-level", type=float, default=BAND_LEVEL)
    p.add_argument("--no-predict", action="store_true", help="skip the analytic predictions")
    p.add_argument("--out")
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("simulate", help="draw a sample from a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("band", help="band-maximum and early-time exceedance calculators")
    p.add_argument("--b1", type=float, default=0.1)
    p.add_argument("--b2", type=float, default=0.9)
    p.add_argument("--m", type=float, help="threshold for the band-maximum probability")
    p.add_argument("--level", type=float, help="find the threshold with this exceedance probability")
    p.add_argument("--early", type=int, help="exceedance at the first K events")
    p.add_argument("--threshold", type=float, default=BAND_LEVEL)
    p.set_defaults(func=cmd_band)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "band_level", 1.0) <= 0:
        parser.error("--band-level must be positive")
    for name in ("data", "scenario"):
        path = getattr(args, name, None)
        if path is not None and not Path(path).is_file():
            print(f"nlh: error: no such file: {path}", file=sys.stderr)
            return 2
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.showwarning = _show_warning
            return args.func(args)
    except UsageError as exc:
        print(f"nlh: error: {exc}", file=sys.stderr)
        return 2
    except (
        DataFormatError,
        NoEventsError,
        DegenerateFitError,
        SingularInformationError,
        InadmissibleParameterError,
        DiscreteFitError,
        ValueError,
        json.JSONDecodeError,
    ) as exc:
        print(f"nlh: error: {exc}", file=sys.stderr)
        return 1


def _show_warning(message, category, filename, lineno, file=None, line=None):
    print(f"nlh: warning: {message}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
