"""Command-line surface: simulate, analyze, check-propriety, da-sweep, ym.

Every command writes machine-readable output (JSON, with CSV side files for
plotting) plus a run manifest, and reports through exit codes:

    0  success
    2  usage or validation error
    3  analysis completed but posterior propriety is doubtful
    4  analytic propriety verdict and empirical tail fit disagree
    5  numeric failure (quadrature did not converge, tail fit impossible)
"""

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

__version__ = "0.1.0"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IMPROPER = 3
EXIT_DISAGREEMENT = 4
EXIT_NUMERIC = 5


def _configure_threads() -> None:
    """Honor CRBAYES_THREADS for the BLAS pools before numpy gets imported."""
    want = os.environ.get("CRBAYES_THREADS")
    if not want:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, want)


def _digest(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out_path: Path, command: str, params: dict, seed, input_path: Path | None) -> None:
    manifest = {
        "command": command,
        "params": params,
        "seed": seed,
        "version": __version__,
        "input_digest": _digest(input_path) if input_path else None,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    Path(str(out_path) + ".manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _probability(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not a probability in [0, 1]")
    return value


def _positive(text: str) -> float:
    value = float(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"{text} is not positive")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError(f"{text} is not a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="crbayes",
        description="Bayesian population-size posteriors and propriety checks "
        "for closed capture-recapture data",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a dataset and write it with a manifest")
    sim.add_argument("--model", choices=("m0", "mh"), required=True)
    sim.add_argument("--n", type=_positive_int, required=True, help="true population size")
    sim.add_argument("--p", type=_probability, help="detection probability (m0)")
    sim.add_argument("--alpha", type=_positive, help="Beta shape for per-animal rates (mh)")
    sim.add_argument("--beta", type=_positive, help="Beta shape for per-animal rates (mh)")
    sim.add_argument("--k", type=_positive_int, required=True, help="sampling occasions")
    sim.add_argument("--seed", type=int, required=True)
    sim.add_argument("--out", type=Path, required=True)
    sim.add_argument("--format", choices=("json", "csv"), default=None)

    ana = sub.add_parser("analyze", help="posterior of N for a dataset")
    ana.add_argument("--data", type=Path, required=True)
    ana.add_argument("--model", choices=("m0", "mh"), required=True)
    ana.add_argument("--n-prior", choices=("uniform", "scale"), default="uniform")
    ana.add_argument("--a", type=_positive, default=1.0, help="Beta prior shape on p (m0)")
    ana.add_argument("--b", type=_positive, default=1.0, help="Beta prior shape on p (m0)")
    ana.add_argument("--shape-a", type=_positive, default=2.0, help="Gamma shape on alpha (mh)")
    ana.add_argument("--shape-b", type=_positive, default=2.0, help="Gamma shape on beta (mh)")
    ana.add_argument("--scale-c", type=_positive, default=1.0, help="common Gamma scale (mh)")
    ana.add_argument("--n-max", type=_positive_int, default=10_000)
    ana.add_argument("--level", type=_probability, default=0.95)
    ana.add_argument("--nodes", type=_positive_int, default=64, help="quadrature nodes per axis (mh)")
    ana.add_argument("--check-nodes", type=_positive_int, default=96)
    ana.add_argument("--quad-rtol", type=_positive, default=1e-4)
    ana.add_argument("--improper-margin", type=_positive, default=0.05)
    ana.add_argument("--out", type=Path, required=True, help="output prefix (.json/.csv added)")

    chk = sub.add_parser("check-propriety", help="analytic verdict vs fitted tail exponent")
    chk.add_argument("--model", choices=("m0", "mh", "ym"))
    chk.add_argument("--data", type=Path, help="dataset (m0/mh)")
    chk.add_argument("--n-prior", choices=("uniform", "scale"), default="uniform")
    chk.add_argument("--a", type=_positive, default=1.0, help="Beta shape on p (m0)")
    chk.add_argument("--b", type=_positive, default=1.0, help="Beta shape on p (m0)")
    chk.add_argument("--shape-a", type=_positive, default=2.0, help="Gamma shape on alpha (mh)")
    chk.add_argument("--shape-b", type=_positive, default=2.0, help="Gamma shape on beta (mh)")
    chk.add_argument("--scale-c", type=_positive, default=1.0)
    chk.add_argument("--n", type=_positive_int, help="observed count (ym)")
    chk.add_argument("--k", type=_positive_int, help="cells (ym)")
    chk.add_argument("--delta", type=_positive, help="Dirichlet parameter (ym)")
    chk.add_argument("--fit-lo", type=_positive, default=None)
    chk.add_argument("--fit-hi", type=_positive, default=None)
    chk.add_argument("--fit-points", type=_positive_int, default=50)
    chk.add_argument("--tolerance", type=_positive, default=0.05)
    chk.add_argument("--nodes", type=_positive_int, default=64)
    chk.add_argument("--check-nodes", type=_positive_int, default=96)
    chk.add_argument("--quad-rtol", type=_positive, default=1e-4)
    chk.add_argument(
        "--synthetic-exponent",
        type=_positive,
        default=None,
        help="fit a pure N^-d kernel instead of a model (sanity mode)",
    )
    chk.add_argument("--out", type=Path, required=True, help="output prefix (.json/.csv added)")

    swp = sub.add_parser("da-sweep", help="posterior mean of N versus augmented size M")
    swp.add_argument("--data", type=Path, required=True)
    swp.add_argument("--m", required=True, help="comma-separated augmented sizes, e.g. 200,500,1000")
    swp.add_argument("--iters", type=_positive_int, default=20_000)
    swp.add_argument("--burnin", type=int, default=2_000)
    swp.add_argument("--thin", type=_positive_int, default=1)
    swp.add_argument("--seed", type=int, default=0)
    swp.add_argument("--a-psi", type=_positive, default=1.0)
    swp.add_argument("--b-psi", type=_positive, default=1.0)
    swp.add_argument("--a-p", type=_positive, default=1.0)
    swp.add_argument("--b-p", type=_positive, default=1.0)
    swp.add_argument("--out", type=Path, required=True, help="output prefix (.json/.csv added)")

    ym = sub.add_parser("ym", help="Dirichlet-multinomial posterior of N")
    ym.add_argument("--n", type=_positive_int, required=True, help="observed count")
    ym.add_argument("--k", type=_positive_int, required=True, help="cells")
    ym.add_argument("--delta", type=_positive, required=True)
    ym.add_argument("--prior", choices=("uniform", "scale"), default="uniform")
    ym.add_argument("--n-max", type=_positive_int, default=100_000)
    ym.add_argument("--level", type=_probability, default=0.95)
    ym.add_argument("--improper-margin", type=_positive, default=0.05)
    ym.add_argument("--out", type=Path, required=True, help="output prefix (.json/.csv added)")
    return parser


def _cmd_simulate(args) -> int:
    from .data import simulate_m0, simulate_mh, store_history

    if args.model == "m0":
        if args.p is None:
            raise SystemExit(_usage("simulate --model m0 needs --p"))
        history = simulate_m0(args.n, args.p, args.k, args.seed)
        params = {"model": "m0", "n": args.n, "p": args.p, "k": args.k, "format": args.format}
    else:
        if args.alpha is None or args.beta is None:
            raise SystemExit(_usage("simulate --model mh needs --alpha and --beta"))
        history = simulate_mh(args.n, args.alpha, args.beta, args.k, args.seed)
        params = {
            "model": "mh",
            "n": args.n,
            "alpha": args.alpha,
            "beta": args.beta,
            "k": args.k,
            "format": args.format,
        }
    store_history(history, args.out, fmt=args.format)
    _write_manifest(args.out, "simulate", params, args.seed, args.out)
    print(f"wrote {history.n_observed} observed histories over {history.k} occasions to {args.out}")
    return EXIT_OK


def _cmd_analyze(args) -> int:
    from .data import load_history, summarize
    from .likelihoods import BetaParams
    from .posterior import GammaPriors, MhMarginalKernel, m0_marginal_log_kernel, posterior_table

    history = load_history(args.data)
    stats = summarize(history)
    extra: dict = {"model": args.model, "n_prior": args.n_prior}
    if args.model == "m0":
        beta = BetaParams(args.a, args.b)
        log_kernel = lambda n: m0_marginal_log_kernel(n, stats, beta)
        extra["detection_prior"] = {"a": args.a, "b": args.b}
    else:
        kern = MhMarginalKernel(
            stats,
            GammaPriors(args.shape_a, args.shape_b, args.scale_c),
            nodes=args.nodes,
            check_nodes=args.check_nodes,
            rtol=args.quad_rtol,
        )
        log_kernel = kern.log_kernel
        extra["detection_prior"] = {"shape_a": args.shape_a, "shape_b": args.shape_b, "scale_c": args.scale_c}

    table = posterior_table(
        log_kernel,
        args.n_prior,
        stats=stats,
        n_max=args.n_max,
        level=args.level,
        improper_margin=args.improper_margin,
    )
    if args.model == "mh":
        extra["quadrature"] = dict(kern.diagnostics)

    json_path = Path(str(args.out) + ".json")
    table.write_json(json_path, extra=extra)
    table.write_csv(Path(str(args.out) + ".csv"))
    _write_manifest(json_path, "analyze", _params_of(args), None, args.data)

    print(f"posterior of N on [{table.n_min}, {table.n_max}] ({args.model}, {args.n_prior} prior)")
    print(f"  mean = {table.mean:.4f}   sd = {table.sd:.4f}")
    print(f"  {int(table.level * 100)}% equal-tail CI = [{table.ci[0]:.0f}, {table.ci[1]:.0f}]")
    print(f"  tail mass beyond N_max ~ {table.tail_mass_estimate:.3e} (fitted exponent {table.tail_exponent:.3f})")
    if args.model == "mh":
        print(f"  quadrature max relative change {kern.diagnostics['max_rel_change']:.3e} "
              f"({kern.diagnostics['nodes']}^2 vs {kern.diagnostics['check_nodes']}^2 nodes)")
    for warning in table.warnings:
        print(f"  WARNING: {warning}", file=sys.stderr)
    return EXIT_IMPROPER if table.warnings else EXIT_OK


def _cmd_check_propriety(args) -> int:
    import numpy as np

    from .data import load_history, summarize
    from .likelihoods import BetaParams
    from .posterior import GammaPriors
    from .propriety import FitConfig, fit_tail_exponent, propriety_report, write_exponent_csv

    fit = FitConfig(
        n_lo=args.fit_lo, n_hi=args.fit_hi, points=args.fit_points, tolerance=args.tolerance
    )
    json_path = Path(str(args.out) + ".json")

    if args.synthetic_exponent is not None:
        d = args.synthetic_exponent
        log_kernel = lambda n: -d * np.log(n)
        lo = args.fit_lo if args.fit_lo is not None else 1e3
        hi = args.fit_hi if args.fit_hi is not None else 1e6
        fitted, stderr = fit_tail_exponent(log_kernel, lo, hi, args.fit_points)
        payload = {
            "model": "synthetic",
            "requested_exponent": d,
            "fitted_exponent": fitted,
            "fitted_std_err": stderr,
            "agreement": bool(abs(fitted - d) <= args.tolerance),
        }
        json_path.write_text(json.dumps(payload, indent=2) + "\n")
        write_exponent_csv(log_kernel, lo, hi, args.fit_points, Path(str(args.out) + ".csv"))
        _write_manifest(json_path, "check-propriety", _params_of(args), None, None)
        print(f"synthetic kernel N^-{d}: fitted exponent {fitted:.4f} +- {stderr:.2e}")
        return EXIT_OK if payload["agreement"] else EXIT_DISAGREEMENT

    if args.model is None:
        raise SystemExit(_usage("check-propriety needs --model or --synthetic-exponent"))
    kwargs: dict = {}
    input_path = None
    if args.model in ("m0", "mh"):
        if args.data is None:
            raise SystemExit(_usage(f"check-propriety --model {args.model} needs --data"))
        stats = summarize(load_history(args.data))
        kwargs["stats"] = stats
        input_path = args.data
        if args.model == "m0":
            kwargs["beta"] = BetaParams(args.a, args.b)
        else:
            kwargs["gammas"] = GammaPriors(args.shape_a, args.shape_b, args.scale_c)
            kwargs["quad_nodes"] = args.nodes
            kwargs["quad_check_nodes"] = args.check_nodes
            kwargs["quad_rtol"] = args.quad_rtol
    else:
        if args.n is None or args.k is None or args.delta is None:
            raise SystemExit(_usage("check-propriety --model ym needs --n, --k and --delta"))
        kwargs.update(ym_n=args.n, ym_k=args.k, ym_delta=args.delta)

    report = propriety_report(args.model, args.n_prior, fit=fit, **kwargs)
    report.write_json(json_path)
    _write_manifest(json_path, "check-propriety", _params_of(args), None, input_path)

    print(f"{args.model} under {args.n_prior} prior: predicted {report.predicted}")
    print(
        f"  analytic exponent {report.analytic_total_exponent:.4f} (prior included), "
        f"fitted {report.fitted_exponent:.4f} +- {report.fitted_std_err:.2e}"
    )
    print(f"  agreement: {report.agreement}")
    for warning in report.warnings:
        print(f"  WARNING: {warning}", file=sys.stderr)
    return EXIT_OK if report.agreement else EXIT_DISAGREEMENT


def _cmd_da_sweep(args) -> int:
    from .data import load_history
    from .gibbs import DaConfig, m_sweep
    from .likelihoods import BetaParams

    history = load_history(args.data)
    try:
        m_values = [int(v) for v in args.m.split(",") if v.strip()]
    except ValueError as exc:
        raise SystemExit(_usage(f"bad --m list: {exc}"))
    base = DaConfig(
        m=max(m_values),
        iters=args.iters,
        burnin=args.burnin,
        thin=args.thin,
        seed=args.seed,
        psi_prior=(args.a_psi, args.b_psi),
        p_prior=BetaParams(args.a_p, args.b_p),
    )
    report = m_sweep(history, m_values, base)
    json_path = Path(str(args.out) + ".json")
    report.write_json(json_path)
    report.write_csv(Path(str(args.out) + ".csv"))
    _write_manifest(json_path, "da-sweep", _params_of(args), args.seed, args.data)

    print("M        mean_N      sd_N        ESS")
    for e in report.entries:
        print(f"{e.m:<8d} {e.mean_n:<11.4f} {e.sd_n:<11.4f} {e.ess:.0f}")
    print(
        f"slope of mean vs M: {report.slope:.5f} +- {report.slope_se:.5f} "
        f"(z = {report.slope_z:.2f}); sd ratio last/first = {report.sd_ratio:.3f}"
    )
    print("stable" if report.stable else
          f"UNSTABLE: mean of N moved {report.relative_change:.1%} across the sweep")
    return EXIT_OK


def _cmd_ym(args) -> int:
    from .likelihoods import york_madigan_log_kernel
    from .posterior import posterior_table
    from .propriety import FitConfig, propriety_report, ym_propriety_condition

    log_kernel = lambda n: york_madigan_log_kernel(n, args.n, args.k, args.delta)
    table = posterior_table(
        log_kernel,
        args.prior,
        n_min=args.n,
        n_max=args.n_max,
        level=args.level,
        improper_margin=args.improper_margin,
    )
    report = propriety_report(
        "ym", args.prior, ym_n=args.n, ym_k=args.k, ym_delta=args.delta, fit=FitConfig()
    )
    verdict = ym_propriety_condition(args.k, args.delta, args.prior)

    json_path = Path(str(args.out) + ".json")
    table.write_json(json_path, extra={"model": "ym", "n_prior": args.prior,
                                       "verdict": verdict, "propriety": report.to_dict()})
    table.write_csv(Path(str(args.out) + ".csv"))
    _write_manifest(json_path, "ym", _params_of(args), None, None)

    print(f"Dirichlet-multinomial: k={args.k}, delta={args.delta}, {args.prior} prior -> {verdict}")
    print(f"  kernel exponent: analytic {report.analytic_exponent:.4f}, "
          f"fitted {report.fitted_exponent:.4f} +- {report.fitted_std_err:.2e}")
    print(f"  truncated posterior mean = {table.mean:.4f}, sd = {table.sd:.4f}")
    for warning in table.warnings:
        print(f"  WARNING: {warning}", file=sys.stderr)
    return EXIT_IMPROPER if (verdict == "improper" or table.warnings) else EXIT_OK


def _params_of(args) -> dict:
    params = {}
    for key, value in sorted(vars(args).items()):
        if key == "command":
            continue
        params[key] = str(value) if isinstance(value, Path) else value
    return params


def _usage(message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return EXIT_USAGE


def main(argv: list[str] | None = None) -> int:
    _configure_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    handlers = {
        "simulate": _cmd_simulate,
        "analyze": _cmd_analyze,
        "check-propriety": _cmd_check_propriety,
        "da-sweep": _cmd_da_sweep,
        "ym": _cmd_ym,
    }
    from .data import InvalidHistoryError
    from .posterior import QuadratureConvergenceError
    from .propriety import TailFitError

    try:
        return handlers[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (InvalidHistoryError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QuadratureConvergenceError, TailFitError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
