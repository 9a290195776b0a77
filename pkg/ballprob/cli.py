"""
Command line entry point: ``ballprob <subcommand> [options]``.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ballprob import analysis, bayesdemo, bounds, corpus, metrics, quadform, spectrum
from ballprob._version import __version__
from ballprob.configure import DEFAULT_SEED, CorpusConfig, InversionConfig, RunConfig
from ballprob.errors import BallProbError, ConditionError, DomainError, NumericalError
from ballprob.utils import dumps, load_json, set_log_level, write_frame, write_records

log = logging.getLogger("BP.cli")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DOMAIN = 2
EXIT_NUMERICAL = 3


class ArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _json_list(text: str) -> List[float]:
    try:
        value = load_json(text) if text.strip().startswith("[") else [float(v) for v in text.split(",")]
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected a JSON list or comma separated numbers, got {text!r}") from err
    return [float(v) for v in np.atleast_1d(value)]


def _common_options() -> argparse.ArgumentParser:
    common = ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="root seed of every random draw")
    common.add_argument("--abs-tol", type=float, default=None, help="absolute tolerance of cdf and density values")
    common.add_argument("--out", default=None, help="write results to this path instead of stdout")
    common.add_argument("--format", dest="output_format", choices=["json", "csv"], default=None)
    common.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    common.add_argument("--threads", type=int, default=None, help="worker threads, 0 means one per cpu")
    return common


def _instance_options(parser: argparse.ArgumentParser, name: str = "instance", flag: str = "--instance"):
    parser.add_argument(flag, dest=name, default=None, help='instance JSON text or file: {"spectrum": [..], "shift": [..]}')
    if name == "instance":
        parser.add_argument("--spectrum", type=_json_list, default=None, help="eigenvalues, overrides the instance")
        parser.add_argument("--shift", type=_json_list, default=None, help="shift in the eigenbasis")


EXPERIMENTS = {
    "r3-lower-bound": "perturbing the third eigenvalue moves the distance by at least a multiple of eps lam3",
    "one-dim": "one-dimensional laws: the distance sits between explicit lower and upper envelopes",
    "degenerate-band": "a single weight: the band probability at the origin is of order sqrt(eps)",
    "h-integral": "estimates of H(a) = int (1 + t^2)^(-(a + 1/2)) dt on both sides of a = 1",
    "holder": "Hölder bound of the characteristic-function modulus integral in the high-dimensional case",
    "identity-scaling": "the density of chi2_p peaks at order 1/sqrt(p), the uniform density bound is sharp",
    "nonuniform-density": "shifted densities decay like a Gaussian tail away from ||a||^2",
}


def _command(sub, common: argparse.ArgumentParser, name: str, text: str) -> argparse.ArgumentParser:
    return sub.add_parser(name, parents=[common], help=text, description=text)


def parse_args(args: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = ArgumentParser(prog="ballprob", description="Gaussian ball probabilities and their comparison bounds")
    parser.add_argument("-V", "--version", action="version", version="%(prog)s " + __version__)
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=ArgumentParser)
    common = _common_options()

    p = _command(sub, common, "kappa", "kappa, regime and tail norms of a spectrum, the dimension-free density scale")
    _instance_options(p)

    for name, text in (
        ("cdf", "P(||xi - a||^2 <= x) by characteristic-function inversion, exit 3 when abs_tol is missed"),
        ("density", "density of ||xi - a||^2 by characteristic-function inversion, exit 3 when abs_tol is missed"),
    ):
        p = _command(sub, common, name, text)
        _instance_options(p)
        p.add_argument("--x", type=_json_list, required=True, help="squared radii")

    p = _command(sub, common, "quantile", "quantile of ||xi - a||^2")
    _instance_options(p)
    p.add_argument("--p", type=float, required=True, help="probability level in (0, 1)")

    p = _command(
        sub,
        common,
        "bound",
        "one bound on its own: the comparison bound (kappa_x + kappa_y)(||lambda_x - lambda_y||_1 + ||a||^2) "
        "and its variants, the anticoncentration bound kappa * eps or a density bound",
    )
    _instance_options(p, "x", "--x")
    _instance_options(p, "y", "--y")
    p.add_argument(
        "--formula",
        default="comparison",
        choices=[
            "comparison",
            "comparison_same_shift",
            "comparison_lambda12",
            "comparison_frobenius",
            "comparison_nuclear",
            "comparison_operator",
            "anticoncentration",
            "density_uniform",
            "density_two_dim",
        ],
    )
    p.add_argument("--eps", type=float, default=None, help="band width of the anticoncentration bound")

    p = _command(
        sub, common, "compare", "Kolmogorov distance of two ball laws next to the comparison bound that controls it"
    )
    _instance_options(p, "x", "--x")
    _instance_options(p, "y", "--y")
    p.add_argument("--same-shift", action="store_true", help="center both balls at the shift of x")

    p = _command(
        sub,
        common,
        "band",
        "probability of the band x < ||xi - a||^2 < x + eps next to the anticoncentration bound kappa * eps",
    )
    _instance_options(p)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--at", type=float, default=None, help="band start, the supremum over x when omitted")

    p = _command(
        sub,
        common,
        "experiment",
        "reproduce one sharpness construction: "
        + "; ".join(f"{name}: {text}" for name, text in EXPERIMENTS.items()),
    )
    p.add_argument("name", choices=list(EXPERIMENTS))
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--lam", type=_json_list, default=None, help="eigenvalues of the construction")
    p.add_argument("--a", type=float, default=None, help="argument of the H integral")
    p.add_argument("--ps", type=_json_list, default=None, help="dimensions of the identity scaling table")
    p.add_argument("--n-instances", type=int, default=100)

    p = _command(
        sub,
        common,
        "sweep",
        "suites over the seeded corpus, written as CSV: ratio (distance over the comparison bound), band "
        "(sup band over kappa * eps), holder (Hölder product integral) and calibrate (observed maxima against "
        "the frozen empirical constants)",
    )
    p.add_argument("kind", nargs="?", default="ratio", choices=["ratio", "band", "holder", "calibrate"])
    p.add_argument("--n-instances", type=int, default=1000)
    p.add_argument("--eps", type=_json_list, default=[0.01, 0.1, 0.5], help="band widths of the band suite")

    p = _command(
        sub,
        common,
        "bayes",
        "prior impact on credible balls and nonparametric credible-set coverage, "
        "each against its trace bound with the Pinsker value alongside",
    )
    p.add_argument("--scenario", default=None, help="scenario JSON text or file")
    p.add_argument("--ill-conditioned", action="store_true", help="run the nearly singular prior impact instance")
    p.add_argument("--n-mc", type=int, default=0, help="Monte Carlo replications for the cross-check")
    return parser.parse_args(args)


def _load_instance(source: Optional[str], values=None, shift=None) -> Tuple[spectrum.Spectrum, np.ndarray]:
    if values is not None:
        return spectrum.from_json({"spectrum": values, "shift": shift or []})
    if source is None:
        raise DomainError("An instance is required, pass --instance or --spectrum.")
    return spectrum.from_json(load_json(source))


def _run_config(ns: argparse.Namespace) -> RunConfig:
    default_format = "csv" if ns.subcommand == "sweep" else "json"
    return RunConfig(
        subcommand=ns.subcommand,
        instances=[v for v in (getattr(ns, k, None) for k in ("instance", "x", "y")) if isinstance(v, str)],
        abs_tol=ns.abs_tol,
        seed=ns.seed,
        out=ns.out,
        output_format=ns.output_format or default_format,
        threads=ns.threads or None,
    )


def _cmd_kappa(ns, cfg):
    s, _ = _load_instance(ns.instance, ns.spectrum, ns.shift)
    norms = spectrum.tail_norms(s)
    return {
        "kappa": spectrum.kappa(s),
        "regime": spectrum.regime(s),
        "Lambda1": norms.Lambda1,
        "Lambda2": norms.Lambda2,
        "effective_rank": spectrum.effective_rank(s),
    }


def _cmd_cdf(ns, cfg):
    s, a = _load_instance(ns.instance, ns.spectrum, ns.shift)
    law = quadform.from_gaussian(s, a)
    xs = np.asarray(ns.x, dtype=float)
    inv = cfg.inversion_config(law)
    values, err = quadform.cdf_grid(law, xs, inv)
    quadform.check_tolerance(err, inv, "cdf")
    return pd.DataFrame({"x": xs, "cdf": values, "err_est": err})


def _cmd_density(ns, cfg):
    s, a = _load_instance(ns.instance, ns.spectrum, ns.shift)
    law = quadform.from_gaussian(s, a)
    xs = np.asarray(ns.x, dtype=float)
    inv = cfg.inversion_config(law)
    values, err = quadform.density_grid(law, xs, inv)
    quadform.check_tolerance(err, inv, "density")
    return pd.DataFrame({"x": xs, "density": values, "err_est": err})


def _cmd_quantile(ns, cfg):
    s, a = _load_instance(ns.instance, ns.spectrum, ns.shift)
    law = quadform.from_gaussian(s, a)
    return {"p": ns.p, "quantile": quadform.quantile(law, ns.p, cfg.inversion_config(law))}


def _cmd_bound(ns, cfg):
    formula = ns.formula
    sx, a = _load_instance(ns.x)
    q = float(np.sum(a**2))
    if formula in ("anticoncentration", "density_uniform", "density_two_dim"):
        if formula == "anticoncentration":
            if ns.eps is None:
                raise DomainError("The anticoncentration bound needs --eps.")
            return bounds.anticoncentration_bound(sx, ns.eps).to_record()
        if formula == "density_uniform":
            return bounds.density_uniform_bound(sx).to_record()
        return bounds.density_two_dim_bound(sx).to_record()
    if formula in ("comparison_nuclear", "comparison_operator"):
        objs = [load_json(src) if src is not None else {} for src in (ns.x, ns.y)]
        if not all("covariance" in obj for obj in objs):
            raise DomainError(f"{formula} needs full covariance matrices for both instances.")
        Sx, Sy = (np.asarray(obj["covariance"], dtype=float) for obj in objs)
        fn = bounds.comparison_bound_nuclear if formula == "comparison_nuclear" else bounds.comparison_bound_operator
        return fn(Sx, Sy, q).to_record()
    sy, _ = _load_instance(ns.y)
    if formula == "comparison_lambda12":
        return bounds.comparison_bound_lambda12(sx, sy, q).to_record()
    if formula == "comparison_frobenius":
        return bounds.comparison_bound_frobenius(sx, sy, q).to_record()
    return bounds.comparison_bound(sx, sy, q, same_shift=formula == "comparison_same_shift").to_record()


def _cmd_compare(ns, cfg):
    sx, a = _load_instance(ns.x)
    sy, _ = _load_instance(ns.y)
    law_x = quadform.from_gaussian(sx, a)
    law_y = quadform.from_gaussian(sy, a if ns.same_shift else None)
    inv = metrics.pair_config(law_x, law_y)
    if cfg.abs_tol is not None:
        inv = inv.replace(abs_tol=cfg.abs_tol)
    return metrics.compare(sx, sy, a, inv, same_shift=ns.same_shift).to_record()


def _cmd_band(ns, cfg):
    s, a = _load_instance(ns.instance, ns.spectrum, ns.shift)
    law = quadform.from_gaussian(s, a)
    inv = cfg.inversion_config(law)
    if ns.at is not None:
        prob, at = metrics.band_probability(law, ns.at, ns.eps, inv), ns.at
    else:
        prob, at = metrics.sup_band(law, ns.eps, inv)
    record = {"eps": ns.eps, "x": at, "probability": prob}
    if ns.eps > 0:
        record["bound"] = bounds.anticoncentration_bound(s, ns.eps).to_record()
    return record


def _need(value, flag: str, name: str):
    if value is None:
        raise DomainError(f"Experiment {name} needs {flag}.")
    return value


def _cmd_experiment(ns, cfg):
    name = ns.name
    inv = InversionConfig(abs_tol=cfg.abs_tol) if cfg.abs_tol is not None else None
    if name == "r3-lower-bound":
        lam = ns.lam or [1.0, 1.0, 1.0]
        if len(lam) != 3:
            raise DomainError(f"--lam needs three eigenvalues, got {len(lam)}.")
        return analysis.r3_lower_bound(*lam, _need(ns.eps, "--eps", name), inv).to_record()
    if name == "one-dim":
        lam = _need(ns.lam, "--lam", name)
        if len(lam) != 2:
            raise DomainError(f"--lam needs two variances, got {len(lam)}.")
        return analysis.one_dim_bounds(*lam).to_record()
    if name == "degenerate-band":
        return analysis.degenerate_band(_need(ns.eps, "--eps", name), inv).to_record()
    if name == "h-integral":
        a = _need(ns.a, "--a", name)
        record = analysis.h_integral_small_a(a) if a <= 1 else analysis.h_integral_lower_branch(a)
        return {"a": a, "H": analysis.h_integral(a), "estimate": record.to_record()}
    if name == "holder":
        res = analysis.holder_product_integral(spectrum.make_spectrum(_need(ns.lam, "--lam", name)))
        return {"integral": res.integral, "tau": res.tau, "q": list(res.q), "holder_rhs": res.holder_rhs}
    if name == "identity-scaling":
        ps = [int(p) for p in (ns.ps or range(3, 51))]
        return analysis.identity_density_scaling(ps, inv, cfg.threads)
    instances = corpus.generate(CorpusConfig(seed=cfg.seed, n_instances=ns.n_instances))
    return analysis.nonuniform_density_check(instances, inv, threads=cfg.threads)


def _cmd_sweep(ns, cfg):
    inv = InversionConfig(abs_tol=cfg.abs_tol) if cfg.abs_tol is not None else None
    if ns.n_instances < 1:
        raise DomainError(f"--n-instances must be at least 1, got {ns.n_instances}.")
    instances = corpus.generate(CorpusConfig(seed=cfg.seed, n_instances=ns.n_instances))
    if ns.kind == "ratio":
        return analysis.sweep_frame(instances, analysis.compare_instances(instances, inv, cfg.threads))
    if ns.kind == "band":
        return analysis.band_suite(instances, ns.eps, inv, cfg.threads)
    if ns.kind == "calibrate":
        return analysis.calibration_run(instances, ns.eps, inv, cfg.threads)
    return analysis.holder_suite(instances)


def _cmd_bayes(ns, cfg):
    inv = InversionConfig(abs_tol=cfg.abs_tol) if cfg.abs_tol is not None else None
    if ns.ill_conditioned:
        model, G_sq, G1_sq = bayesdemo.ill_conditioned_scenario(cfg.seed)
        return [bayesdemo.prior_impact(model, G_sq, G1_sq, cfg=inv, seed=cfg.seed, n_mc=ns.n_mc).to_record()]
    if ns.scenario is None:
        raise DomainError("Pass --scenario or --ill-conditioned.")
    scenario = bayesdemo.load_scenario(ns.scenario)
    return [r.to_record() for r in bayesdemo.run_scenario(scenario, inv, ns.n_mc, cfg.seed)]


COMMANDS: Dict[str, Callable[[argparse.Namespace, RunConfig], Any]] = {
    "kappa": _cmd_kappa,
    "cdf": _cmd_cdf,
    "density": _cmd_density,
    "quantile": _cmd_quantile,
    "bound": _cmd_bound,
    "compare": _cmd_compare,
    "band": _cmd_band,
    "experiment": _cmd_experiment,
    "sweep": _cmd_sweep,
    "bayes": _cmd_bayes,
}


def _emit(result: Any, cfg: RunConfig) -> None:
    if isinstance(result, pd.DataFrame):
        if cfg.output_format == "csv":
            text = write_frame(result, cfg.out)
        else:
            text = write_records(result.to_dict(orient="records"), cfg.out)
    else:
        records = result if isinstance(result, list) else [result]
        if cfg.output_format == "csv":
            text = write_frame(pd.json_normalize(records), cfg.out)
        else:
            text = write_records(records, cfg.out)
    if cfg.out is None:
        sys.stdout.write(text)


def _error_json(err: BallProbError) -> str:
    record: Dict[str, Any] = {"error": type(err).__name__, "message": str(err)}
    if isinstance(err, ConditionError) and err.which:
        record["which"] = err.which
    if isinstance(err, NumericalError) and err.err_est is not None and math.isfinite(err.err_est):
        record["err_est"] = err.err_est
    return dumps(record)


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Run one subcommand and return its exit status."""
    try:
        ns = parse_args(argv)
    except SystemExit as exit_:
        return int(exit_.code or 0)
    set_log_level(ns.log_level)
    try:
        cfg = _run_config(ns)
        result = COMMANDS[ns.subcommand](ns, cfg)
        _emit(result, cfg)
    except (DomainError, ConditionError) as err:
        sys.stderr.write(_error_json(err) + "\n")
        return EXIT_DOMAIN
    except NumericalError as err:
        sys.stderr.write(_error_json(err) + "\n")
        return EXIT_NUMERICAL
    except ValueError as err:
        # configuration dataclasses reject bad option values
        sys.stderr.write(dumps({"error": "ValueError", "message": str(err)}) + "\n")
        return EXIT_DOMAIN
    return EXIT_OK


def main() -> None:
    sys.exit(run())
