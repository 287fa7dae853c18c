"""Command-line interface: fit, transform, select, risk, simulate, plot-data.

All commands read comma-separated input and write TSV (3 fixed decimals) or
JSON (6 decimals) to stdout; ``plot-data`` and ``simulate`` emit CSV data
series at full precision since their output is meant to be consumed by
other programs rather than read as a table.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure (boundary or non-convergence), 5 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import io as lio
from .inference import (
    ConvergenceError,
    CountTable,
    DataError,
    FitOptions,
    FitResult,
    ModelSpec,
    fit,
    induced_mu_stats,
    simulate,
)
from .io import ConfigError, fmt_num, json_num
from .lattice import SubsetLattice
from .params import (
    BoundaryError,
    ParamMatrix,
    ValidationError,
    beta_from_pi,
    gamma_from_mu,
    mu_from_gamma,
    mu_from_pi,
    pi_from_beta,
    pi_from_mu,
    validate,
)
from .risk import risk_report
from .selection import (
    SelectionTrace,
    average_effects,
    backward_staged_selection,
    forward_margin_selection,
)

MAX_RESPONSES = 8
MAX_COVARIATES = 4


@dataclass(frozen=True)
class RunConfig:
    """Validated shared settings for one CLI invocation."""

    input: str | None
    format: str
    responses: tuple[str, ...]
    covariates: tuple[str, ...]
    link: str
    alpha: float
    smooth: float | None
    zeros: str | None
    seed: int | None
    out: str
    allow_missing_cells: bool


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    responses = lio.parse_labels(args.responses, "--responses") if args.responses else ()
    covariates = lio.parse_labels(args.covariates, "--covariates") if args.covariates else ()
    if not responses:
        raise ConfigError("--responses is required")
    if not covariates:
        raise ConfigError("--covariates is required")
    if len(responses) > MAX_RESPONSES:
        raise ConfigError(f"at most {MAX_RESPONSES} responses are supported, got {len(responses)}")
    if len(covariates) > MAX_COVARIATES:
        raise ConfigError(f"at most {MAX_COVARIATES} covariates are supported, got {len(covariates)}")
    if set(responses) & set(covariates):
        clash = ", ".join(sorted(set(responses) & set(covariates)))
        raise ConfigError(f"labels used as both response and covariate: {clash}")
    if not 0.0 < args.alpha <= 1.0:
        raise ConfigError(f"--alpha must be in (0, 1], got {args.alpha}")
    if args.smooth is not None and args.smooth < 0:
        raise ConfigError(f"--smooth must be nonnegative, got {args.smooth}")
    return RunConfig(
        input=args.input, format=args.format, responses=responses,
        covariates=covariates, link=args.link, alpha=args.alpha,
        smooth=args.smooth, zeros=args.zeros, seed=args.seed, out=args.out,
        allow_missing_cells=args.allow_missing_cells,
    )


def _lattices(config: RunConfig) -> tuple[SubsetLattice, SubsetLattice]:
    try:
        return SubsetLattice(config.responses), SubsetLattice(config.covariates)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _ingest(config: RunConfig, V: SubsetLattice, U: SubsetLattice) -> CountTable:
    if config.input is None:
        raise ConfigError("--input is required for this command")
    data = lio.read_count_data(config.input, V, U, config.format)
    empty = [U.format_mask(e) for e in range(U.size) if data.column_totals[e] == 0]
    if empty:
        print(f"warning: no observations in covariate cells: {', '.join(empty)}",
              file=sys.stderr)
    return data


def _fit_options(config: RunConfig) -> FitOptions:
    return FitOptions(smooth=config.smooth, allow_missing_cells=config.allow_missing_cells)


def _load_zeros(config: RunConfig, V: SubsetLattice, U: SubsetLattice) -> frozenset:
    if config.zeros is None:
        return frozenset()
    return lio.read_zero_set(config.zeros, V, U)


def _require_converged(result: FitResult) -> FitResult:
    if not result.converged:
        raise ConvergenceError(
            f"fit did not converge in {result.iterations} iterations "
            f"(gradient norm {result.grad_norm:.3e})")
    return result


def _display_rows(V: SubsetLattice) -> list[int]:
    return list(V.masks_by_cardinality())


def _display_cols(U: SubsetLattice) -> list[int]:
    return [0] + list(U.masks_by_cardinality())


# ---------------------------------------------------------------------------
# fit rendering (shared by fit and select)

def _fit_notes(result: FitResult) -> list[str]:
    V, U = result.beta_hat.rows, result.beta_hat.cols
    notes = []
    if result.missing_cells:
        cells = ", ".join(U.format_mask(e) for e in result.missing_cells)
        notes.append(f"likelihood restricted to observed cells (no data in: {cells})")
    if result.unidentified:
        pairs = ", ".join(f"{V.format_mask(d)};{U.format_mask(e)}" for d, e in result.unidentified)
        notes.append(f"unidentified coefficients forced to zero: {pairs}")
    if result.singular_information:
        notes.append("observed information is singular; standard errors unavailable")
    return notes


def _fit_tsv(result: FitResult, stream, decimals: int = 3) -> None:
    V, U = result.beta_hat.rows, result.beta_hat.cols
    is_lml = result.spec.link == "lml"
    free = {pos: i for i, pos in enumerate(result.free_index)}
    cols = _display_cols(U)

    stream.write(f"# link: {result.spec.link}\n")
    dev = fmt_num(result.deviance, decimals)
    pval = "·" if result.p_value is None else fmt_num(result.p_value, decimals)
    stream.write(f"# deviance: {dev}\tdf: {result.df}\tp: {pval}\n")
    for note in _fit_notes(result):
        stream.write(f"# note: {note}\n")

    header = ["D"]
    for e in cols:
        tag = U.format_mask(e)
        header += [f"est{tag}", f"se{tag}", f"p{tag}"]
    if is_lml:
        mu_values, mu_ses = induced_mu_stats(result)
        for e in cols:
            tag = U.format_mask(e)
            header += [f"mu_est{tag}", f"mu_se{tag}"]
    stream.write("\t".join(header) + "\n")

    for d in _display_rows(V):
        cells = [V.format_mask(d)]
        for e in cols:
            i = free.get((d, e))
            if i is None:
                cells += ["·", "·", "·"]
            else:
                cells += [fmt_num(result.estimates[i], decimals),
                          fmt_num(result.std_errors[i], decimals),
                          fmt_num(result.wald_p[i], decimals)]
        if is_lml:
            for e in cols:
                cells += [fmt_num(mu_values[d, e], decimals),
                          fmt_num(mu_ses[d, e], decimals)]
        stream.write("\t".join(cells) + "\n")


def _fit_json_obj(result: FitResult) -> dict:
    V, U = result.beta_hat.rows, result.beta_hat.cols
    free = {pos: i for i, pos in enumerate(result.free_index)}
    coeffs = []
    for d in _display_rows(V):
        for e in _display_cols(U):
            i = free.get((d, e))
            entry = {"D": V.format_mask(d), "E": U.format_mask(e)}
            if i is None:
                entry.update(constrained=True, estimate=None, se=None, p=None)
            else:
                entry.update(constrained=False,
                             estimate=json_num(result.estimates[i]),
                             se=json_num(result.std_errors[i]),
                             p=json_num(result.wald_p[i]))
            coeffs.append(entry)
    obj = {
        "link": result.spec.link,
        "deviance": json_num(result.deviance),
        "df": result.df,
        "p_value": json_num(result.p_value),
        "loglik": json_num(result.loglik),
        "converged": result.converged,
        "iterations": result.iterations,
        "coefficients": coeffs,
        "notes": _fit_notes(result),
    }
    if result.spec.link == "lml":
        mu_values, mu_ses = induced_mu_stats(result)
        obj["beta_mu_induced"] = [
            {"D": V.format_mask(d), "E": U.format_mask(e),
             "estimate": json_num(mu_values[d, e]), "se": json_num(mu_ses[d, e])}
            for d in _display_rows(V) for e in _display_cols(U)
        ]
    return obj


def cmd_fit(config: RunConfig) -> int:
    V, U = _lattices(config)
    data = _ingest(config, V, U)
    zeros = _load_zeros(config, V, U)
    spec = ModelSpec(config.link, zeros).validate_for(V, U)
    result = _require_converged(fit(spec, data, _fit_options(config)))
    if config.out == "json":
        print(json.dumps(_fit_json_obj(result), indent=2))
    else:
        _fit_tsv(result, sys.stdout)
    return 0


# ---------------------------------------------------------------------------
# transform

_TRANSFORM_INPUT_KINDS = ("pi", "mu", "gamma", "beta_mu", "beta_gamma")


def _pi_from_any(pm: ParamMatrix) -> ParamMatrix:
    if pm.kind == "pi":
        validate(pm)
        return pm
    if pm.kind == "mu":
        return pi_from_mu(pm)
    if pm.kind == "gamma":
        return pi_from_mu(mu_from_gamma(pm))
    link = "lm" if pm.kind == "beta_mu" else "lml"
    return pi_from_beta(pm, link)


def cmd_transform(config: RunConfig, kind: str) -> int:
    if kind not in _TRANSFORM_INPUT_KINDS:
        raise ConfigError(
            f"--kind must be one of {', '.join(_TRANSFORM_INPUT_KINDS)}, got {kind!r}")
    V, U = _lattices(config)
    if config.input is None:
        raise ConfigError("--input is required for this command")
    pm = lio.read_param_matrix(config.input, V, U, kind)
    pi = _pi_from_any(pm)
    mu = mu_from_pi(pi)
    gamma = gamma_from_mu(mu)
    derived = {
        "pi": pi,
        "mu": mu,
        "gamma": gamma,
        "beta_mu": beta_from_pi(pi, "lm"),
        "beta_gamma": beta_from_pi(pi, "lml"),
    }
    if config.out == "json":
        obj = {name: {
            "rows": [V.format_mask(d) for d in range(V.size)],
            "cols": [U.format_mask(e) for e in range(U.size)],
            "values": [[json_num(m.values[d, e]) for e in range(U.size)]
                       for d in range(V.size)],
        } for name, m in derived.items()}
        print(json.dumps(obj, indent=2))
    else:
        for name, m in derived.items():
            sys.stdout.write(f"# kind: {name}\n")
            lio.write_param_matrix(m, sys.stdout, decimals=6)
    return 0


# ---------------------------------------------------------------------------
# select

def _trace_tsv(trace: SelectionTrace, V: SubsetLattice, U: SubsetLattice, stream) -> None:
    for i, step in enumerate(trace.steps, start=1):
        stream.write(f"# step {i}: {step.label}\n")
        if step.error:
            stream.write(f"# error: {step.error}\n")
        if step.dropped:
            pairs = ", ".join(f"{V.format_mask(d)};{U.format_mask(e)}"
                              for d, e in step.dropped)
            stream.write(f"# dropped: {pairs}\n")
        else:
            stream.write("# dropped: (none)\n")
        if step.fit is not None:
            _fit_tsv(step.fit, stream)
        stream.write("\n")


def _trace_json_obj(trace: SelectionTrace, V: SubsetLattice, U: SubsetLattice) -> dict:
    steps = []
    for step in trace.steps:
        entry = {
            "label": step.label,
            "dropped": [[V.format_mask(d), U.format_mask(e)] for d, e in step.dropped],
            "error": step.error,
        }
        if step.fit is not None:
            entry["fit"] = _fit_json_obj(step.fit)
        steps.append(entry)
    return {
        "steps": steps,
        "final_zero_set": [[V.format_mask(d), U.format_mask(e)]
                           for d, e in sorted(trace.zero_set)],
        "final_fit": _fit_json_obj(trace.final_fit),
    }


def cmd_select(config: RunConfig, method: str) -> int:
    V, U = _lattices(config)
    data = _ingest(config, V, U)
    options = _fit_options(config)
    if method == "forward":
        trace = forward_margin_selection(data, config.link, config.alpha, options)
    elif method == "backward":
        trace = backward_staged_selection(data, config.link, config.alpha, options=options)
    else:
        raise ConfigError(f"--method must be 'forward' or 'backward', got {method!r}")
    _require_converged(trace.final_fit)
    if config.out == "json":
        print(json.dumps(_trace_json_obj(trace, V, U), indent=2))
    else:
        _trace_tsv(trace, V, U, sys.stdout)
    return 0


# ---------------------------------------------------------------------------
# risk

def cmd_risk(config: RunConfig) -> int:
    V, U = _lattices(config)
    data = _ingest(config, V, U)
    zeros = _load_zeros(config, V, U)
    spec = ModelSpec(config.link, zeros).validate_for(V, U)
    result = _require_converged(fit(spec, data, _fit_options(config)))
    report = risk_report(result)
    if config.out == "json":
        obj = [{
            "D": V.format_mask(en.d_mask), "u": en.u, "E": U.format_mask(en.e_mask),
            "log_rr": json_num(en.log_rr), "rr": json_num(np.exp(en.log_rr)),
            "log_reference_rr": json_num(en.log_ref_rr),
            "reference_rr": json_num(np.exp(en.log_ref_rr)) if en.log_ref_rr is not None else None,
            "log_rr_ratio": json_num(en.log_ratio),
            "rr_ratio": json_num(np.exp(en.log_ratio)) if en.log_ratio is not None else None,
            "ratio_constrained_to_one": en.constrained_zero,
        } for en in report.entries]
        print(json.dumps(obj, indent=2))
    else:
        out = sys.stdout
        out.write(f"# link: {result.spec.link}\n")
        out.write("D\tu\tE\tlog_rr\trr\tlog_ref_rr\tref_rr\tlog_ratio\tratio\tconstrained\n")
        for en in report.entries:
            ref = ("·", "·") if en.log_ref_rr is None else (
                fmt_num(en.log_ref_rr, 3), fmt_num(np.exp(en.log_ref_rr), 3))
            ratio = ("·", "·") if en.log_ratio is None else (
                fmt_num(en.log_ratio, 3), fmt_num(np.exp(en.log_ratio), 3))
            out.write("\t".join([
                V.format_mask(en.d_mask), en.u, U.format_mask(en.e_mask),
                fmt_num(en.log_rr, 3), fmt_num(np.exp(en.log_rr), 3),
                ref[0], ref[1], ratio[0], ratio[1],
                "yes" if en.constrained_zero else "no",
            ]) + "\n")
    return 0


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(config: RunConfig, kind: str | None, totals_text: str) -> int:
    V, U = _lattices(config)
    if config.input is None:
        raise ConfigError("--input (a parameter matrix file) is required for simulate")
    if kind is None:
        kind = "beta_mu" if config.link == "lm" else "beta_gamma"
    if kind not in _TRANSFORM_INPUT_KINDS:
        raise ConfigError(
            f"--kind must be one of {', '.join(_TRANSFORM_INPUT_KINDS)}, got {kind!r}")
    pm = lio.read_param_matrix(config.input, V, U, kind)
    pi = _pi_from_any(pm)

    parts = [p.strip() for p in totals_text.split(",")]
    try:
        numbers = [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"--totals must be integers, got {totals_text!r}") from None
    if len(numbers) == 1:
        numbers = numbers * U.size
    if len(numbers) != U.size:
        raise ConfigError(f"--totals needs 1 or {U.size} values, got {len(numbers)}")
    if any(n < 0 for n in numbers):
        raise ConfigError("--totals must be nonnegative")

    beta = beta_from_pi(pi, config.link)
    table = simulate(beta, config.link, numbers, seed=config.seed)
    lio.write_count_data(table, sys.stdout, config.format)
    return 0


# ---------------------------------------------------------------------------
# plot-data

def cmd_plot_data(config: RunConfig, effect: str | None) -> int:
    V, U = _lattices(config)
    data = _ingest(config, V, U)
    if effect is None:
        if U.ground_size != 1:
            raise ConfigError("--effect is required when there is more than one covariate")
        effect = U.labels[0]
    if effect not in U.labels:
        raise ConfigError(f"--effect must be a covariate label, got {effect!r}")
    options = _fit_options(config)

    series = []
    for link in ("lm", "lml"):
        result = _require_converged(fit(ModelSpec(link), data, options))
        for eff in average_effects(result, data, effect):
            series.append((link, eff))

    if config.out == "json":
        print(json.dumps([{
            "link": link, "k": eff.k,
            "estimate": json_num(eff.estimate, 12), "se": json_num(eff.se, 12),
            "ci_lo": json_num(eff.ci[0], 12), "ci_hi": json_num(eff.ci[1], 12),
        } for link, eff in series], indent=2))
    else:
        print("link,k,estimate,se,ci_lo,ci_hi")
        for link, eff in series:
            print(f"{link},{eff.k},{eff.estimate:.12g},{eff.se:.12g},"
                  f"{eff.ci[0]:.12g},{eff.ci[1]:.12g}")
    return 0


# ---------------------------------------------------------------------------
# parser and dispatch

def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--input", help="input data or matrix file")
    shared.add_argument("--format", choices=("cases", "counts"), default="cases",
                        help="shape of the input (or simulate output) data file")
    shared.add_argument("--responses", help="comma-separated response column names")
    shared.add_argument("--covariates", help="comma-separated covariate column names")
    shared.add_argument("--link", choices=("lm", "lml"), default="lml",
                        help="log-mean (lm) or log-mean-linear (lml) link")
    shared.add_argument("--alpha", type=float, default=0.05,
                        help="significance level for selection")
    shared.add_argument("--smooth", type=float, nargs="?", const=0.5, default=None,
                        help="add this constant to every cell before fitting "
                             "(0.5 when given without a value)")
    shared.add_argument("--zeros", help="file of D;E pairs constrained to zero")
    shared.add_argument("--seed", type=int, help="random seed (simulate)")
    shared.add_argument("--out", choices=("tsv", "json"), default="tsv",
                        help="output rendering")
    shared.add_argument("--allow-missing-cells", action="store_true",
                        help="restrict the likelihood to observed covariate cells "
                             "instead of failing on empty ones")

    parser = argparse.ArgumentParser(
        prog="lmlreg",
        description="Regression for multivariate binary responses on the "
                    "log-mean and log-mean-linear scales",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("fit", parents=[shared], help="fit one model and print coefficients")
    tr = sub.add_parser("transform", parents=[shared],
                        help="convert a parameter matrix between scales")
    tr.add_argument("--kind", required=True, choices=_TRANSFORM_INPUT_KINDS,
                    help="scale of the input matrix")
    se = sub.add_parser("select", parents=[shared], help="stepwise model selection")
    se.add_argument("--method", choices=("forward", "backward"), default="forward",
                    help="per-margin forward inclusion or staged backward elimination")
    sub.add_parser("risk", parents=[shared],
                   help="relative risks and reference relative risks of a fitted model")
    si = sub.add_parser("simulate", parents=[shared],
                        help="draw data from a model given as a parameter matrix")
    si.add_argument("--kind", default=None, choices=_TRANSFORM_INPUT_KINDS,
                    help="scale of the input matrix (default: the link's coefficients)")
    si.add_argument("--totals", required=True,
                    help="observations per covariate cell: one value for all "
                         "cells or a comma list in cell order")
    pl = sub.add_parser("plot-data", parents=[shared],
                        help="average-effect confidence-interval series for both links")
    pl.add_argument("--effect", default=None,
                    help="covariate whose average effect is plotted "
                         "(default: the only covariate)")
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = _config_from_args(args)
    if args.command == "fit":
        return cmd_fit(config)
    if args.command == "transform":
        return cmd_transform(config, args.kind)
    if args.command == "select":
        return cmd_select(config, args.method)
    if args.command == "risk":
        return cmd_risk(config)
    if args.command == "simulate":
        return cmd_simulate(config, args.kind, args.totals)
    if args.command == "plot-data":
        return cmd_plot_data(config, args.effect)
    raise AssertionError(f"unhandled command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (BoundaryError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
