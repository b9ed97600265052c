"""``roughdelay`` command line: gen, solve, converge, check and bounds.

Exit codes: 0 success, 1 invariant failure, 2 configuration error.  Output
files are staged as temporaries and renamed into place only after the whole
command succeeded, so an error exit leaves the output directory untouched.
"""
from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import analysis
from .coefficients import validate_hypotheses
from .config import Config, ConfigError, parse_config
from .path_algebra import (
    GridPath,
    MultFunctional,
    OffGridError,
    TwoParamTensor,
    chen_defect,
    holder_norm,
    two_param_norm,
)
from .signals import generate
from .solver import SolverBlowUp, shifted_solution, solve

COMMANDS = ("gen", "solve", "converge", "check", "bounds")
ENV_OUT = "ROUGHDELAY_OUT"


@dataclass
class RunConfig:
    subcommand: str
    config_path: Optional[str]
    output_dir: str
    master_seed: Optional[int]
    parallelism: int = 1
    overrides: tuple = ()
    config: Optional[Config] = None


@dataclass
class Outcome:
    files: dict = field(default_factory=dict)  # name -> text
    lines: list = field(default_factory=list)
    failed: bool = False


# --------------------------------------------------------------------------
# CSV helpers


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
    return buf.getvalue()


def _num(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


def path_csv(p: GridPath) -> str:
    header = ["t"] + [f"v{i + 1}" for i in range(p.dim)]
    return _csv(header, ([t, *v] for t, v in zip(p.times, p.values)))


def tensor_csv(A: TwoParamTensor) -> str:
    """Per-step tensor values, one row per step, entries in row-major order."""
    d, m = A.dims
    header = ["k", "t"] + [f"a{i + 1}_{j + 1}" for i in range(d) for j in range(m)]
    times = A.grid.times
    return _csv(header, ([k, times[k], *A.step_values[k].ravel()] for k in range(A.grid.n)))


def write_atomic(out_dir: str, files: dict) -> None:
    os.makedirs(out_dir, exist_ok=True)
    staged = []
    try:
        for name, text in files.items():
            fd, tmp = tempfile.mkstemp(prefix=f".{name}.", dir=out_dir)
            with os.fdopen(fd, "w", newline="") as fh:
                fh.write(text)
            staged.append((tmp, os.path.join(out_dir, name)))
    except BaseException:
        for tmp, _ in staged:
            os.unlink(tmp)
        raise
    for tmp, final in staged:
        os.replace(tmp, final)


# --------------------------------------------------------------------------
# subcommands


def cmd_gen(rc: RunConfig) -> Outcome:
    cfg = rc.config
    spec = cfg.signal_spec()
    path, tensor = generate(spec, ito_correction=cfg["problem.ito_correction"])
    beta = cfg["problem.beta"]
    y0 = path.restrict(0.0, spec.T)
    out = Outcome()
    out.files = {"signal_path.csv": path_csv(path), "signal_tensor.csv": tensor_csv(tensor)}
    out.lines = [
        f"kind={spec.kind}",
        f"seed={spec.seed}",
        f"y_beta_norm={holder_norm(y0, beta)!r}",
        f"yy_two_beta_norm={two_param_norm(tensor.restrict(0.0, spec.T), 2 * beta)!r}",
        f"chen_defect={chen_defect(tensor, relative=True)!r}",
    ]
    return out


def _problem(rc: RunConfig):
    spec = rc.config.problem_spec()
    return spec, spec.build(seed=rc.master_seed)


def cmd_solve(rc: RunConfig) -> Outcome:
    spec, problem = _problem(rc)
    res = solve(problem)
    diag = res.diagnostics
    out = Outcome()
    out.files = {"solution_path.csv": path_csv(res.x), "solution_tensor.csv": tensor_csv(res.x_tensor)}
    out.lines = [
        f"r={problem.r!r}",
        f"solver_n={problem.solver_n}",
        f"x_T={_fmt_vec(res.x.values[-1])}",
        f"sup_norm={diag.sup_norm!r}",
        f"beta_prime_norm={diag.beta_norm!r}",
        f"tensor_two_beta_prime_norm={diag.two_beta_norm!r}",
        f"chen_defect={chen_defect(res.x_tensor, relative=True)!r}",
        f"runtime_ms={res.runtime_ms:.3f}",
    ]
    return out


def _fmt_vec(v) -> str:
    return ",".join(repr(float(x)) for x in np.atleast_1d(v))


def study_config(rc: RunConfig) -> analysis.StudyConfig:
    cfg = rc.config
    spec = cfg.problem_spec()
    seeds = cfg.seeds()
    return analysis.StudyConfig(
        base=spec,
        r_list=tuple(cfg["study.r_list"]),
        seeds=seeds,
        parallelism=rc.parallelism,
        record_runtime=cfg["study.record_runtime"],
        exact_tol=cfg["study.exact_tol"],
    )


STUDY_COLUMNS = (
    "seed",
    "r",
    "sup_err",
    "tensor_sup_err",
    "holder_err",
    "yy_r_tensor_norm_1",
    "yy_r_tensor_norm_2",
    "runtime_ms",
)


def study_csv(result: analysis.StudyResult) -> str:
    return _csv(STUDY_COLUMNS, ([getattr(row, c) for c in STUDY_COLUMNS] for row in result.rows))


def cmd_converge(rc: RunConfig) -> Outcome:
    result = analysis.convergence_study(study_config(rc))
    out = Outcome(files={"converge.csv": study_csv(result)})
    if result.flag == "exact":
        out.lines.append("flag=exact slope=nan r2=nan")
        return out
    for seed, fit in result.fits.items():
        if fit is None:
            out.lines.append(f"seed={seed} slope=nan r2=nan")
        else:
            out.lines.append(f"seed={seed} slope={fit.slope:.6g} r2={fit.r2:.6g}")
    p = result.pooled
    if p is not None:
        out.lines.append(f"pooled slope={p.slope:.6g} r2={p.r2:.6g}")
    return out


@dataclass
class CheckLine:
    name: str
    value: float
    threshold: float
    ok: bool


def run_checks(rc: RunConfig) -> list[CheckLine]:
    """Hard invariants on the configured problem; all must hold exactly or to their tolerances."""
    cfg = rc.config
    spec, problem = _problem(rc)
    lines = []

    def add(name, value, thr, ok=None):
        lines.append(CheckLine(name, float(value), float(thr), bool(value <= thr) if ok is None else bool(ok)))

    drv = problem.driver
    add("chen_driver_yy", chen_defect(drv.yy, relative=True), 1e-10)
    add("chen_time_tensor", chen_defect(drv.time_y, relative=True), 1e-10)
    res = solve(problem)
    add("chen_solution", chen_defect(res.x_tensor, relative=True), 1e-10)
    if problem.m > 0:
        add("eta_prefix_exact", float(np.max(np.abs(res.x.restrict(-problem.r, 0.0).values[:-1]
                                               - problem.eta.restrict(-problem.r, 0.0).values[:-1]), initial=0.0)), 0.0)
        xhat, xt = shifted_solution(res)
        add("chen_shifted_solution", chen_defect(xt, relative=True), 1e-10)
    for r in cfg["study.r_list"]:
        rep = analysis.lemma_yyr_check(drv.y, r, problem.exps, problem.T)
        add(f"lemma_sup_r={r!r}", rep.sup_lhs, rep.sup_rhs, rep.sup_bound_ok)
        add(f"lemma_beta_prime_r={r!r}", rep.beta_prime_lhs, rep.beta_prime_rhs)
    x_pos, t_pos = res.on_positive()
    M = MultFunctional.of(t_pos, problem.exps)
    lhs, rhs = analysis.check_329(M)
    add("endpoint_holder_vs_phi", lhs, rhs)
    b = analysis.apriori_bounds(problem, cfg["problem.K"])
    add("lambda_y_at_least_one", 1.0 - b.lambda_y, 0.0)
    add(
        "delta_tilde_vs_sigma",
        b.delta_tilde_y,
        (cfg["problem.K"] * problem.coeff.sup_sigma) ** (-1 / problem.exps.beta)
        if problem.coeff.sup_sigma > 0
        else math.inf,
    )
    add("m_eta_y_at_least_eta0_plus_one", b.terms["eta0_abs"] + 1 - b.m_eta_y, 0.0)
    hyp = validate_hypotheses(problem.coeff, problem.exps)
    add("coefficient_hypotheses", 0.0 if hyp.passes else 1.0, 0.0)
    return lines


def cmd_check(rc: RunConfig) -> Outcome:
    lines = run_checks(rc)
    out = Outcome()
    out.files = {"check.csv": _csv(("check", "value", "threshold", "ok"), ([c.name, c.value, c.threshold, int(c.ok)] for c in lines))}
    for c in lines:
        out.lines.append(f"{'PASS' if c.ok else 'FAIL'} {c.name} value={c.value:.6g} threshold={c.threshold:.6g}")
    out.failed = not all(c.ok for c in lines)
    out.lines.append(f"checks={len(lines)} failed={sum(not c.ok for c in lines)}")
    return out


def cmd_bounds(rc: RunConfig) -> Outcome:
    cfg = rc.config
    spec, problem = _problem(rc)
    K = cfg["problem.K"]
    res = solve(problem)
    rep = analysis.apriori(problem, res, K)
    b = rep.bounds
    bp = problem.exps.beta_prime
    vals = {
        "rho_eta_b_sigma": b.rho_eta_b_sigma,
        "lambda_y": b.lambda_y,
        "m_eta_y": b.m_eta_y,
        "delta_tilde_y": b.delta_tilde_y,
        "K": K,
        "xhat_sup": rep.xhat_sup,
        "xhat_beta_prime": rep.xhat_beta_prime,
        "xhat_tensor_two_beta_prime": rep.xhat_tensor_two_beta_prime,
        "sup_bound_holds": float(rep.sup_ok),
        "k_min_sup": rep.k_min_sup,
        "k_min_beta_prime": rep.k_min_beta_prime,
        "k_min_two_beta_prime": rep.k_min_two_beta_prime,
    }
    vals.update({f"term_{k}": v for k, v in b.terms.items()})
    if problem.m > 0:
        xr_bp = holder_norm(res.x, bp)
        eta_bp = holder_norm(problem.eta, bp)
        xhat, _ = shifted_solution(res)
        vals["rho_delay_prop"] = analysis.rho_delay_prop(problem.coeff, problem.T, problem.exps, xr_bp, eta_bp, holder_norm(xhat, bp))
        row = analysis.delayed_tensor_norms(problem.driver, [problem.r], bp)[0]
        vals["lambda_r"] = analysis.lambda_r(xr_bp, row.diff_y, row.shift_diff)
    x_pos, t_pos = res.on_positive()
    M = MultFunctional.of(t_pos, problem.exps)
    g = analysis.g_functionals(problem.coeff, M, M, K=K, beta=bp)
    vals.update({"g1": g.g1, "g2": g.g2, "g3": g.g3})
    out = Outcome(files={"bounds.csv": _csv(("quantity", "value"), vals.items())})
    out.lines = [f"{k}={v!r}" for k, v in vals.items()]
    return out


HANDLERS = {"gen": cmd_gen, "solve": cmd_solve, "converge": cmd_converge, "check": cmd_check, "bounds": cmd_bounds}


# --------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="roughdelay", description="Delay equations driven by rough signals.")
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", metavar="PATH")
    ap.add_argument("--out", metavar="DIR", default="out")
    ap.add_argument("--seed", type=int, metavar="U64")
    ap.add_argument("--parallelism", type=int, default=1, metavar="N")
    ap.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", dest="overrides")
    return ap


def parse_run_config(argv=None) -> RunConfig:
    args = build_parser().parse_args(argv)
    if args.parallelism < 1:
        raise ConfigError("--parallelism must be >= 1")
    if args.seed is not None and not (0 <= args.seed < 2**64):
        raise ConfigError("--seed must be an unsigned 64-bit integer")
    text = ""
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from None
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"signal.seed={args.seed}")
    cfg = parse_config(text, overrides)
    out_dir = os.environ.get(ENV_OUT) or args.out
    return RunConfig(args.command, args.config, out_dir, args.seed, args.parallelism, tuple(args.overrides), cfg)


def run(rc: RunConfig) -> int:
    try:
        outcome = HANDLERS[rc.subcommand](rc)
    except (ConfigError, OffGridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverBlowUp as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for line in outcome.lines:
        print(line)
    if outcome.failed:
        return 1
    write_atomic(rc.output_dir, outcome.files)
    return 0


def main(argv=None) -> int:
    try:
        rc = parse_run_config(argv)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run(rc)


if __name__ == "__main__":
    sys.exit(main())
