"""Command-line front end: `nlh <command> ...`.

Exit codes: 0 success, 1 an identity or hypothesis check failed, 2 bad
configuration, missing input or a solver failure.  Reports go to stdout as
JSON (sorted keys, fixed float formatting) so repeated runs are identical.
"""
import argparse
import json
import sys
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import kernels as kern
from . import quad, reduce, solvers, spectral
from . import variational as var
from .errors import ConfigError, NLHError, NewtonDiverged, JacobianSingular, ContinuationStalled

EXIT_OK, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


# ------------------------------------------------------------------- configs


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class KernelBlock(_Strict):
    family: Optional[str] = None
    params: dict[str, Any] = Field(default_factory=dict)
    d: int = 1
    eta0: Optional[float] = None
    matrix: Optional[list[list[dict[str, Any]]]] = None


class SpecBlock(_Strict):
    family: Literal["allen-cahn", "whitham", "nfe", "nls", "pinning"]
    params: dict[str, Any] = Field(default_factory=dict)


class GuessBlock(_Strict):
    shape: Literal["cos", "sech2", "tanh-down", "tanh-up", "zero", "constant"] = "cos"
    amplitude: float = 0.01
    rate: float = 1.0
    offset: float = 0.0


class ContinuationBlock(_Strict):
    param: str
    values: list[float]


class SolveBlock(_Strict):
    topology: Literal["periodic", "line"] = "periodic"
    n: int = 256
    period: Optional[float] = None
    amplitude: Optional[float] = None
    left: float = -40.0
    right: float = 40.0
    h: float = 0.1
    far_left: Optional[list[float]] = None
    far_right: Optional[list[float]] = None
    symmetric: bool = False
    phase_at: float = 0.0
    phase_value: Optional[float] = None
    pin: Literal["left", "right"] = "left"
    tol: float = 1e-10
    max_iter: int = 40
    guess: GuessBlock = Field(default_factory=GuessBlock)
    continuation: Optional[ContinuationBlock] = None
    twist: float = 0.1


class VerifyBlock(_Strict):
    shifts: int = 32
    a: float = -3.0
    b: float = 3.0
    fd_step: float = 1e-4
    samples: int = 10
    seed: int = 0
    tol: Optional[float] = None


class RunConfig(_Strict):
    kernel: KernelBlock
    spec: Optional[SpecBlock] = None
    solve: Optional[SolveBlock] = None
    verify: Optional[VerifyBlock] = None
    output: dict[str, str] = Field(default_factory=dict)


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} not found")
    try:
        return RunConfig.model_validate(json.loads(path.read_text()))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def build_kernel(block: KernelBlock, base=None):
    data = block.model_dump(exclude_none=True)
    if "matrix" not in data and "family" not in data:
        raise ConfigError("kernel block needs a family or a matrix")
    params = data.get("params", {})
    if base is not None and isinstance(params.get("csv"), str):
        csv = Path(params["csv"])
        params["csv"] = str(csv if csv.is_absolute() else Path(base) / csv)
    if "csv" in params and not Path(params["csv"]).exists():
        raise ConfigError(f"kernel table {params['csv']} not found")
    try:
        return kern.kernel_from_config(data)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"kernel block: missing or bad parameter {exc}") from None


def build_spec(cfg: RunConfig, kernel, overrides=None):
    if cfg.spec is None:
        raise ConfigError("this command needs a spec block")
    block = cfg.spec.model_dump()
    block["params"] = {**block["params"], **(overrides or {})}
    return var.spec_from_config(block, kernel)


# ------------------------------------------------------------------- output


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj):
    return json.dumps(_clean(obj), indent=2, sort_keys=True)


def emit(obj, out=None):
    text = dumps(obj)
    if out:
        Path(out).write_text(text + "\n")
    print(text)


# ------------------------------------------------------------------ commands


def _kernel_from_args(args):
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        return build_kernel(cfg.kernel, Path(args.config).parent), cfg
    if not args.family:
        raise ConfigError("give --config or --family")
    params = {}
    for name in ("width", "rate", "radius", "weight", "grid_step", "decay_rate"):
        val = getattr(args, name, None)
        if val is not None:
            params[name] = val
    for name in ("widths", "weights", "samples"):
        val = getattr(args, name, None)
        if val is not None:
            params[name] = [float(v) for v in val.split(",")]
    if args.csv:
        params["csv"] = args.csv
    block = KernelBlock(family=args.family, params=params, d=args.d, eta0=args.eta0)
    return build_kernel(block), None


def cmd_validate_kernel(args):
    kernel, _ = _kernel_from_args(args)
    rep = kern.validate(kernel)
    emit(rep.as_dict(), args.out)
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_moments(args):
    kernel, _ = _kernel_from_args(args)
    table = {str(m): kern.moment(kernel, m) for m in range(args.max_order + 1)}
    emit({"moments": table}, args.out)
    return EXIT_OK


def cmd_cpq(args):
    rows = []
    kernels = []
    if args.family or args.config:
        kernels.append(_kernel_from_args(args)[0])
    ok = True
    for s in range(args.max_sum + 1):
        for p in range(s + 1):
            q = s - p
            row = {"p": p, "q": q, "C": str(spectral.cpq(p, q)), "value": float(spectral.cpq(p, q))}
            if kernels and s % 2:
                closed, brute = spectral.moment_identity(p, q, kernels[0])
                gap = abs(closed - brute) if abs(closed) < 1e-10 else abs(closed - brute) / abs(closed)
                row.update(closed=closed, brute=brute, gap=gap)
                ok &= gap < (1e-10 if abs(closed) < 1e-10 else 1e-6)
            rows.append(row)
    emit({"cpq": rows}, args.out)
    return EXIT_OK if ok else EXIT_FAIL


def _symbol_from_config(args):
    cfg = load_config(args.config)
    kernel = build_kernel(cfg.kernel, Path(args.config).parent)
    spec = build_spec(cfg, kernel)
    return spectral.build_symbol(spec), cfg


def cmd_roots(args):
    sym, _ = _symbol_from_config(args)
    roots = spectral.char_roots(sym, args.l_max)
    emit(roots.as_list(), args.out)
    return EXIT_OK


def cmd_pairing(args):
    sym, _ = _symbol_from_config(args)
    roots = spectral.char_roots(sym, args.l_max)
    basis = spectral.center_basis(roots)
    rep = spectral.pairing_report(basis, sym)
    if args.csv:
        np.savetxt(args.csv, np.array(rep["quadrature"]), delimiter=",", fmt="%.17g",
                   header=",".join(rep["labels"]), comments="")
    emit(rep, args.out)
    ok = rep["max_rel_gap"] < 1e-4 and abs(rep["det"]) > 0
    return EXIT_OK if ok else EXIT_FAIL


def cmd_expand(args):
    if args.config:
        cfg = load_config(args.config)
        kernel = build_kernel(cfg.kernel, Path(args.config).parent)
        params = cfg.spec.params if cfg.spec else {}
    else:
        kernel, _ = _kernel_from_args(args)
        params = {}
    alpha = args.alpha if args.alpha is not None else params.get("alpha", 1.0)
    if args.family_name == "whitham":
        exp = reduce.expansion_whitham(alpha, kernel)
    else:
        exp = reduce.expansion_nfe(alpha, None, kernel)
    report = exp.as_dict()
    for entry in report["coefficients"]:
        if entry["coefficient"] in exp.arbiter:
            entry["arbiter_value"] = exp.arbiter[entry["coefficient"]]["arbiter_value"]
    emit(report, args.out)
    ok = all(c.agrees for c in exp.coefficients.values() if c.source != "arbiter")
    return EXIT_OK if ok else EXIT_FAIL


def make_guess(block: GuessBlock, x, dim, spec=None):
    g = block
    if g.shape == "zero":
        vals = np.zeros_like(x)
    elif g.shape == "constant":
        vals = np.full_like(x, g.amplitude)
    elif g.shape == "cos":
        vals = g.amplitude * np.cos(g.rate * x)
    elif g.shape == "sech2":
        vals = g.amplitude / np.cosh(g.rate * (x - g.offset)) ** 2
    elif g.shape == "tanh-down":
        vals = 0.5 * g.amplitude * (1 - np.tanh(g.rate * (x - g.offset)))
    elif g.shape == "tanh-up":
        vals = 0.5 * g.amplitude * (1 + np.tanh(g.rate * (x - g.offset)))
    else:
        raise ConfigError(f"guess shape {g.shape!r} is not available here")
    return np.repeat(vals[:, None], dim, axis=1) if dim > 1 else vals[:, None]


def _solve_config(block: SolveBlock, period=None):
    kw = block.model_dump(exclude={"guess", "continuation", "twist"})
    kw["period"] = period if period is not None else (kw["period"] or 2 * np.pi)
    return solvers.SolveConfig(**kw)


def cmd_solve(args):
    cfg = load_config(args.config)
    if cfg.spec is None or cfg.solve is None:
        raise ConfigError("solve needs spec and solve blocks")
    if cfg.spec.family != args.family_name:
        raise ConfigError(f"config describes {cfg.spec.family!r}, not {args.family_name!r}")
    kernel = build_kernel(cfg.kernel, Path(args.config).parent)
    block = cfg.solve
    outdir = Path(args.out or cfg.output.get("dir", "."))
    outdir.mkdir(parents=True, exist_ok=True)
    spec = build_spec(cfg, kernel)
    summary = {"family": args.family_name}
    if args.family_name == "nls":
        scfg = _solve_config(block)
        res = solvers.nls_step_solve(spec, scfg, twist=block.twist)
        prof = res.profile
        charge = solvers.gauge_charge(prof)[1:-1]
        summary.update(converged=res.converged, rate=res.rate, rho=res.rho, residual=res.residual,
                       message=res.message, charge_spread=float(np.ptp(charge)))
        points = [solvers.BranchPoint(spec.params["c"], solvers.amplitude(prof), res.rate,
                                      float(np.mean(charge)), res.residual)]
        if not res.converged:
            quad.write_profile(prof, outdir / "profile.csv")
            summary["status"] = "not converged"
            emit(summary, outdir / "summary.json")
            return EXIT_ERROR
    else:
        period = block.period
        if block.topology == "periodic":
            x = quad.periodic_grid(period or 2 * np.pi, block.n)
        else:
            x = quad.line_grid(block.left, block.right, block.h)
        guess = make_guess(block.guess, x, spec.dim, spec)
        scfg = _solve_config(block, period)
        kind = block.topology
        if block.continuation:
            name = block.continuation.param
            points = solvers.continue_branch(lambda p: build_spec(cfg, kernel, {name: p}), scfg,
                                             block.continuation.values, guess, kind=kind)
            prof = points[-1].profile
        else:
            prof = (solvers.solve_periodic if kind == "periodic" else solvers.solve_line)(spec, scfg, guess)
            points = [solvers._branch_point(spec, spec.params.get("c", 0.0), prof)]
        summary.update(residual=points[-1].residual, amplitude=points[-1].amplitude,
                       period_or_speed=points[-1].period_or_speed)
        if kind == "periodic":
            summary["spectral_tail"] = solvers.spectral_tail(prof)
    quad.write_profile(prof, outdir / "profile.csv")
    solvers.write_branch(points, outdir / "branch.csv")
    emit(summary, outdir / "summary.json")
    return EXIT_OK


def _verify_inputs(args):
    cfg = load_config(args.spec)
    kernel = build_kernel(cfg.kernel, Path(args.spec).parent)
    spec = build_spec(cfg, kernel)
    prof = quad.read_profile(args.profile) if getattr(args, "profile", None) else None
    return cfg, spec, prof, cfg.verify or VerifyBlock()


def cmd_verify(args):
    cfg, spec, prof, vb = _verify_inputs(args)
    what = args.identity
    if what != "greens-formula" and prof is None:
        raise ConfigError(f"verify {what} needs --profile")
    if what == "noether":
        shifts = args.shifts or vb.shifts
        if spec.x_dependent:
            raise ConfigError("translation charge is not conserved for x-dependent specs")
        span = prof.period if prof.topology == "periodic" else 0.25 * (prof.x[-1] - prof.x[0]) * prof.margin
        taus = np.arange(shifts) * (span / shifts)
        rel, c0 = var.charge_constancy(spec, prof, var.SymmetryGenerator.translation(), taus, strict=False)
        tol = vb.tol or 1e-8
        report = {"identity": "noether", "H0": c0, "relative_deviation": rel,
                  "shifts": shifts, "tol": tol, "passed": rel < tol}
    elif what == "dissipation":
        a = args.a if args.a is not None else vb.a
        b = args.b if args.b is not None else vb.b
        lhs, rhs, gap = var.dissipation_check(spec, prof, a, b)
        tol = vb.tol or 1e-4
        report = {"identity": "dissipation", "delta_L": lhs, "dissipated": rhs, "gap": gap, "a": a, "b": b,
                  "tol": tol, "passed": gap < tol}
    elif what == "hamiltonian-relation":
        rng = np.random.default_rng(vb.seed)
        step = args.fd_step or vb.fd_step
        gaps = []
        for _ in range(vb.samples):
            v = _random_bump(rng, spec.dim, prof)
            gaps.append(var.hamiltonian_relation_check(spec, prof, v, step)["gap"])
        tol = vb.tol or 1e-4
        report = {"identity": "hamiltonian-relation", "fd_step": step, "gaps": gaps, "max_gap": max(gaps),
                  "tol": tol, "passed": max(gaps) < tol}
    else:
        rng = np.random.default_rng(vb.seed)
        a = args.a if args.a is not None else vb.a
        b = args.b if args.b is not None else vb.b
        u = prof if prof is not None else _random_bump(rng, spec.dim, None, base=0.0, span=(a, b))
        lhs, rhs, gap = var.greens_formula_check(spec, u, var.SymmetryGenerator.translation(), a, b)
        tol = vb.tol or 1e-6
        report = {"identity": "greens-formula", "integral": lhs, "boundary": rhs, "gap": gap, "a": a, "b": b,
                  "tol": tol, "passed": gap < tol}
    emit(report, args.out)
    if not report["passed"]:
        print(f"identity {what} violated: {dumps({k: report[k] for k in report if k != 'gaps'})}", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def _random_bump(rng, dim, prof, base=None, span=(-3.0, 3.0)):
    """Smooth compactly supported random perturbation (sum of three C-infinity bumps).

    One bump straddles each end of `span` and one sits inside, so boundary
    terms at the span ends are not trivially zero.
    """
    a, b = span
    centers = np.array([a, b, 0.5 * (a + b)]) + rng.uniform(-0.5, 0.5, 3)
    widths = rng.uniform(0.75, 1.5, 3)
    amps = rng.normal(size=(3, dim)) * 0.1
    if prof is not None and prof.topology == "periodic":
        T = prof.period
        k = np.arange(1, 4)
        a, b = rng.normal(size=(3, dim)) * 0.1, rng.normal(size=(3, dim)) * 0.1
        x = quad.periodic_grid(T, prof.n)
        vals = sum(np.cos(2 * np.pi * kk * x / T)[:, None] * a[i] + np.sin(2 * np.pi * kk * x / T)[:, None] * b[i]
                   for i, kk in enumerate(k))
        return quad.GridProfile(x, vals, "periodic", period=T)

    def make(order):
        def fn(x):
            x = np.asarray(x, dtype=float)
            out = np.zeros((x.size, dim)) + ((base or 0.0) if order == 0 else 0.0)
            for c, w, a in zip(centers, widths, amps):
                out += bump_derivative((x - c) / w, order)[:, None] / w ** order * a
            return out
        return fn

    return quad.FunctionProfile(make(0), (make(1), make(2)), dim=dim, scale=float(widths.min()) / 8)


def bump_derivative(t, order):
    """exp(-1/(1-t^2)) on |t| < 1 and its derivatives up to order 2."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    m = np.abs(t) < 1
    s = t[m]
    g = np.exp(-1.0 / (1 - s * s))
    if order == 0:
        out[m] = g
    elif order == 1:
        out[m] = g * (-2 * s / (1 - s * s) ** 2)
    elif order == 2:
        d1 = -2 * s / (1 - s * s) ** 2
        d2 = (-2 * (1 - s * s) ** 2 - 8 * s * s * (1 - s * s)) / (1 - s * s) ** 4
        out[m] = g * (d1 * d1 + d2)
    else:
        raise ConfigError("bump derivatives are available up to order 2")
    return out


# -------------------------------------------------------------------- parser


def _kernel_flags(p):
    p.add_argument("--config", help="run-config JSON with a kernel block")
    p.add_argument("--family", choices=["gaussian", "exponential", "compact-bump", "mexican-hat", "tabulated"])
    p.add_argument("--width", type=float)
    p.add_argument("--rate", type=float)
    p.add_argument("--radius", type=float)
    p.add_argument("--weight", type=float)
    p.add_argument("--widths", help="comma-separated")
    p.add_argument("--weights", help="comma-separated")
    p.add_argument("--samples", help="comma-separated samples at r = 0, step, 2 step, ...")
    p.add_argument("--grid-step", dest="grid_step", type=float)
    p.add_argument("--decay-rate", dest="decay_rate", type=float)
    p.add_argument("--csv", help="two-column CSV (r, value) for a tabulated kernel")
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--eta0", type=float)


def build_parser():
    parser = argparse.ArgumentParser(prog="nlh", description=__doc__.splitlines()[0])
    parser.add_argument("--threads", type=int, default=1,
                        help="accepted for interface stability; every computation here is single-threaded")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-kernel", help="check evenness, symmetry, first moment and decay")
    _kernel_flags(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate_kernel)

    p = sub.add_parser("moments", help="kernel moments kappa_0..kappa_M")
    _kernel_flags(p)
    p.add_argument("--max-order", dest="max_order", type=int, default=4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("cpq", help="the constants C_{p,q}, optionally checked on a kernel")
    _kernel_flags(p)
    p.add_argument("--max-sum", dest="max_sum", type=int, default=7)
    p.add_argument("--out")
    p.set_defaults(func=cmd_cpq)

    for name, func, help_ in (("roots", cmd_roots, "characteristic roots on the imaginary axis"),
                              ("pairing", cmd_pairing, "Gram matrix of the presymplectic form on the center basis")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        p.add_argument("--l-max", dest="l_max", type=float, default=5.0)
        p.add_argument("--out")
        if name == "pairing":
            p.add_argument("--csv", help="write the quadrature Gram matrix here")
        p.set_defaults(func=func)

    p = sub.add_parser("expand", help="reduced expansion coefficients")
    p.add_argument("family_name", choices=["whitham", "nfe"])
    _kernel_flags(p)
    p.add_argument("--alpha", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("solve", help="compute a wave, front, pulse or NLS step profile")
    p.add_argument("family_name", choices=["allen-cahn", "nfe", "whitham", "nls"])
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("verify", help="check an identity on a stored profile")
    p.add_argument("identity", choices=["noether", "dissipation", "hamiltonian-relation", "greens-formula"])
    p.add_argument("--spec", required=True, help="run-config JSON with kernel and spec blocks")
    p.add_argument("--profile")
    p.add_argument("--shifts", type=int)
    p.add_argument("--a", type=float)
    p.add_argument("--b", type=float)
    p.add_argument("--fd-step", dest="fd_step", type=float)
    p.add_argument("--out")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be positive")
    try:
        return args.func(args)
    except (ConfigError, NewtonDiverged, JacobianSingular, ContinuationStalled, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except NLHError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
