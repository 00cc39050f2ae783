"""Command-line front end.

Every command resolves its settings into a RunConfig (defaults, then an
optional JSON ``--config`` file, then explicit flags) and writes that
config, its hash, the seed and the package version into the output header.
No timestamps are written, so equal configs give byte-identical files.

Exit codes: 0 success, 1 validation failure, 2 usage or malformed input,
3 no onset, 4 convergence failure, 5 kappa <= 0 (second order out of scope).
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, chi2, datagen, gaussian, ibsolver, onset, perturb
from .errors import ConvergenceError, HigherOrderRequiredError, IBOnsetError, InvalidDistributionError, NoOnsetError
from .probcore import JointDistribution, encoder_informations, kl_divergence, mutual_information

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_USAGE = 2
EXIT_NO_ONSET = 3
EXIT_CONVERGENCE = 4
EXIT_KAPPA = 5

AUTO_GRID_POINTS = 25


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    params: dict = field(default_factory=dict)
    jobs: int = 1  # execution detail only, so not part of the hashed config

    def canonical(self) -> str:
        return json.dumps({"command": self.command, **self.params}, sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def header(self) -> list[str]:
        return [
            f"ibonset {__version__}",
            f"command: {self.command}",
            f"seed: {self.params.get('seed')}",
            f"config_sha256: {self.digest}",
            f"config: {self.canonical()}",
        ]

    def metadata(self) -> dict:
        return {
            "version": __version__,
            "command": self.command,
            "seed": self.params.get("seed"),
            "config_sha256": self.digest,
            "config": json.loads(self.canonical()),
        }


# -- shared plumbing -----------------------------------------------------------

COMMON_DEFAULTS = {"seed": 0, "tol": 1e-11, "restarts": 32, "jobs": 1}


def _resolve(args: argparse.Namespace, defaults: dict) -> RunConfig:
    params = {**COMMON_DEFAULTS, **defaults}
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise UsageError("config file must hold a JSON object")
        unknown = set(loaded) - set(params) - {"command"}
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        params.update({k: v for k, v in loaded.items() if k != "command"})
    for key in params:
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    jobs = params.pop("jobs")
    if not isinstance(jobs, int) or jobs < 1:
        raise UsageError("jobs must be a positive integer")
    return RunConfig(args.command, params, jobs)


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text)


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _load_joint(path) -> JointDistribution:
    if path is None:
        raise UsageError("--input is required")
    try:
        return JointDistribution.load(path)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise UsageError(f"bad number list {text!r}") from exc


def parse_beta_grid(spec, beta_c: float | None = None) -> list[float]:
    """Grid from ``auto``, ``start:stop:num`` or a comma list (or a JSON list)."""
    if isinstance(spec, (list, tuple)):
        grid = [float(b) for b in spec]
    elif spec == "auto":
        if beta_c is None or not math.isfinite(beta_c):
            raise UsageError("auto grid needs a finite beta_c")
        lo = max(beta_c - 0.2, 0.0)
        grid = np.linspace(lo, beta_c + 1.0, AUTO_GRID_POINTS).tolist()
    elif ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise UsageError("range grid must be start:stop:num")
        try:
            start, stop, num = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError as exc:
            raise UsageError(f"bad grid {spec!r}") from exc
        if num < 1:
            raise UsageError("grid needs at least one point")
        grid = np.linspace(start, stop, num).tolist()
    else:
        grid = _float_list(spec)
    if not grid or any(b < 0 or not math.isfinite(b) for b in grid):
        raise UsageError("beta grid must be a nonempty list of finite nonnegative values")
    return sorted(grid)


def _onset(joint, cfg: RunConfig) -> onset.OnsetSolution:
    p = cfg.params
    return onset.solve_onset(joint, tol=p["tol"], max_restarts=p["restarts"], seed=p["seed"])


# -- commands ----------------------------------------------------------------


def cmd_onset(args) -> int:
    cfg = _resolve(args, {"input": None})
    joint = _load_joint(cfg.params["input"])
    sol = _onset(joint, cfg)
    chi = chi2.eta_chi2(joint)
    k = perturb.kappa(joint, sol)
    report = {
        "metadata": cfg.metadata(),
        "mutual_information_bits": mutual_information(joint),
        "onset": sol.to_json_dict(),
        "chi2": chi.to_json_dict(),
        "kappa": k,
        "prediction": None,
    }
    code = EXIT_OK
    try:
        report["prediction"] = perturb.predict(joint, sol).to_json_dict()
    except HigherOrderRequiredError as exc:
        report["higher_order_required"] = str(exc)
        code = EXIT_KAPPA
    _emit(_json_text(report), args.output)
    if code == EXIT_KAPPA:
        print(f"kappa = {k:.3g} <= 0: second-order predictions omitted", file=sys.stderr)
    return code


def _prediction_path(output: str) -> Path:
    out = Path(output)
    return out.with_name(out.stem + ".prediction" + (out.suffix or ".csv"))


def _series_start(se: perturb.SeriesEncoder, beta_c: float):
    """Second-order encoder at beta - beta_c, where it is a valid encoder."""

    def start(beta):
        eps = beta - beta_c
        if eps <= 0:
            return None
        q = se.at(eps)
        return q if q.min() >= 0 else None

    return start


def cmd_frontier(args) -> int:
    cfg = _resolve(args, {"input": None, "beta_grid": "auto", "z_cardinality": None, "ib_tol": 1e-10, "ib_restarts": 3})
    p = cfg.params
    joint = _load_joint(p["input"])
    try:
        sol = _onset(joint, cfg)
    except NoOnsetError:
        sol = None
    grid = parse_beta_grid(p["beta_grid"], None if sol is None else sol.beta_c)
    pred = None
    if sol is not None:
        try:
            pred = perturb.predict(joint, sol)
        except HigherOrderRequiredError:
            pred = None
    points = ibsolver.frontier_sweep(
        joint,
        grid,
        p["z_cardinality"],
        tol=p["ib_tol"],
        seed=p["seed"],
        n_restarts=p["ib_restarts"],
        extra_init=None if pred is None else _series_start(perturb.optimal_series(joint, sol, pred), sol.beta_c),
    )
    _emit(ibsolver.frontier_csv(points, cfg.header()), args.output)
    buf = io.StringIO()
    header = cfg.header()
    if sol is None:
        header.append("prediction: no onset")
    elif pred is None:
        header.append("prediction: unavailable, kappa <= 0")
    else:
        header.append(f"prediction: beta_c={sol.beta_c!r} kappa={pred.kappa!r}")
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["beta", "eps", "i_zx_bits", "i_zy_bits", "loss_bits"])
    if pred is not None:
        for b in grid:
            eps = max(b - sol.beta_c, 0.0)
            w.writerow([repr(b), repr(eps), repr(eps * pred.i1_zx), repr(eps * pred.i1_zy), repr(eps * eps * pred.l2)])
    if args.output is not None:
        _prediction_path(args.output).write_text(buf.getvalue())
    return EXIT_OK


def cmd_chi2(args) -> int:
    cfg = _resolve(args, {"input": None})
    joint = _load_joint(cfg.params["input"])
    chi = chi2.eta_chi2(joint)
    report = {
        "metadata": cfg.metadata(),
        **chi.to_json_dict(),
        "chi2_information": chi2.chi2_information(joint),
        "mutual_information_bits": mutual_information(joint),
    }
    _emit(_json_text(report), args.output)
    return EXIT_OK


def cmd_gauss(args) -> int:
    cfg = _resolve(args, {"rho": 0.5, "input": None, "n_bins": 128, "truncation": 5.0})
    p = cfg.params
    if p["input"] is not None:
        try:
            g = gaussian.GaussianJoint.from_json(Path(p["input"]).read_text())
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read Gaussian spec {p['input']}: {exc}") from exc
    else:
        g = gaussian.GaussianJoint.scalar(float(p["rho"]))
    beta_c, phi = gaussian.gaussian_onset(g)
    report = {"metadata": cfg.metadata(), "closed_form_beta_c": beta_c, "direction": phi.tolist()}
    if g.d_x == 1 and g.d_y == 1:
        joint = gaussian.discretize_gaussian(g, p["n_bins"], p["truncation"])
        disc = _onset(joint, cfg).beta_c
        report["discretized_beta_c"] = disc
        report["relative_error"] = abs(disc - beta_c) / beta_c
    _emit(_json_text(report), args.output)
    return EXIT_OK


SWEEP_COLUMNS = ["param", "i_xy_bits", "beta_c", "beta_c_hat", "i1_zy", "kappa"]


def _sweep_point(task):
    kind, key, value, extra, solver = task
    if kind == "fig2":
        joint = datagen.binary_classification_joint(datagen.fig2_spec(key, value, extra["fixed"], extra["n_bins"]))
    else:
        joint = datagen.noisy_function_joint(
            datagen.NoisyFunctionSpec(key, value, extra["n_x_bins"], extra["n_y_bins"])
        )
    sol = onset.solve_onset(joint, **solver)
    k = perturb.kappa(joint, sol)
    try:
        i1 = perturb.predict(joint, sol).i1_zy
    except HigherOrderRequiredError:
        i1 = math.nan
    return [value, mutual_information(joint), sol.beta_c, chi2.eta_chi2(joint).beta_c_hat, i1, k]


class _Deferred:
    """Future-like wrapper so serial and pooled sweeps share one loop."""

    def __init__(self, fn, arg):
        self.fn, self.arg = fn, arg

    def result(self):
        return self.fn(self.arg)


def _run_sweep(kind, key, values, extra, cfg: RunConfig) -> str:
    p = cfg.params
    solver = {"tol": p["tol"], "max_restarts": p["restarts"], "seed": p["seed"]}
    tasks = [(kind, key, float(v), extra, solver) for v in sorted(values)]
    jobs = cfg.jobs
    if jobs == 1:
        results = [_Deferred(_sweep_point, t) for t in tasks]
        pool = None
    else:
        pool = ProcessPoolExecutor(max_workers=jobs)
        results = [pool.submit(_sweep_point, t) for t in tasks]
    rows = []
    try:
        for i, (t, res) in enumerate(zip(tasks, results)):
            try:
                rows.append(res.result())
            except IBOnsetError as exc:
                # keep the exception type (and its exit code), add the point index
                exc.args = (f"sweep point {i} ({t[2]!r}): {exc.args[0] if exc.args else ''}", *exc.args[1:])
                raise
    finally:
        if pool is not None:
            pool.shutdown(cancel_futures=True)
    buf = io.StringIO()
    for line in cfg.header():
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for row in rows:
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def cmd_fig2(args) -> int:
    defaults = {"family": "gaussian", "values": None, "sigma": None, "lambda1": None, "n_bins": 256}
    cfg = _resolve(args, defaults)
    p = cfg.params
    if p["family"] not in datagen.FIG2_SWEEPS:
        raise UsageError(f"unknown family {p['family']!r}")
    values = p["values"] or datagen.FIG2_SWEEPS[p["family"]]["values"]
    if isinstance(values, str):
        values = _float_list(values)
    fixed = {k: p[k] for k in ("sigma", "lambda1") if p[k] is not None}
    _emit(_run_sweep("fig2", p["family"], values, {"fixed": fixed, "n_bins": p["n_bins"]}, cfg), args.output)
    return EXIT_OK


def cmd_fig3(args) -> int:
    defaults = {"function": "cubic", "sigmas": None, "n_x_bins": 32, "n_y_bins": 256}
    cfg = _resolve(args, defaults)
    p = cfg.params
    if p["function"] not in datagen.FUNCTIONS:
        raise UsageError(f"unknown function {p['function']!r}; expected one of {sorted(datagen.FUNCTIONS)}")
    sigmas = p["sigmas"] or datagen.FIG3_SIGMAS
    if isinstance(sigmas, str):
        sigmas = _float_list(sigmas)
    extra = {"n_x_bins": p["n_x_bins"], "n_y_bins": p["n_y_bins"]}
    _emit(_run_sweep("fig3", p["function"], sigmas, extra, cfg), args.output)
    return EXIT_OK


def bsc_joint(delta: float) -> JointDistribution:
    if not 0.0 <= delta <= 1.0:
        raise UsageError("delta must lie in [0, 1]")
    p = 0.5 * np.array([[1.0 - delta, delta], [delta, 1.0 - delta]])
    return JointDistribution.from_array(p)


def cmd_gen(args) -> int:
    defaults = {
        "kind": "fig1",
        "spec": None,
        "family": "gaussian",
        "class1": None,
        "class2": None,
        "function": "cubic",
        "sigma": 0.3,
        "delta": 0.25,
        "rho": 0.5,
        "n_bins": None,
    }
    cfg = _resolve(args, defaults)
    p = cfg.params
    kind = p["kind"]
    if kind == "fig1":
        joint = datagen.fig1_joint()
    elif kind == "bsc":
        joint = bsc_joint(float(p["delta"]))
    elif kind == "gauss":
        joint = gaussian.discretize_gaussian(gaussian.GaussianJoint.scalar(float(p["rho"])), p["n_bins"] or 128)
    elif kind in ("binary", "noisy"):
        if p["spec"] is not None:
            try:
                spec = datagen.load_spec(p["spec"])
            except (OSError, json.JSONDecodeError, TypeError) as exc:
                raise UsageError(f"cannot read spec {p['spec']}: {exc}") from exc
        elif kind == "binary":
            if p["class1"] is None or p["class2"] is None:
                raise UsageError("binary needs --class1 and --class2 (or --spec)")
            c1, c2 = _float_list(p["class1"]), _float_list(p["class2"])
            spec = datagen.BinaryClassSpec(p["family"], tuple(c1), tuple(c2), p["n_bins"] or 256)
        else:
            spec = datagen.NoisyFunctionSpec(p["function"], float(p["sigma"]))
        joint = (
            datagen.binary_classification_joint(spec)
            if isinstance(spec, datagen.BinaryClassSpec)
            else datagen.noisy_function_joint(spec)
        )
    else:
        raise UsageError(f"unknown kind {kind!r}")
    if args.output is not None and Path(args.output).suffix.lower() == ".csv":
        _emit(joint.to_csv(cfg.header()), args.output)
    else:
        _emit(joint.to_json() + "\n", args.output)
    return EXIT_OK


def validate_joint(joint: JointDistribution, n_cases: int = 200, seed: int = 0, tol: float = 1e-11) -> dict:
    """Invariant checks on one joint; every entry holds a bool under ``ok``."""
    rng = np.random.default_rng(seed)
    nx = joint.shape[0]
    checks = {}
    checks["normalization"] = {"ok": abs(joint.p.sum() - 1.0) <= 1e-12 and bool(np.all(joint.p >= 0))}

    worst_dpi = -math.inf
    worst_kl = math.inf
    for _ in range(n_cases):
        q = ibsolver.random_encoder(int(rng.integers(2, nx + 2)), nx, rng)
        izx, izy = encoder_informations(q, joint)
        worst_dpi = max(worst_dpi, izy - izx)
        a, b = rng.dirichlet(np.ones(nx)), rng.dirichlet(np.ones(nx))
        worst_kl = min(worst_kl, kl_divergence(a, b))
    checks["dpi"] = {"ok": worst_dpi <= 1e-10, "max_izy_minus_izx": worst_dpi}
    checks["kl_nonnegative"] = {"ok": worst_kl >= 0.0, "min_kl": worst_kl}

    chi = chi2.eta_chi2(joint)
    top = float(chi.singular_values[0]) if len(chi.singular_values) else 0.0
    checks["top_singular_value"] = {"ok": abs(top - 1.0) <= 1e-10, "value": top}
    if chi.has_onset:
        sol = onset.solve_onset(joint, tol=tol, seed=seed)
        checks["bound_chain"] = {
            "ok": chi.eta_chi2 <= sol.eta_kl + 1e-9 and chi.beta_c_hat >= sol.beta_c - 1e-9,
            "eta_chi2": chi.eta_chi2,
            "eta_kl": sol.eta_kl,
        }
        if sol.attained:
            res = onset.fixed_point_residual(joint, sol)
            checks["fixed_point"] = {"ok": res <= 1e-6, "residual": res}
    return checks


def cmd_validate(args) -> int:
    cfg = _resolve(args, {"input": None, "cases": 200})
    p = cfg.params
    joint = _load_joint(p["input"])
    checks = validate_joint(joint, int(p["cases"]), p["seed"], p["tol"])
    ok = all(c["ok"] for c in checks.values())
    _emit(_json_text({"metadata": cfg.metadata(), "ok": ok, "checks": checks}), args.output)
    return EXIT_OK if ok else EXIT_VALIDATION


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of settings; explicit flags override it")
    common.add_argument("--output", "-o", help="output path (default: stdout)")
    common.add_argument("--seed", type=int)
    common.add_argument("--tol", type=float, help="onset iteration tolerance")
    common.add_argument("--restarts", type=int, help="random starts for the onset solver")
    common.add_argument("--jobs", type=int, help="parallel sweep workers")

    parser = argparse.ArgumentParser(prog="ibonset", description="Learning onset of the information bottleneck.")
    parser.add_argument("--version", action="version", version=f"ibonset {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("onset", parents=[common], help="beta_c, r(x), kappa and second-order predictions")
    s.add_argument("--input", "-i")
    s.set_defaults(func=cmd_onset)

    s = sub.add_parser("frontier", parents=[common], help="exact IB frontier plus perturbative overlay")
    s.add_argument("--input", "-i")
    s.add_argument("--beta-grid", dest="beta_grid", help="'auto', start:stop:num, or a comma list")
    s.add_argument("--z-cardinality", dest="z_cardinality", type=int)
    s.add_argument("--ib-tol", dest="ib_tol", type=float)
    s.add_argument("--ib-restarts", dest="ib_restarts", type=int, help="fresh IB starts per grid point")
    s.set_defaults(func=cmd_frontier)

    s = sub.add_parser("chi2", parents=[common], help="eta_chi2 and the fixed-representation bound")
    s.add_argument("--input", "-i")
    s.set_defaults(func=cmd_chi2)

    s = sub.add_parser("gauss", parents=[common], help="Gaussian closed form vs discretized onset")
    s.add_argument("--rho", type=float)
    s.add_argument("--input", "-i", help="GaussianJoint JSON (overrides --rho)")
    s.add_argument("--n-bins", dest="n_bins", type=int)
    s.add_argument("--truncation", type=float)
    s.set_defaults(func=cmd_gauss)

    s = sub.add_parser("fig2", parents=[common], help="binary-classification sweep")
    s.add_argument("--family", choices=sorted(datagen.FIG2_SWEEPS))
    s.add_argument("--values", help="comma list of sweep values")
    s.add_argument("--sigma", type=float, help="gaussian: class-2 standard deviation")
    s.add_argument("--lambda1", type=float, help="poisson: class-1 mean")
    s.add_argument("--n-bins", dest="n_bins", type=int)
    s.set_defaults(func=cmd_fig2)

    s = sub.add_parser("fig3", parents=[common], help="noisy-function sigma sweep")
    s.add_argument("--function", choices=sorted(datagen.FUNCTIONS))
    s.add_argument("--sigmas", help="comma list of noise levels")
    s.add_argument("--n-x-bins", dest="n_x_bins", type=int)
    s.add_argument("--n-y-bins", dest="n_y_bins", type=int)
    s.set_defaults(func=cmd_fig3)

    s = sub.add_parser("gen", parents=[common], help="write a joint distribution (.json or .csv)")
    s.add_argument("kind", nargs="?", choices=["fig1", "bsc", "gauss", "binary", "noisy"])
    s.add_argument("--spec", help="BinaryClassSpec / NoisyFunctionSpec JSON")
    s.add_argument("--family", choices=sorted(datagen.FIG2_SWEEPS))
    s.add_argument("--class1", help="comma list of class-1 parameters")
    s.add_argument("--class2", help="comma list of class-2 parameters")
    s.add_argument("--function", choices=sorted(datagen.FUNCTIONS))
    s.add_argument("--sigma", type=float)
    s.add_argument("--delta", type=float, help="bsc flip probability")
    s.add_argument("--rho", type=float)
    s.add_argument("--n-bins", dest="n_bins", type=int)
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("validate", parents=[common], help="run the invariant suite on a joint")
    s.add_argument("--input", "-i")
    s.add_argument("--cases", type=int)
    s.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvalidDistributionError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NoOnsetError as exc:
        print(f"no onset: {exc}", file=sys.stderr)
        return EXIT_NO_ONSET
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        if exc.diagnostics:
            print(json.dumps(exc.diagnostics), file=sys.stderr)
        return EXIT_CONVERGENCE
    except HigherOrderRequiredError as exc:
        print(f"out of scope: {exc}", file=sys.stderr)
        return EXIT_KAPPA
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
