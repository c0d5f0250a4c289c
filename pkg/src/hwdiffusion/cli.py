"""Command-line interface.

Every data artifact starts with a header (library version and resolved
configuration) and is a deterministic function of the arguments and input
files. Wall-clock information goes to a ``<out>.meta.json`` sidecar.

Exit status: 0 on success, 1 on usage or validation errors, 2 on runtime
failures.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import __version__, testfunctions
from .benchmark import benchmark_1d_sweep, monotone_within_errors
from .diagnostics import (
    bismut_gradient,
    finite_difference_gradient,
    lyapunov_check,
    occupation_sweep,
    search_kappa,
    solve_qtilde,
)
from .ergodic import VARIANCE_METHODS, ErgodicAccumulator, estimate_variances
from .errors import HWDiffusionError, ValidationError
from .integrator import EmScheduleConfig, default_burn_in, plan_schedule, run_chain
from .metrics import analytic_density_1d, w1_sorted_1d
from .model import derive_params, load_model, phase_zeta

# arguments that never change the data and stay out of headers
_NOT_CONFIG = {"func", "out", "quiet", "threads", "model", "command"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# -- serialisation ---------------------------------------------------------


def _plain(obj):
    """Recursively convert numpy values to JSON-native Python objects."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


class Output:
    def __init__(self, args, config):
        self.args = args
        self.config = _plain(config)
        self.started = time.time()

    @property
    def path(self):
        return self.args.out

    def _header(self):
        return {"hwdiffusion_version": __version__, "command": self.args.command, "config": self.config}

    def write_json(self, result):
        if not self.path:
            return
        doc = {**self._header(), "result": _plain(result)}
        with open(self.path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(doc, indent=2, sort_keys=True) + "\n")
        self._meta()

    def write_csv(self, columns, rows):
        if not self.path:
            return
        with open(self.path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# hwdiffusion {__version__} {self.args.command}\n")
            fh.write("# config " + json.dumps(self.config, sort_keys=True) + "\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(columns)
            for row in rows:
                w.writerow([_cell(row.get(c, "")) for c in columns])
        self._meta()

    def _meta(self):
        meta = {
            "hwdiffusion_version": __version__,
            "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "elapsed_seconds": time.time() - self.started,
            "argv": sys.argv[1:],
        }
        with open(self.path + ".meta.json", "w", encoding="utf-8", newline="\n") as fh:
            fh.write(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    def say(self, line):
        if not self.args.quiet:
            print(line)


def _config(args, **extra):
    cfg = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    cfg.update(extra)
    return cfg


def _floats(text, name):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"{name}: expected comma-separated numbers, got {text!r}") from None


def _params(args):
    model = load_model(args.model)
    return model, derive_params(model, normalize=getattr(args, "normalize", False))


def _vector(text, d, name, default):
    if text is None:
        return np.array(default, dtype=float)
    v = np.array(_floats(text, name))
    if v.shape != (d,):
        raise ValidationError(f"{name} needs {d} comma-separated values, got {len(v)}")
    return v


# -- commands --------------------------------------------------------------


def cmd_model_check(args):
    model = load_model(args.model)
    zeta = phase_zeta(model)
    rescaled = abs(zeta - 1.0) > 1e-9
    params = derive_params(model, normalize=True)
    summary = params.summary()
    out = Output(args, _config(args, model=model.to_dict()))
    out.write_json(
        {
            "zeta_input": zeta,
            "rescaled": rescaled,
            **summary,
            "R": params.R,
            "gamma": params.gamma,
            "Sigma": params.Sigma,
            "sigma": params.sigma,
        }
    )
    note = " (service rates rescaled to unit phase mean)" if rescaled else ""
    out.say(f"zeta={zeta!r} e_gamma={summary['e_gamma']!r} min_eig={summary['min_eig']!r}{note}")
    return 0


def cmd_schedule(args):
    eta, n = plan_schedule(args.delta, args.varsigma, args.safety)
    burn = default_burn_in(n, eta, args.c1)
    out = Output(args, _config(args))
    out.write_json({"eta": eta, "n_steps": n, "burn_in": burn})
    out.say(f"eta={eta!r} n_steps={n} burn_in={burn}")
    return 0


def cmd_simulate(args):
    model, params = _params(args)
    d = params.d
    names = [s for s in args.h.split(",") if s]
    tfs = {name: testfunctions.resolve(name, d) for name in names}
    x0 = _vector(args.x0, d, "--x0", np.zeros(d))
    if args.eta is None:
        if args.delta is None or args.varsigma is None:
            raise UsageError("simulate: give --eta, or --delta and --varsigma")
        eta, steps = plan_schedule(args.delta, args.varsigma, args.safety)
    else:
        eta, steps = args.eta, args.steps
    if steps is None:
        raise UsageError("simulate: --steps is required with --eta")
    burn = args.burn_in if args.burn_in is not None else default_burn_in(steps, eta)
    if args.replicas < 1:
        raise ValidationError("--replicas must be >= 1")
    per = math.ceil(steps / args.replicas)
    cfg = EmScheduleConfig(eta=eta, n_steps=per + burn, x0=x0, burn_in=burn, seed=args.seed)
    checkpoint = args.checkpoint or max(1, cfg.n_steps // 10)

    def one(i):
        acc = ErgodicAccumulator(d, tfs, seed=args.seed + i)
        rows = []

        def record(step, sink):
            if sink.count:
                rows.append({"replica": i, "step": step, **sink.snapshot()})

        traj = run_chain(params, replace(cfg, seed=args.seed + i), acc, checkpoint=checkpoint, on_checkpoint=record)
        # the last state of the chain, distinct from the ergodic averages
        rows[-1].update({f"final_x{j}": float(v) for j, v in enumerate(traj.final)})
        return acc, rows, traj.final

    threads = max(1, min(args.threads, args.replicas))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(args.replicas)))
    else:
        results = [one(i) for i in range(args.replicas)]
    merged = results[0][0]
    for acc, _, _ in results[1:]:
        merged = merged.merge(acc)
    rows = [r for _, rs, _ in results for r in rs]
    ensemble = np.mean([f for _, _, f in results], axis=0)
    final = {"replica": "all", "step": cfg.n_steps, **merged.snapshot()}
    final.update({f"final_x{j}": float(v) for j, v in enumerate(ensemble)})
    rows.append(final)

    extra = ""
    if d == 1:
        bench = analytic_density_1d(params.beta, params.alpha, float(params.Sigma[0, 0]))
        w1 = w1_sorted_1d(merged.reservoir[:, 0], bench)
        final["w1_reservoir"] = w1
        extra = f" w1_reservoir={w1!r} (reservoir of {len(merged.reservoir)})"
    columns = list(final.keys())
    out = Output(args, _config(args, model=model.to_dict(), eta=eta, steps=steps, burn_in=burn, checkpoint=checkpoint))
    out.write_csv(columns, rows)
    means = ",".join(repr(float(v)) for v in merged.mean())
    out.say(f"states={merged.count} replicas={args.replicas} eta={eta!r} mean=[{means}]{extra}")
    return 0


def cmd_variance(args):
    model, params = _params(args)
    h = testfunctions.resolve(args.h, params.d)
    methods = VARIANCE_METHODS if args.method == "all" else tuple(args.method.split(","))
    unknown = set(methods) - set(VARIANCE_METHODS)
    if unknown:
        raise UsageError(f"--method: unknown {sorted(unknown)}; choose from all,{','.join(VARIANCE_METHODS)}")
    rep = estimate_variances(
        params,
        h,
        args.eta,
        args.steps,
        burn_in=args.burn_in,
        seed=args.seed,
        methods=methods,
        n_batches=args.batches,
        max_lag=args.max_lag,
        stein_points=args.stein_points,
        stein_depth=args.stein_depth,
    )
    out = Output(args, _config(args, model=model.to_dict()))
    out.write_json(rep.to_dict())
    parts = " ".join(f"{k}={v.estimate!r}+-{v.stderr!r}" for k, v in rep.estimates.items())
    out.say(f"per-step variance of {args.h}: {parts} (mu_hat={rep.mu_hat!r})")
    return 0


def cmd_lyapunov(args):
    model, params = _params(args)
    grid_kw = dict(radius=args.grid_radius, n_radial=args.n_radial, n_directions=args.n_directions)
    if args.kappa == "auto":
        spec, report = search_kappa(params, **grid_kw)
    else:
        try:
            kappa = float(args.kappa)
        except ValueError:
            raise UsageError(f"--kappa: expected a number or 'auto', got {args.kappa!r}") from None
        spec = solve_qtilde(params, kappa=kappa)
        report = lyapunov_check(spec, params, **grid_kw)
    result = {
        "Qtilde": spec.Q,
        "kappa": spec.kappa,
        "max_eig_strict": spec.max_eig_strict,
        "max_eig_semi": spec.max_eig_semi,
        "drift": report.to_dict(),
    }
    if not args.no_doubling:
        fine = lyapunov_check(
            replace(spec, constants={}), params, radius=args.grid_radius, n_radial=2 * args.n_radial - 1, n_directions=2 * args.n_directions
        )
        result["doubled_grid"] = fine.to_dict()
        result["c1_relative_change"] = abs(fine.c1 - report.c1) / report.c1
    out = Output(args, _config(args, model=model.to_dict()))
    out.write_json(result)
    out.say(f"kappa={spec.kappa!r} c1={report.c1!r} c1_breve={report.c1_breve!r} margin={report.margin!r}")
    return 0


def cmd_gradient_check(args):
    model, params = _params(args)
    d = params.d
    psi = testfunctions.resolve(args.psi, d)
    if testfunctions.bound(args.psi) is None and not args.allow_unbounded:
        raise ValidationError(f"--psi {args.psi!r} is unbounded; pass --allow-unbounded to use it")
    x = _vector(args.x0, d, "--x0", np.zeros(d))
    u = _vector(args.u, d, "--u", np.eye(d)[0])
    kw = dict(t=args.t, n_paths=args.paths, eta=args.eta, psi=psi)
    b_est, b_se = bismut_gradient(params, args.eps, x, u, seed=args.seed, method=args.method, **kw)
    f_est, f_se = finite_difference_gradient(params, args.eps, x, u, seed=args.seed + 1, h=args.fd_step, **kw)
    z = (b_est - f_est) / math.hypot(b_se, f_se)
    out = Output(args, _config(args, model=model.to_dict()))
    out.write_json(
        {"bismut": {"estimate": b_est, "stderr": b_se}, "finite_difference": {"estimate": f_est, "stderr": f_se}, "z": z}
    )
    out.say(f"bismut={b_est!r}+-{b_se!r} finite_difference={f_est!r}+-{f_se!r} z={z!r}")
    return 0


def cmd_occupation(args):
    model, params = _params(args)
    eps = _floats(args.eps_sweep, "--eps-sweep")
    x = _vector(args.x0, params.d, "--x0", np.zeros(params.d))
    res = occupation_sweep(params, x, args.t, eps, args.paths, args.eta, seed=args.seed)
    rows = []
    prev = None
    for r in res:
        rows.append(
            {
                "eps": r.eps,
                "estimate": r.estimate,
                "stderr": r.stderr,
                "estimate_over_eps": r.estimate / r.eps,
                "ratio_to_previous": "" if prev is None else r.estimate / prev,
            }
        )
        prev = r.estimate
    out = Output(args, _config(args, model=model.to_dict()))
    out.write_csv(list(rows[0]), rows)
    out.say(" ".join(f"L(eps={r.eps!r})={r.estimate!r}+-{r.stderr!r}" for r in res))
    return 0


def cmd_benchmark_1d(args):
    etas = _floats(args.eta_sweep, "--eta-sweep")
    if args.steps_per_eta == "auto":
        steps = None
    else:
        try:
            steps = int(float(args.steps_per_eta))
        except ValueError:
            raise UsageError(f"--steps-per-eta: expected an integer or 'auto', got {args.steps_per_eta!r}") from None
    rows, bench, fit = benchmark_1d_sweep(
        args.beta,
        args.alpha,
        etas,
        ca2=args.ca2,
        horizon=args.horizon,
        n_replicas=args.replicas,
        seed=args.seed,
        thin_time=args.thin_time,
        burn_time=args.burn_time,
        threads=args.threads,
        steps_per_eta=steps,
    )
    fitd = {"fit_slope": fit.slope, "fit_intercept": fit.intercept, "fit_r2": fit.r2} if fit else {}
    table = [{**r.__dict__, **fitd} for r in rows]
    out = Output(args, _config(args))
    out.write_csv(list(table[0]), table)
    slope = f" slope={fit.slope!r} r2={fit.r2!r}" if fit else ""
    mono = monotone_within_errors(rows)
    out.say(" ".join(f"W1({r.eta!r})={r.w1!r}+-{r.stderr!r}" for r in rows) + f"{slope} monotone={mono}")
    return 0


# -- parser ----------------------------------------------------------------


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker threads (default: all cores)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file (CSV or JSON depending on the command)")
    common.add_argument("--quiet", action="store_true", help="suppress the summary line")

    modelled = argparse.ArgumentParser(add_help=False)
    modelled.add_argument("--model", required=True, help="model JSON file")
    modelled.add_argument("--normalize", action="store_true", help="rescale service rates to unit phase mean")

    p = _Parser(prog="hwdiffusion", description="Diffusion limits of many-server queues with abandonment.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("model-check", parents=[common], help="validate a model and print derived constants")
    s.add_argument("--model", required=True)
    s.set_defaults(func=cmd_model_check)

    s = sub.add_parser("schedule", parents=[common], help="step size and step count for a target accuracy")
    s.add_argument("--delta", type=float, required=True)
    s.add_argument("--varsigma", type=float, required=True)
    s.add_argument("--safety", type=float, default=10.0)
    s.add_argument("--c1", type=float, default=None, help="drift rate for the burn-in rule")
    s.set_defaults(func=cmd_schedule)

    s = sub.add_parser("simulate", parents=[common, modelled], help="run the Euler-Maruyama chain")
    s.add_argument("--eta", type=float)
    s.add_argument("--steps", type=int, help="total recorded steps across replicas")
    s.add_argument("--delta", type=float)
    s.add_argument("--varsigma", type=float)
    s.add_argument("--safety", type=float, default=10.0)
    s.add_argument("--burn-in", type=int, default=None)
    s.add_argument("--replicas", type=int, default=1)
    s.add_argument("--checkpoint", type=int, default=None, help="steps between running-statistics rows")
    s.add_argument("--x0", default=None, help="comma-separated initial state (default: origin)")
    s.add_argument("--h", default="tanh-sum", help="comma-separated test functions to track")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("variance", parents=[common, modelled], help="asymptotic variance of an ergodic average")
    s.add_argument("--h", default="tanh-sum")
    s.add_argument("--method", default="all")
    s.add_argument("--eta", type=float, default=0.05)
    s.add_argument("--steps", type=int, default=4_000_000)
    s.add_argument("--burn-in", type=int, default=None)
    s.add_argument("--batches", type=int, default=1000)
    s.add_argument("--max-lag", type=int, default=None)
    s.add_argument("--stein-points", type=int, default=40000)
    s.add_argument("--stein-depth", type=int, default=None)
    s.set_defaults(func=cmd_variance)

    s = sub.add_parser("lyapunov", parents=[common, modelled], help="fit the Lyapunov drift condition")
    s.add_argument("--grid-radius", type=float, default=20.0)
    s.add_argument("--n-radial", type=int, default=81)
    s.add_argument("--n-directions", type=int, default=32)
    s.add_argument("--kappa", default="1", help="weight of the quadratic form, or 'auto'")
    s.add_argument("--no-doubling", action="store_true", help="skip the refined-grid stability check")
    s.set_defaults(func=cmd_lyapunov)

    s = sub.add_parser("gradient-check", parents=[common, modelled], help="Bismut gradient vs finite differences")
    s.add_argument("--eps", type=float, default=0.01)
    s.add_argument("--t", type=float, default=1.0)
    s.add_argument("--paths", type=int, default=100000)
    s.add_argument("--eta", type=float, default=5e-3)
    s.add_argument("--x0", default=None)
    s.add_argument("--u", default=None, help="direction (default: first unit vector)")
    s.add_argument("--psi", default="tanh-sum")
    s.add_argument("--allow-unbounded", action="store_true")
    s.add_argument("--method", choices=("expm", "euler"), default="expm")
    s.add_argument("--fd-step", type=float, default=1e-2)
    s.set_defaults(func=cmd_gradient_check)

    s = sub.add_parser("occupation", parents=[common, modelled], help="weighted occupation time of the kink")
    s.add_argument("--eps-sweep", default="0.2,0.1,0.05")
    s.add_argument("--t", type=float, default=10.0)
    s.add_argument("--paths", type=int, default=2000)
    s.add_argument("--eta", type=float, default=1e-3)
    s.add_argument("--x0", default=None)
    s.set_defaults(func=cmd_occupation)

    s = sub.add_parser("benchmark-1d", parents=[common], help="W1 against the exact law over a step-size sweep")
    s.add_argument("--beta", type=float, default=1.0)
    s.add_argument("--alpha", type=float, default=0.5)
    s.add_argument("--ca2", type=float, default=1.0)
    s.add_argument("--eta-sweep", default="0.1,0.05,0.025,0.0125")
    s.add_argument("--steps-per-eta", default="auto", help="'auto' (fixed time horizon) or a step count")
    s.add_argument("--horizon", type=float, default=2.0e6, help="total simulated time per step size")
    s.add_argument("--replicas", type=int, default=8)
    s.add_argument("--thin-time", type=float, default=1.0)
    s.add_argument("--burn-time", type=float, default=20.0)
    s.set_defaults(func=cmd_benchmark_1d)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValidationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except HWDiffusionError as exc:
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
