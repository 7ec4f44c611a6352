"""Command-line front end.

Subcommands: ``build``, ``simulate``, ``estimate``, ``design``,
``reproduce`` and ``fidelity``. Every run writes a manifest with input
digests, the seed, the tool version, wall-clock time and output paths.
The manifest goes next to the primary output (``<out>.manifest.json``) or,
when output goes to stdout, to stderr as a single JSON line.

Exit codes: 0 ok, 1 input error, 2 solver failure, 3 not identifiable,
4 reproduction mismatch.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import warnings
from typing import Optional, Sequence

import numpy as np

from . import __version__, jsonio
from .errors import InputError, NotIdentifiable, TomoEDError
from .examples import EXAMPLES, build_example

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_SOLVER = 2
EXIT_IDENTIFIABILITY = 3
EXIT_MISMATCH = 4

SEED_ENV = "TOMOED_SEED"


def default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise InputError(f"{SEED_ENV} must be an integer, got {raw!r}") from None


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class Run:
    """Collects manifest fields while a command executes."""

    def __init__(self, command: str, argv: Sequence[str], seed: Optional[int] = None):
        self.command = command
        self.argv = list(argv)
        self.seed = seed
        self.inputs: dict[str, str] = {}
        self.outputs: list[str] = []
        self.t0 = time.perf_counter()

    def read_json(self, path):
        obj = jsonio.load_file(path)
        self.inputs[str(path)] = sha256_file(path)
        return obj

    def emit(self, text: str, out: Optional[str]) -> None:
        if out is None or out == "-":
            sys.stdout.write(text if text.endswith("\n") else text + "\n")
            return
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text if text.endswith("\n") else text + "\n")
        self.outputs.append(str(out))

    def manifest(self) -> dict:
        return {
            "command": self.command,
            "argv": self.argv,
            "inputs": self.inputs,
            "seed": self.seed,
            "version": __version__,
            "wall_clock_s": round(time.perf_counter() - self.t0, 6),
            "outputs": self.outputs,
        }

    def finish(self, manifest_path: Optional[str]) -> None:
        path = manifest_path
        if path is None and self.outputs:
            path = self.outputs[0] + ".manifest.json"
        m = self.manifest()
        if path is None:
            sys.stderr.write(json.dumps(m) + "\n")
        else:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(jsonio.dumps(m) + "\n")


# ---------------------------------------------------------------- parsing


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _pair(text: str) -> tuple:
    v = _floats(text)
    if len(v) != 2:
        raise argparse.ArgumentTypeError(f"expected two comma-separated numbers, got {text!r}")
    return tuple(v)


def _example_params(args) -> dict:
    """Translate build flags into builder keyword arguments for one example."""
    p = {}
    name = args.example
    if args.noise is not None:
        p["noise"] = list(args.noise)
    if name in ("one-arm", "two-arm") and args.rho is not None:
        p["rho"] = args.rho
    if name == "one-arm" and args.step is not None:
        p["step"] = args.step
    if name == "two-arm" and args.angles is not None:
        p["angles"] = args.angles
    if name == "osr" and args.convention is not None:
        p["convention"] = args.convention
    if name == "channel" and args.theta is not None:
        p["theta"] = args.theta
    if name == "hadamard":
        if args.eps is not None:
            p["eps"] = args.eps
        if args.input is not None:
            p["input"] = args.input
        if args.theta is not None:
            p["theta"] = args.theta
    if name == "bell":
        if args.omega1_hat is not None:
            p["omega1_hat"] = args.omega1_hat
        if args.n_sa is not None:
            p["n_sa"] = args.n_sa
    return p


def _load_problem(run: Run, path):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return jsonio.decode_problem(run.read_json(path))


def _load_allocation(run: Run, path, m: int) -> np.ndarray:
    """Allocation from a JSON list, a design report, or a design CSV."""
    if str(path).endswith(".csv"):
        import csv

        with open(path, encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        run.inputs[str(path)] = sha256_file(path)
        if not rows or "l" not in rows[0]:
            raise InputError(f"{path}: design CSV needs an 'l' column")
        a = np.array([int(r["l"] or 0) for r in rows])
    else:
        obj = run.read_json(path)
        if isinstance(obj, dict):
            obj = obj.get("l_round", obj.get("allocation"))
        a = np.asarray(obj)
    if a.shape != (m,):
        raise InputError(f"allocation has {a.size} entries, problem has {m} configurations")
    return a


# --------------------------------------------------------------- commands


def cmd_build(args, run: Run) -> int:
    if args.spec is not None:
        obj = run.read_json(args.spec)
        if isinstance(obj, dict) and "example" in obj:
            name, params = obj["example"], obj.get("params", {})
        elif isinstance(obj, dict) and obj.get("format") == jsonio.PROBLEM_FORMAT:
            problem, truth, sur = jsonio.decode_problem(obj)
            run.emit(jsonio.dumps(jsonio.encode_problem(problem, truth, sur, obj.get("example"))), args.out)
            return EXIT_OK
        elif isinstance(obj, list):
            from .qmodel import StateProblem

            problem = StateProblem(jsonio.decode_ensemble(obj))
            run.emit(jsonio.dumps(jsonio.encode_problem(problem)), args.out)
            return EXIT_OK
        else:
            raise InputError(f"{args.spec}: expected an example spec, a problem document or an ensemble list")
    else:
        if args.example is None:
            raise InputError("build needs an example name or --spec")
        name, params = args.example, _example_params(args)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        problem, truth, sur, meta = build_example(name, **params)
    run.emit(jsonio.dumps(jsonio.encode_problem(problem, truth, sur, meta)), args.out)
    return EXIT_OK


def _simulate_landscape(args, run: Run) -> int:
    from .simlab import landscape_scan

    res = landscape_scan()
    rows = [(float(z), float(x), float(res.values[i, j])) for i, z in enumerate(res.eps_z) for j, x in enumerate(res.eps_x)]
    jsonio.write_csv(args.landscape, ("eps_z", "eps_x", "p"), rows)
    run.outputs.append(str(args.landscape))
    summary = {"max_value": res.max_value, "argmax": list(res.argmax), "local_maxima": res.local_maxima}
    run.emit(jsonio.dumps(summary), args.out)
    return EXIT_OK


def _simulate_adaptive(args, run: Run) -> int:
    from . import simlab

    if args.adaptive == "bell":
        start = 0.012 if args.start is None else args.start
        trace = simlab.bell_adaptive(start, rounds=args.rounds)
    else:
        start = 0.9 if args.start is None else args.start
        trace = simlab.hadamard_adaptive(theta_start=start, rounds=args.rounds, rng=simlab.RngStream(run.seed, args.replicate))
    path = args.trace or "adaptive.trace.jsonl"
    jsonio.write_jsonl(path, trace.records)
    run.outputs.append(str(path))
    summary = {"loop": args.adaptive, "start": start, "rounds": len(trace.records), "final": trace.estimates[-1], "converged": trace.converged}
    run.emit(jsonio.dumps(summary), args.out)
    return EXIT_OK


def cmd_simulate(args, run: Run) -> int:
    from .simlab import RngStream, average_likelihood, sample_counts

    if args.landscape:
        return _simulate_landscape(args, run)
    if args.adaptive:
        return _simulate_adaptive(args, run)
    if args.problem is None:
        raise InputError("simulate needs a problem unless --landscape or --adaptive is given")
    problem, truth, _ = _load_problem(run, args.problem)
    if args.truth is not None:
        truth = jsonio.decode_point(problem, run.read_json(args.truth))
    if truth is None:
        raise InputError("problem file carries no truth; pass --truth")
    if args.allocation is not None:
        alloc = _load_allocation(run, args.allocation, problem.n_configs)
    else:
        alloc = np.full(problem.n_configs, int(args.per_config))
    data = sample_counts(problem, truth, alloc, RngStream(run.seed, args.replicate))
    if args.curve:
        if args.grid is None:
            raise InputError("--curve needs --grid LO HI N")
        lo, hi, n = args.grid
        if np.atleast_1d(truth).size != 1 or problem.tag != "hamiltonian":
            raise InputError("--curve applies to one-parameter Hamiltonian problems")
        pts = np.linspace(float(lo), float(hi), int(n))
        el = average_likelihood(problem, truth, alloc, [[t] for t in pts])
        jsonio.write_csv(args.curve, ("theta", "expected_nll"), [(float(t), float(v)) for t, v in zip(pts, el)])
        run.outputs.append(str(args.curve))
    doc = jsonio.encode_counts(data, problem.labels, seed=run.seed, replicate=args.replicate, allocation=alloc.tolist())
    run.emit(jsonio.dumps(doc), args.out)
    return EXIT_OK


def cmd_estimate(args, run: Run) -> int:
    from . import estimator

    problem, _, _ = _load_problem(run, args.problem)
    data = jsonio.decode_counts(run.read_json(args.counts))
    data.check_shape(problem.outcome_shape())
    method = args.method
    if method is not None and method not in estimator.METHODS:
        raise InputError(f"unknown method {method!r}; choose from {', '.join(estimator.METHODS)}")
    kw = {}
    if args.no_psd:
        if method != "ls-state":
            raise InputError("--no-psd applies to --method ls-state only")
        kw["keep_psd"] = False
    if args.trace_cap is not None:
        if method not in (None, "mle-osr") or problem.tag != "superoperator":
            raise InputError("--trace-cap applies to superoperator problems with --method mle-osr")
        kw["trace_cap"] = args.trace_cap
    rep = estimator.estimate(problem, data, method, **kw)
    doc = {
        "method": method or estimator._DEFAULT[problem.tag],
        "estimate": jsonio.encode_point(problem, rep.estimate),
        "objective": rep.objective,
        "lower_bound": rep.lower_bound,
        "gap": rep.gap,
        "iterations": rep.iterations,
        "kkt_residual": rep.kkt_residual,
        "diagnostics": _jsonable(rep.diagnostics),
    }
    if args.trace_cap is not None:
        doc["trace_cap"] = args.trace_cap
    run.emit(jsonio.dumps(doc), args.out)
    return EXIT_OK


def cmd_design(args, run: Run) -> int:
    from . import oed
    from .fisher import fisher_blocks, min_experiments

    problem, truth, sur = _load_problem(run, args.problem)
    if args.surrogate is not None:
        sur = jsonio.decode_point(problem, run.read_json(args.surrogate))
    if sur is None:
        raise InputError("problem file carries no surrogate; pass --surrogate")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model = fisher_blocks(problem, sur)
    d = oed.solve_design(model, certify=args.certify)
    report = {
        "V": d.V,
        "newton_steps": d.newton_steps,
        "barrier_gap": d.barrier_gap,
        "support": [int(g) for g in d.support],
    }
    rounded = None
    if args.lexpt is not None:
        rounded = oed.round_design(d, model, args.lexpt)
        report.update(
            l_expt=rounded.l_expt,
            l_total=rounded.total,
            l_round=rounded.l.tolist(),
            gap_pair={"V_rounded": rounded.V_rounded, "V_relaxed": rounded.V_relaxed, "ratio": rounded.ratio},
        )
    if args.v0 is not None:
        report["v0"] = args.v0
        report["min_experiments"] = min_experiments(d.V, args.v0)
        if args.nsub is not None:
            tr = oed.truncate_design(d, model, args.nsub, args.v0)
            report["truncation"] = {
                "n_sub": tr.n_sub,
                "V_sub": tr.V_sub,
                "l_sub": tr.l_sub,
                "lam_sub": tr.lam_sub.tolist(),
                "curve": [list(p) for p in tr.curve],
            }
    elif args.nsub is not None:
        raise InputError("--nsub needs --v0")
    if d.certificate is not None:
        c = d.certificate
        report["certificate"] = {
            "cs_residual": c.cs_residual,
            "dual_value": c.dual_value,
            "gap": c.gap,
            "strong_duality": c.strong_duality,
            "max_slack": float(np.max(c.slacks)),
        }
        sys.stderr.write(f"certificate: cs_residual={c.cs_residual:.3e} gap={c.gap:.3e} strong_duality={c.strong_duality:.3e}\n")
    if args.bootstrap:
        if truth is None:
            raise InputError("--bootstrap needs a truth in the problem file")
        if args.lexpt is None:
            raise InputError("--bootstrap needs --lexpt")
        trace = oed.bootstrap(problem, truth, rounded.l, args.bootstrap, args.lexpt, seed=run.seed)
        recs = [
            {"round": k, "V": r["V"], "l": r["l"].tolist(), "lam": r["lam"].tolist(), "estimate": jsonio.encode_point(problem, r["estimate"])}
            for k, r in enumerate(trace)
        ]
        path = args.trace or (args.csv + ".trace.jsonl" if args.csv else "bootstrap.trace.jsonl")
        jsonio.write_jsonl(path, recs)
        run.outputs.append(str(path))
        report["bootstrap_trace"] = str(path)
    text = jsonio.write_csv(None, ["gamma", "label", "lambda", "l"], jsonio.design_rows(d, rounded))
    if args.csv is not None:
        run.emit(text, args.csv)
    elif args.report is None:
        run.emit(text, None)
    if args.report is not None:
        run.emit(jsonio.dumps(report), args.report)
    else:
        sys.stderr.write(jsonio.dumps(report) + "\n")
    return EXIT_OK


def cmd_reproduce(args, run: Run) -> int:
    from . import tables

    ids = tables.TABLE_IDS if args.table == "all" else (args.table,)
    results = [tables.reproduce(t) for t in ids]
    if args.json:
        doc = {"expectations_version": tables.expectations()["version"], "tables": [r.as_dict() for r in results]}
        run.emit(jsonio.dumps(doc), args.out)
    else:
        run.emit("\n".join(r.render() for r in results), args.out)
    return EXIT_OK if all(r.passed for r in results) else EXIT_MISMATCH


def cmd_fidelity(args, run: Run) -> int:
    from .fidelity import worst_case_fidelity

    if args.hadamard_delta is not None:
        from .photonics import U_HAD
        from .numerics import herm_expm

        d = args.hadamard_delta
        u_des = U_HAD
        # exp(-i pi/2 (1+d) H) equals -i H at d = 0
        u_act = 1j * herm_expm(U_HAD, np.pi / 2 * (1 + d))
    elif args.u_des is not None and args.u_act is not None:
        u_des = jsonio.decode_complex_matrix(run.read_json(args.u_des))
        u_act = jsonio.decode_complex_matrix(run.read_json(args.u_act))
    else:
        raise InputError("fidelity needs --u-des and --u-act, or --hadamard-delta")
    res = worst_case_fidelity(u_des, u_act)
    doc = {"fidelity": res.value, "z": res.z.tolist(), "psi": [[float(c.real), float(c.imag)] for c in res.psi], "eigenphases": res.eigenphases.tolist()}
    run.emit(jsonio.dumps(doc), args.out)
    return EXIT_OK


def _jsonable(obj):
    return json.loads(json.dumps(obj, default=jsonio._default))


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tomoed", description="Tomography estimators and optimal experiment design.")
    p.add_argument("--version", action="version", version=f"tomoed {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        if out:
            sp.add_argument("-o", "--out", help="output file (default stdout)")
        sp.add_argument("--manifest", help="manifest path (default <out>.manifest.json, or stderr)")
        sp.add_argument("--seed", type=int, help=f"RNG seed (default ${SEED_ENV} or 0)")

    b = sub.add_parser("build", help="build a problem file from a named example or spec file")
    b.add_argument("example", nargs="?", help=f"one of {', '.join(EXAMPLES)}")
    b.add_argument("--spec", help="JSON spec: {'example': name, 'params': {...}} or an ensemble list")
    b.add_argument("--noise", type=_pair, help="detector efficiency and dark-count probability, e.g. 0.75,0.05")
    b.add_argument("--rho", help="pure|mixed (one-arm) or pp|pm|mm (two-arm)")
    b.add_argument("--step", type=float, help="wave-plate grid step in degrees")
    b.add_argument("--angles", type=_floats, help="two-arm angle set, e.g. 0,20,25,45")
    b.add_argument("--convention", choices=("consistent", "literal"), help="OSR R-matrix ordering")
    b.add_argument("--theta", type=float, help="channel input angle (deg) or Hadamard truth")
    b.add_argument("--eps", type=float, help="Hadamard control-noise scale")
    b.add_argument("--input", choices=("ket0", "had0"), help="Hadamard input state")
    b.add_argument("--omega1-hat", type=float, help="Bell surrogate coupling")
    b.add_argument("--n-sa", type=int, choices=(1, 2), help="Bell sample times per configuration")
    common(b)

    s = sub.add_parser("simulate", help="sample multinomial counts at the truth")
    s.add_argument("problem", nargs="?")
    s.add_argument("--truth", help="JSON point overriding the problem's truth")
    s.add_argument("--curve", help="also write the average likelihood curve to this CSV")
    s.add_argument("--grid", nargs=3, metavar=("LO", "HI", "N"), help="theta grid for --curve")
    s.add_argument("--landscape", help="write the two-control landscape scan to this CSV")
    s.add_argument("--adaptive", choices=("hadamard", "bell"), help="run an adaptive loop instead of sampling")
    s.add_argument("--start", type=float, help="starting estimate for --adaptive")
    s.add_argument("--rounds", type=int, default=1, help="rounds for --adaptive")
    s.add_argument("--trace", help="JSON lines trace for --adaptive (one record per round)")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--allocation", help="JSON list, design report JSON, or design CSV with an 'l' column")
    g.add_argument("--per-config", type=int, default=1000, help="uniform experiments per configuration")
    s.add_argument("--replicate", type=int, default=0)
    common(s)

    e = sub.add_parser("estimate", help="maximum-likelihood or least-squares estimate")
    e.add_argument("problem")
    e.add_argument("counts")
    e.add_argument("--method", help="estimator name (default per problem type)")
    e.add_argument("--no-psd", action="store_true", help="ls-state without the PSD constraint")
    e.add_argument("--trace-cap", type=float, help="trace cap for mle-osr")
    common(e)

    d = sub.add_parser("design", help="A-optimal design with rounding, truncation and certificate")
    d.add_argument("problem")
    d.add_argument("--surrogate", help="JSON point overriding the problem's surrogate")
    d.add_argument("--lexpt", type=int, help="experiment budget for rounding")
    d.add_argument("--v0", type=float, help="target variance for minimum experiment counts")
    d.add_argument("--nsub", type=int, help="keep the n largest weights")
    d.add_argument("--certify", action="store_true", help="compute and check the dual certificate")
    d.add_argument("--bootstrap", type=int, default=0, help="bootstrap rounds (needs --lexpt)")
    d.add_argument("--trace", help="JSONL path for the bootstrap trace")
    d.add_argument("--csv", help="design CSV path (default stdout)")
    d.add_argument("--report", help="report JSON path (default stderr)")
    d.add_argument("--manifest", help="manifest path")
    d.add_argument("--seed", type=int, help=f"RNG seed (default ${SEED_ENV} or 0)")

    r = sub.add_parser("reproduce", help="recompute a reference table and compare with expectations")
    from .tables import TABLE_IDS

    r.add_argument("table", choices=TABLE_IDS + ("all",))
    r.add_argument("--json", action="store_true", help="machine-readable output")
    common(r)

    f = sub.add_parser("fidelity", help="worst-case gate fidelity")
    f.add_argument("--u-des", help="JSON complex matrix")
    f.add_argument("--u-act", help="JSON complex matrix")
    f.add_argument("--hadamard-delta", type=float, help="Hadamard pulse with relative duration error")
    common(f)
    return p


COMMANDS = {
    "build": cmd_build,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "design": cmd_design,
    "reproduce": cmd_reproduce,
    "fidelity": cmd_fidelity,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    try:
        seed = args.seed if args.seed is not None else default_seed()
        run = Run(args.command, argv, seed)
        code = COMMANDS[args.command](args, run)
        run.finish(args.manifest)
        return code
    except NotIdentifiable as exc:
        msg = f"error: {exc}"
        if exc.null_directions is not None:
            nd = np.asarray(exc.null_directions).reshape(-1, np.shape(exc.null_directions)[-1]).T if np.ndim(exc.null_directions) == 2 else np.atleast_2d(exc.null_directions)
            msg += f"\nnear-null directions ({nd.shape[0]}):\n" + "\n".join("  " + np.array2string(v, precision=4) for v in nd)
        sys.stderr.write(msg + "\n")
        return EXIT_IDENTIFIABILITY
    except TomoEDError as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return exc.exit_code
    except (ValueError, KeyError) as exc:
        sys.stderr.write(f"error: {type(exc).__name__}: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
