"""Command-line front end.

Exit codes: 0 ok, 1 verification failure, 2 parse/IO error (including a
change that no measurement can see, D=0), 3 infinite relative entropy
under --require-finite, 4 optimizer budget exhausted under --strict,
5 insufficient false-alarm spread for a slope fit.
"""

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .detection import DEFAULT_HORIZON, build_llr_table, trace_trial
from .entropy import quantum_relative_entropy
from .errors import BudgetExhausted, InsufficientSpread, QusumError, ZeroDivergence
from .experiments import (
    TradeoffConfig,
    pushforward_instance,
    tradeoff_csv,
    tradeoff_experiment,
    verify_compression_suite,
    verify_dpi,
    verify_lemma3,
)
from .measurement import identity_channel, load_povm, parse_povm, random_density_matrix, save_povm, stream
from .povm_search import SearchConfig, block_measurement_sweep
from .states import build_states, parse_state_spec

logger = logging.getLogger("qusum")

EXIT_OK, EXIT_VERIFY, EXIT_PARSE, EXIT_INFINITE, EXIT_BUDGET, EXIT_SPREAD = range(6)
LN2 = math.log(2.0)


class UsageError(Exception):
    pass


def _states(args):
    sigma, rho = build_states(parse_state_spec(args.sigma), parse_state_spec(args.rho))
    return sigma, rho


def _emit_json(path, obj) -> None:
    if path:
        Path(path).write_text(json.dumps(obj, indent=1, default=_json_default) + "\n")


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    raise TypeError(f"not JSON serializable: {type(x)}")


def _num(x: float) -> float | str:
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


def _display(value: float, bits: bool) -> str:
    if math.isinf(value):
        return "infinite (support violation)"
    return f"{value / LN2:.9g} bits" if bits else f"{value:.9g} nats"


def cmd_entropy(args) -> int:
    sigma, rho = _states(args)
    fwd = quantum_relative_entropy(sigma, rho)
    rev = quantum_relative_entropy(rho, sigma)
    print(f"dim                  {sigma.dim}")
    print(f"D(sigma||rho)        {_display(fwd.value, args.bits)}")
    print(f"D(rho||sigma)        {_display(rev.value, args.bits)}")
    print(f"support              {'ok' if fwd.support_ok else 'supp(sigma) not contained in supp(rho)'}")
    print(f"truncation budget    {fwd.truncation_budget:.3e}")
    _emit_json(args.json, {
        "dim": sigma.dim, "d_sigma_rho": _num(fwd.value), "d_rho_sigma": _num(rev.value),
        "support_ok": fwd.support_ok, "support_leak": fwd.support_leak,
        "truncation_budget": fwd.truncation_budget, "units": "nats",
    })
    if args.require_finite and not fwd.support_ok:
        return EXIT_INFINITE
    return EXIT_OK


def cmd_povm_opt(args) -> int:
    sigma, rho = _states(args)
    ceiling = quantum_relative_entropy(sigma, rho)
    if args.require_finite and not ceiling.support_ok:
        print("D(sigma||rho) is infinite", file=sys.stderr)
        return EXIT_INFINITE
    cfg = SearchConfig(restarts=args.restarts, seed=args.seed, max_iter=args.max_iter, jobs=args.jobs, strict=args.strict)
    sweep = block_measurement_sweep(sigma, rho, args.block_l, cfg)
    l, per_copy, res = sweep[-1]
    if args.out:
        save_povm(args.out, res.best_povm)
    gap = ceiling.value - per_copy
    for ll, v, r in sweep:
        print(f"l={ll}  per-copy D^M = {v:.10g}  converged={r.converged}")
    print(f"best_value           {res.best_value:.10g} nats (block of {l})")
    print(f"D ceiling            {ceiling.value:.10g} nats per copy")
    print(f"gap                  {gap:.3e}")
    print("per-restart values   " + " ".join(f"{v:.8g}" for v in res.per_restart_values))
    _emit_json(args.json, {
        "block_l": l, "best_value": res.best_value, "per_copy": per_copy, "ceiling": _num(ceiling.value),
        "gap": _num(gap), "per_restart_values": [_num(v) for v in res.per_restart_values],
        "iterations": res.iterations, "converged": res.converged, "povm_file": args.out,
        "sweep": [{"l": ll, "per_copy": v} for ll, v, _ in sweep],
    })
    return EXIT_OK


REQUIRED_CONFIG = ("rho", "sigma", "seed")
CONFIG_ALIASES = {"rho_spec": "rho", "sigma_spec": "sigma"}


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    for alias, key in CONFIG_ALIASES.items():
        if alias in cfg:
            cfg.setdefault(key, cfg.pop(alias))
    outputs = cfg.pop("outputs", {}) or {}
    if not isinstance(outputs, dict):
        raise UsageError("config 'outputs' must be an object with optional 'csv' and 'svg' paths")
    for key in ("csv", "svg"):
        if key in outputs:
            cfg.setdefault(key, outputs[key])
    missing = [k for k in REQUIRED_CONFIG if k not in cfg]
    if missing:
        raise UsageError(f"config is missing required fields {missing} (seeds are mandatory)")
    return cfg


def _resolve_povm(spec: str, sigma, rho, block_l: int, seed: int, restarts: int, jobs: int, base: Path):
    if spec == "auto":
        cfg = SearchConfig(restarts=restarts, seed=seed, jobs=jobs)
        return block_measurement_sweep(sigma, rho, block_l, cfg)[-1][2].best_povm
    if spec not in ("basis", "trivial") and not spec.startswith("noisy:"):
        p = Path(spec)
        spec = str(p if p.is_absolute() else base / p)
    return parse_povm(spec, rho.dim, block_l)


def cmd_tradeoff(args) -> int:
    raw = load_config(args.config)
    base = Path(args.config).resolve().parent
    seed = int(raw["seed"]) if args.seed is None else args.seed
    sigma, rho = build_states(parse_state_spec(raw["sigma"]), parse_state_spec(raw["rho"]))
    block_l = int(raw.get("block_l", 1))
    povm = _resolve_povm(str(raw.get("povm", "basis")), sigma, rho, block_l, seed, int(raw.get("restarts", 8)), args.jobs, base)
    thresholds = raw.get("thresholds", "auto")
    cfg = TradeoffConfig(
        sigma=sigma, rho=rho, povm=povm, block_l=block_l,
        thresholds=None if thresholds == "auto" else [float(h) for h in thresholds],
        n_points=int(raw.get("n_points", 8)),
        tfa_range=(float(raw.get("tfa_min", 1e2)), float(raw.get("tfa_max", 1e5))),
        n_trials_delay=int(raw.get("n_trials", 10_000)),
        n_trials_tfa=int(raw.get("n_trials_tfa", 2_000)),
        horizon=int(raw.get("horizon", DEFAULT_HORIZON)),
        seed=seed, jobs=args.jobs, label=str(raw.get("label", "")),
    )
    result = tradeoff_experiment(cfg)
    text = tradeoff_csv(result)
    out = args.csv or raw.get("csv")
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)
    svg = args.svg or raw.get("svg")
    if svg:
        from .plotting import plot_tradeoff

        plot_tradeoff([result], svg)
    f = result.fit
    print(f"slope={f.slope:.6g}, theory={f.theory_slope:.6g}, quantum={f.quantum_slope:.6g}, "
          f"ratio={f.ratio_to_theory:.4f}, r2={f.r_squared:.5f}")
    for note in result.notes:
        print(f"note: {note}", file=sys.stderr)
    _emit_json(args.json, {
        "rows": [r.__dict__ for r in result.rows], "fit": f.__dict__,
        "d_measured": result.d_measured, "d_quantum": result.d_quantum, "notes": result.notes,
    })
    return EXIT_OK


def cmd_simulate(args) -> int:
    sigma, rho = _states(args)
    povm = parse_povm(args.povm, rho.dim, args.block_l)
    table = build_llr_table(sigma, rho, povm, args.block_l)
    nu = None if args.nu in ("inf", "none") else int(args.nu)
    rng = stream(args.seed, args.trial, 2)
    result, rows = trace_trial(table, args.h, nu, args.block_l, args.horizon, rng)
    print("step,outcome,llr,statistic")
    for step, idx, llr, s in rows[: args.max_rows]:
        print(f"{step},{idx},{llr:.6g},{s:.6g}")
    if len(rows) > args.max_rows:
        print(f"... {len(rows) - args.max_rows} more steps")
    print(f"# stop_time={result.stop_time} nu={nu} kind={result.alarm_kind}")
    _emit_json(args.json, {"stop_time": result.stop_time, "nu": nu, "alarm_kind": result.alarm_kind,
                           "llr": [_num(x) for x in table.llr], "d_qp": table.d_qp, "d_pq": table.d_pq})
    return EXIT_OK


def cmd_verify(args) -> int:
    suites = ["lemma3", "compression", "dpi"] if args.suite == "all" else [args.suite]
    reports = []
    for name in suites:
        if name == "lemma3":
            instances = None
            if args.povm_file:
                m = load_povm(args.povm_file)
                rng = stream(args.seed, 1, 31)
                instances = [pushforward_instance(rng) for _ in range(args.n_random)]
                instances.append((identity_channel(m.dim), m, random_density_matrix(m.dim, rng), random_density_matrix(m.dim, rng)))
            reports.append(verify_lemma3(args.n_random, args.seed, instances=instances))
        elif name == "compression":
            reports.append(verify_compression_suite(20, 5, args.seed))
        else:
            reports.append(verify_dpi(2 * args.n_random, args.seed))
    for r in reports:
        print(r.summary())
    ok = all(r.passed for r in reports)
    print("ALL PASS" if ok else "FAILURES PRESENT")
    _emit_json(args.json, {r.name: {"passed": r.passed, "max_discrepancy": _num(r.max_discrepancy),
                                    "n_instances": r.n_instances} for r in reports})
    return EXIT_OK if ok else EXIT_VERIFY


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=None, help="experiment seed")
    g.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="worker threads (results do not depend on it)")
    g.add_argument("--svg", help="write a figure of the result")
    g.add_argument("--json", help="write a machine-readable copy of the report")
    g.add_argument("--require-finite", action="store_true", help="exit 3 if D(sigma||rho) is infinite")
    g.add_argument("--strict", action="store_true", help="exit 4 if the optimizer runs out of iterations")
    g.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qusum", description="Quantum CUSUM change-point laboratory")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("entropy", help="relative entropies of two states")
    p.add_argument("--sigma", required=True, help="post-change state descriptor")
    p.add_argument("--rho", required=True, help="pre-change state descriptor")
    p.add_argument("--bits", action="store_true", help="display in bits")
    _common(p)
    p.set_defaults(func=cmd_entropy)

    p = sub.add_parser("povm-opt", help="maximize the measured relative entropy")
    p.add_argument("--sigma", required=True)
    p.add_argument("--rho", required=True)
    p.add_argument("--block-l", type=int, default=1)
    p.add_argument("--restarts", type=int, default=8)
    p.add_argument("--max-iter", type=int, default=5000)
    p.add_argument("--out", help="POVM JSON output path")
    _common(p)
    p.set_defaults(func=cmd_povm_opt)

    p = sub.add_parser("tradeoff", help="delay vs false-alarm sweep from a JSON config")
    p.add_argument("config")
    p.add_argument("--csv", help="CSV output path (default: config 'csv' field, else stdout)")
    _common(p)
    p.set_defaults(func=cmd_tradeoff)

    p = sub.add_parser("simulate", help="one traced QUSUM run")
    p.add_argument("--sigma", required=True)
    p.add_argument("--rho", required=True)
    p.add_argument("--povm", default="basis")
    p.add_argument("--block-l", type=int, default=1)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--nu", default="inf", help="change point (integer or 'inf')")
    p.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    p.add_argument("--trial", type=int, default=0)
    p.add_argument("--max-rows", type=int, default=200)
    _common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="numerical verification suites")
    p.add_argument("--suite", choices=["lemma3", "compression", "dpi", "all"], default="all")
    p.add_argument("--n-random", type=int, default=100)
    p.add_argument("--povm-file", help="extra POVM to include in the lemma3 suite")
    _common(p)
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PARSE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command != "tradeoff" and args.seed is None:
        args.seed = 0
    try:
        return args.func(args)
    except ZeroDivergence as exc:
        print(f"error: D=0, {exc}", file=sys.stderr)
        return EXIT_PARSE
    except BudgetExhausted as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except InsufficientSpread as exc:
        print(f"error: insufficient spread: {exc}", file=sys.stderr)
        return EXIT_SPREAD
    except (QusumError, UsageError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
