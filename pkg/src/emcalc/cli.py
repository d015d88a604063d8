"""Command-line front end: ``emcalc <command> [input.json] [flags]``.

Every command prints one JSON report with sorted keys and an embedded run
manifest. Exit codes: 0 computed or passed, 1 audit failure, 2 input error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import __version__
from . import capacity_zeno as cz
from . import cycle_forms as cf
from .errors import EmcalcError, SchemaError
from .forcing_count import exact_enumeration, forcing_report, monte_carlo_definability
from .io import (
    bridge_from_json,
    canonical_dumps,
    digest,
    dist_from_json,
    kernel_from_json,
    lens_from_json,
    load_json,
    protocol_from_json,
    prototypes_from_json,
    report_schema,
    schedule_from_json,
    to_jsonable,
    validate_input,
    validate_report,
)
from .kernel_core import DEFAULT_TOL, ToleranceConfig, commutator_max_abs, stationary
from .lens_packaging import (
    Lens,
    build_endomap,
    idempotence_defect_tv,
    prototype_stability,
    retention_error,
)
from .path_audit import DEFAULT_CAP, dpi_audit, sigma_T
from .protocol_models import stroboscopic_kernel, trap_audit

EXIT_OK, EXIT_AUDIT, EXIT_INPUT = 0, 1, 2
PROFILE_ENV = "EMCALC_TOL_PROFILE"
TOL_PROFILES = {
    "default": DEFAULT_TOL,
    "strict": replace(DEFAULT_TOL, row_sum_tol=1e-12),
    "loose": replace(DEFAULT_TOL, row_sum_tol=1e-3, stationarity_tol=1e-10),
}
DEFECT_TOL = 1e-12
TRAP_TOL = 1e-10


def _kernel_part(data):
    return data["kernel"] if "kernel" in data else data


def _kl(r) -> dict:
    return r.to_json()


# Each handler returns (payload, passed, parameters).

def cmd_defect(args, data, cfg):
    P = kernel_from_json(data["kernel"], cfg)
    lens = lens_from_json(data["lens"])
    protos = prototypes_from_json(data.get("prototypes"), lens)
    tau = args.tau if args.tau is not None else data.get("tau", 1)
    E = build_endomap(P, lens, protos, tau)
    delta = idempotence_defect_tv(E)
    eps = retention_error(P, lens, protos, tau)
    holds = delta <= eps + DEFECT_TOL
    payload = {
        "tau": tau,
        "defect": delta,
        "retention_error": eps,
        "bound_holds": holds,
        "stability": dict(zip(lens.labels, prototype_stability(E).tolist())),
        "endomap": E.matrix,
    }
    return payload, holds, {"tau": tau}


def _rho(args, data, P, cfg):
    spec = args.rho if args.rho is not None else data.get("rho", "stationary")
    if spec not in ("uniform", "stationary") and not isinstance(spec, dict):
        spec = load_json(spec)
        if not (isinstance(spec, dict) and isinstance(spec.get("weights"), list)):
            raise SchemaError('--rho file must hold {"weights": [...]}')
    return spec, dist_from_json(spec, P, cfg)


def cmd_sigma(args, data, cfg):
    P = kernel_from_json(_kernel_part(data), cfg)
    spec, rho = _rho(args, data, P, cfg)
    r = sigma_T(P, rho, args.T, args.cap)
    payload = {"T": args.T, "rho": rho.weights, **_kl(r),
               "rate": None if r.infinite else r.value / args.T}
    return payload, True, {"T": args.T, "rho": spec, "cap": args.cap}


def cmd_dpi(args, data, cfg):
    P = kernel_from_json(data["kernel"], cfg)
    lens = lens_from_json(data["lens"])
    spec, rho = _rho(args, data, P, cfg)
    res = dpi_audit(P, rho, lens, args.T, args.cap)
    payload = {**res, "micro": _kl(res["micro"]), "macro": _kl(res["macro"]), "rho": rho.weights}
    return payload, res["pass"], {"T": args.T, "rho": spec, "cap": args.cap}


def cmd_protocol_audit(args, data, cfg):
    fam = protocol_from_json(data, cfg)
    res = trap_audit(fam, args.T, args.cap, cfg)
    lifted, projected = res["lifted_sigma"], res["projected_sigma"]
    ok = True
    if not lifted.infinite and not projected.infinite:
        ok = projected.value <= lifted.value + TRAP_TOL
    if res["hypotheses_hold"]:
        ok = ok and not lifted.infinite and lifted.value <= TRAP_TOL
    payload = {**res, "lifted_sigma": _kl(lifted), "projected_sigma": _kl(projected),
               "components": [{**c, "lifted_sigma": _kl(c["lifted_sigma"]),
                               "projected_sigma": _kl(c["projected_sigma"])}
                              for c in res["components"]]}
    return payload, ok, {"T": args.T, "cap": args.cap}


def cmd_strobe(args, data, cfg):
    if "kernels" in data:
        kernels = [kernel_from_json(k, cfg) for k in data["kernels"]]
    else:
        kernels = list(protocol_from_json(data, cfg).state_kernels)
    K = stroboscopic_kernel(kernels)
    pi = stationary(K, cfg)
    r = sigma_T(K, pi, args.T, args.cap)
    payload = {
        "kernel": K.rows,
        "stationary": pi.weights,
        "T": args.T,
        "sigma": _kl(r),
        "commutator_max_abs": commutator_max_abs(*kernels) if len(kernels) == 2 else None,
    }
    return payload, True, {"T": args.T, "cap": args.cap}


def cmd_affinity(args, data, cfg):
    P = kernel_from_json(_kernel_part(data), cfg)
    g = cf.support_graph(P, cfg.zero_tol)
    a = cf.one_form(P, g)
    basis = cf.cycle_basis(g, args.method)
    ex = cf.exactness(a, basis)
    payload = {
        "beta1": cf.cycle_rank(g),
        "affinities": ex["affinities"],
        "exact": ex["exact"],
        "potential": ex["potential"],
        "max_residual": ex["max_residual"],
        "cycles": [list(c) for c in basis.cycles],
        "chords": [list(c) for c in basis.chords],
        "method": args.method,
        "n_components": g.n_components,
    }
    return payload, True, {"method": args.method}


def cmd_gate(args, data, cfg):
    P = kernel_from_json(data["kernel"], cfg)
    delete = [tuple(e) for e in data["delete"]]
    for i, j in delete:
        if max(i, j) >= P.dim:
            raise SchemaError(f"edge ({i}, {j}) outside {P.dim} states")
    before = cf.cycle_rank(cf.support_graph(P, cfg.zero_tol))
    G = cf.gate_edges(P, delete)
    after = cf.cycle_rank(cf.support_graph(G, cfg.zero_tol))
    payload = {"deleted": [list(e) for e in delete], "beta1_before": before,
               "beta1_after": after, "kernel": G.rows}
    return payload, after <= before, {}


def cmd_gap(args, data, cfg):
    P = kernel_from_json(_kernel_part(data), cfg)
    pi = stationary(P, cfg)
    return {"gap": cf.spectral_gap(P, pi), "stationary": pi.weights}, True, {}


def cmd_forcing(args, data, cfg):
    if data is not None:
        lens = lens_from_json(data)
    elif args.n is not None and args.k is not None:
        lens = Lens.balanced(args.n, args.k)
    else:
        raise SchemaError("forcing needs a lens file or both --n and --k")
    rep = forcing_report(lens)
    payload = rep.to_json()
    payload["monte_carlo"] = (monte_carlo_definability(lens, args.mc, args.seed)
                              if args.mc else None)
    payload["enumeration"] = exact_enumeration(lens, "enumerate") if args.enumerate else None
    ok = payload["monte_carlo"] is None or payload["monte_carlo"]["consistent"]
    params = {"n": lens.n_states, "k": lens.n_blocks, "mc": args.mc, "enumerate": args.enumerate}
    return payload, ok, params


def _random_signals(count, horizon, dim, seed):
    rng = np.random.Generator(np.random.PCG64(seed))
    return [rng.standard_normal((horizon, dim)) for _ in range(count)]


def cmd_icap(args, data, cfg):
    wrapped = "bridge" in data
    Z = bridge_from_json(data["bridge"] if wrapped else data)
    if wrapped and "signals" in data:
        signals = [np.array(s, dtype=float) for s in data["signals"]]
        source = "input"
    else:
        signals = _random_signals(args.signals, args.horizon, Z.port_dim, args.seed)
        source = "seeded"
    horizon = min(s.shape[0] for s in signals)
    if wrapped and "windows" in data:
        windows = [tuple(w) for w in data["windows"]]
    elif args.windows == "all":
        windows = [(s, t) for s in range(horizon) for t in range(s, horizon)]
    else:
        windows = None
    res = cz.icap_audit(Z, signals, windows)
    payload = {**res, "kernel_mass": res["certified_bound"], "n_signals": len(signals),
               "n_windows": 1 if windows is None else len(windows), "signal_source": source}
    params = {"windows": args.windows, "signals": args.signals, "horizon": args.horizon}
    return payload, res["pass"], params


def cmd_zeno(args, data, cfg):
    sched = schedule_from_json(data)
    lat = cz.latency_bounds(sched)
    payload = {"decision": cz.no_zeno_decision(sched), "latency": lat,
               "cap": [sched.cap(j) for j in range(sched.j_max)]}
    return payload, True, {}


def cmd_route(args, data, cfg):
    res = cz.route_mismatch_audit(data["direct"], data["step1"], data["step2"])
    return res, res["pass"], {}


COMMANDS = {
    "defect": (cmd_defect, "idempotence defect and retention error of a lens endomap"),
    "sigma": (cmd_sigma, "path reversal asymmetry of a kernel over T steps"),
    "dpi": (cmd_dpi, "data-processing audit of a lens on path laws"),
    "protocol-audit": (cmd_protocol_audit, "lifted vs phase-projected asymmetry of a protocol"),
    "strobe": (cmd_strobe, "stroboscopic product of phase kernels and its asymmetry"),
    "affinity": (cmd_affinity, "cycle basis, affinities and exactness of the log-ratio form"),
    "gate": (cmd_gate, "delete edges and report the cycle rank before and after"),
    "gap": (cmd_gap, "spectral gap of the lazy walk of a reversible kernel"),
    "forcing": (cmd_forcing, "definability counts for a lens, with optional Monte Carlo"),
    "icap": (cmd_icap, "windowed positive-work audit of a convolution bridge"),
    "zeno": (cmd_zeno, "latency bounds and No-Zeno decision for a capacity schedule"),
    "route": (cmd_route, "route mismatch and gain bound for packaging maps"),
}
INPUT_OPTIONAL = {"forcing"}


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--tol-row-sum", type=float, help="row-sum tolerance for kernels")
    g.add_argument("--tol-stationarity", type=float, help="power-iteration stopping tolerance")
    g.add_argument("--tol-zero", type=float, help="entries below this are treated as zero")
    g.add_argument("--tol-max-iters", type=int, help="power-iteration step budget")
    g.add_argument("--seed", type=int, default=0, help="seed for randomized commands (default 0)")
    g.add_argument("--cap", type=int, default=DEFAULT_CAP,
                   help=f"path enumeration cap (default {DEFAULT_CAP})")
    g.add_argument("--json-schema", action="store_true",
                   help="print the report schema for this command and exit")
    g.add_argument("--quiet", action="store_true", help="suppress the report; exit code only")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emcalc", description="Finite Markov diagnostics with JSON reports.",
        epilog=f"Tolerance profile: set {PROFILE_ENV} to one of {', '.join(TOL_PROFILES)}.")
    parser.add_argument("--version", action="version", version=f"emcalc {__version__}")
    parser.add_argument("--reference", action="store_true",
                        help="print the Markdown CLI reference and exit")
    sub = parser.add_subparsers(dest="command", metavar="command")
    common = _common_parser()
    for name, (_, help_text) in COMMANDS.items():
        sp = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        sp.add_argument("input", nargs="?", help="input JSON file")
        if name in ("sigma", "dpi", "protocol-audit", "strobe"):
            sp.add_argument("--T", type=int, default=2 if name == "protocol-audit" else 1,
                            help="path horizon in steps")
        if name in ("sigma", "dpi"):
            sp.add_argument("--rho", help="uniform, stationary, or a weights JSON file")
        if name == "defect":
            sp.add_argument("--tau", type=int, help="timescale; overrides the input's tau")
        if name == "affinity":
            sp.add_argument("--method", choices=("bfs", "dfs"), default="bfs",
                            help="spanning-forest search order")
        if name == "forcing":
            sp.add_argument("--n", type=int, help="number of microstates (balanced lens)")
            sp.add_argument("--k", type=int, help="number of blocks (balanced lens)")
            sp.add_argument("--mc", type=int, default=0, help="Monte Carlo trials")
            sp.add_argument("--enumerate", action="store_true",
                            help="brute-force count over all 2^N predicates")
        if name == "icap":
            sp.add_argument("--signals", type=int, default=20,
                            help="seeded random signals when the input has none")
            sp.add_argument("--horizon", type=int, default=32, help="length of seeded signals")
            sp.add_argument("--windows", choices=("full", "all"), default="full",
                            help="audit the full horizon or every sub-window")
    return parser


def _tolerances(args) -> ToleranceConfig:
    profile = os.environ.get(PROFILE_ENV, "default")
    if profile not in TOL_PROFILES:
        raise SchemaError(f"{PROFILE_ENV}={profile!r}; expected one of {sorted(TOL_PROFILES)}")
    overrides = {k: v for k, v in {
        "row_sum_tol": args.tol_row_sum,
        "stationarity_tol": args.tol_stationarity,
        "zero_tol": args.tol_zero,
        "max_power_iters": args.tol_max_iters,
    }.items() if v is not None}
    return replace(TOL_PROFILES[profile], **overrides)


def run(args) -> tuple[int, dict | None]:
    """Execute a parsed command. Returns (exit code, report or error record)."""
    handler, _ = COMMANDS[args.command]
    cfg = _tolerances(args)
    data = None
    if args.input is not None:
        data = load_json(args.input)
        validate_input(args.command, data)
    elif args.command not in INPUT_OPTIONAL:
        raise SchemaError(f"{args.command} needs an input file")
    payload, passed, params = handler(args, data, cfg)
    uses_seed = args.command in ("forcing", "icap")
    manifest = {
        "command": args.command,
        "input_digest": digest(data),
        "parameters": params,
        "seed": args.seed if uses_seed else None,
        "tool_version": __version__,
        "tolerances": cfg.as_dict(),
    }
    report = {"report": args.command, "schema": f"emcalc.{args.command}.v1",
              "manifest": manifest, "status": "pass" if passed else "fail", **payload}
    report = to_jsonable(report)
    validate_report(args.command, report)
    return (EXIT_OK if passed else EXIT_AUDIT), report


def render_reference() -> str:
    """Markdown reference generated from the argument parser."""
    saved = os.environ.get("COLUMNS")
    os.environ["COLUMNS"] = "100"
    try:
        parser = build_parser()
        helps = [parser.format_help()]
        sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        helps += [sp.format_help() for sp in sub.choices.values()]
    finally:
        if saved is None:
            del os.environ["COLUMNS"]
        else:
            os.environ["COLUMNS"] = saved
    out = ["# emcalc command reference", "",
           "Generated by `emcalc --reference`. Do not edit by hand.", "",
           "Exit codes: `0` computed or passed, `1` audit failure, `2` input error.", "",
           f"Environment: `{PROFILE_ENV}` selects the default tolerance profile "
           f"({', '.join(f'`{k}`' for k in TOL_PROFILES)}); `--tol-*` flags override it.", "",
           "## Overview", "", "```text", helps[0].rstrip(), "```", ""]
    for name, text in zip(COMMANDS, helps[1:]):
        out += [f"## {name}", "", "```text", text.rstrip(), "```", ""]
    return "\n".join(out)


def _error(exc: Exception) -> dict:
    return {"error": {"module": getattr(exc, "module", "emcalc"),
                      "code": getattr(exc, "code", type(exc).__name__),
                      "message": str(exc)}}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.reference:
        sys.stdout.write(render_reference() + "\n")
        return EXIT_OK
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_INPUT
    if args.json_schema:
        sys.stdout.write(canonical_dumps(report_schema(args.command)) + "\n")
        return EXIT_OK
    try:
        code, report = run(args)
    except AssertionError as exc:
        code, report = EXIT_AUDIT, _error(exc)
        report["error"]["code"] = "InternalCheckFailed"
    except (EmcalcError, ValueError) as exc:
        sys.stderr.write(canonical_dumps(_error(exc)) + "\n")
        return EXIT_INPUT
    if not args.quiet:
        stream = sys.stdout if "error" not in report else sys.stderr
        stream.write(canonical_dumps(report) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
