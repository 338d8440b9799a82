"""Command-line entry point: ``aerokin <subcommand> [flags]``.

Exit codes: 0 when every verdict passes, 1 when a check fails, 2 for
configuration errors, 3 for numerical failures (non-convergence, CFL, NaN).
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import __version__
from .config import DEFAULT_SWEEP_STATE, RunConfig, parse_config
from .errors import AerokinError, ConfigError
from .mc import set_default_workers

log = logging.getLogger("aerokin")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    raise TypeError(f"cannot serialise {type(x).__name__}")


def write_json(path, payload):
    text = json.dumps(payload, indent=2, default=_jsonable)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    return text


def _vec3(text):
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated numbers")
    return parts


# --------------------------------------------------------------------------
# parser


def build_parser():
    ap = argparse.ArgumentParser(prog="aerokin", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"aerokin {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML file; flags override its values")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, help="worker threads (capped by AEROKIN_THREADS)")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-kernels", parents=[common], help="kernel hypothesis checks (JSON report)")
    p.add_argument("--kernel")
    p.add_argument("--epsilon", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--V", type=_vec3, help="particle velocity, e.g. 10,0,0")
    p.add_argument("--W", type=_vec3, help="gas velocity")

    p = sub.add_parser("coeffs", parents=[common], help="viscosity and drag coefficients (JSON)")
    p.add_argument("--molecular-kernel", dest="molecular_kernel")
    p.add_argument("--Q-preset", dest="Q_preset", help="constant:c0, hardsphere, linear or charles:beta")
    p.add_argument("--degree", type=int)
    p.add_argument("--C0", type=float)

    p = sub.add_parser("limit-sweep", parents=[common], help="limit sweep over (eps, eta) (CSV)")
    p.add_argument("--prop", choices=["drag", "friction", "flux"])
    p.add_argument("--kernel")
    p.add_argument("--state-preset", dest="state_preset")
    p.add_argument("--schedule", help='"0.4,0.2,0.1" (eta = eps^3) or "0.4:0.01,0.2:0.001"')
    p.add_argument("--beta", type=float)

    p = sub.add_parser("simulate-vns", parents=[common], help="coupled fluid-particle simulation")
    p.add_argument("--grid-n", dest="grid_n", type=int)
    p.add_argument("--dim", type=int, choices=[2, 3])
    p.add_argument("--nu", type=float)
    p.add_argument("--kappa", type=float)
    p.add_argument("--dt", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--snapshot-every", dest="snapshot_every", type=int)
    p.add_argument("--drag-mode", dest="drag_mode", choices=["rk4", "exponential"])
    p.add_argument("--restart", help="continue from a VNS1 snapshot")
    p.add_argument("--particles", dest="particles.count", type=int, help="particle count")
    p.add_argument("--particle-preset", dest="particles.init_preset")
    p.add_argument("--particle-seed", dest="particles.seed", type=int)

    p = sub.add_parser("all", parents=[common], help="full acceptance suite")
    p.add_argument("--only", help="comma-separated criterion numbers")
    return ap


_NOT_CONFIG = {"command", "config", "verbose", "only"}


def config_from_args(args) -> RunConfig:
    flags = {k: v for k, v in vars(args).items() if k not in _NOT_CONFIG}
    if flags.get("out") is None:
        flags.pop("out", None)
    return parse_config(args.command, flags, args.config)


# --------------------------------------------------------------------------
# commands


def cmd_verify_kernels(cfg: RunConfig, args):
    from .kernels import ScalingParams, pg_kernel
    from .moments import run_suite

    v = cfg.values
    kernel = pg_kernel(v["kernel"], v["beta"])
    p = ScalingParams(v["epsilon"], v["eta"], v["beta"])
    reports = run_suite(kernel, p, np.array(v["V"]), np.array(v["W"]), v["samples"], cfg.seed)
    for r in reports:
        print(f"{r['check']:<28} {r['verdict']}")
    write_json(v["out"] or None, {"meta": cfg.meta(), "config": v, "reports": reports})
    return all(r["verdict"] == "pass" for r in reports)


def cmd_coeffs(cfg: RunConfig, args):
    from .transport import compute_coefficients

    v = cfg.values
    res = compute_coefficients(v["molecular_kernel"], v["Q_preset"], v["degree"], v["C0"])
    print(f"nu = {res['nu']!r}\nkappa = {res['kappa']!r}")
    if res["warning"]:
        print(f"warning: {res['warning']}")
    write_json(v["out"] or None, {"meta": cfg.meta(), "config": v, **res})
    return all(x == "pass" for x in res["verdicts"].values())


def sweep_verdict(res):
    """Pass/fail rule per sweep kind (mirrors the acceptance thresholds)."""
    if res.prop == "drag":
        return res.monotone and res.fitted_order >= 0.8
    if res.prop == "friction":
        return float(res.extras["identity_residual"].max()) <= 1e-8 and float(res.extras["relative_error"][-1]) <= 0.02
    return (res.extras["ratio_last_first"] < 0.25 and abs(res.extras["limit_trace"]) <= 1e-8
            and res.extras["limit_frobenius"] <= 1e-6)


def cmd_limit_sweep(cfg: RunConfig, args):
    from .kernels import pg_kernel
    from .limits import SWEEPS, parse_schedule, state_preset

    v = cfg.values
    kernel = pg_kernel(v["kernel"], v["beta"])
    state = state_preset(v["state_preset"] or DEFAULT_SWEEP_STATE[v["prop"]])
    schedule = parse_schedule(v["schedule"], v["beta"]) if v["schedule"] else None
    res = SWEEPS[v["prop"]](state, kernel, schedule)
    m = cfg.meta()
    header = "# " + " ".join(f"{k}={m[k]}" for k in sorted(m)) + "\n"
    text = header + res.to_csv()
    if v["out"]:
        with open(v["out"], "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    ok = sweep_verdict(res)
    print(f"{v['prop']} sweep: fitted order {res.fitted_order:.3f}, {'pass' if ok else 'fail'}", file=sys.stderr)
    return ok


def cmd_simulate_vns(cfg: RunConfig, args):
    from . import vns

    v = dict(cfg.values)
    out_dir = v.pop("out") or "vns_out"
    restart = v.pop("restart") or None
    # the run seed feeds particle initialisation unless that seed was set itself
    if "particles.seed" not in cfg.provenance:
        v["particles"] = {**v["particles"], "seed": cfg.seed}
    for k in ("seed", "workers"):
        v.pop(k)
    meta = {**cfg.meta(), "seed": v["particles"]["seed"]}
    diags, snaps, _, _ = vns.run_simulation(v, out_dir, restart, meta=meta)
    verdicts = vns.run_verdicts(diags)
    write_json(os.path.join(out_dir, "run.json"),
               {"meta": meta, "config": cfg.values, "verdicts": verdicts, "snapshots": snaps})
    for k, val in verdicts.items():
        print(f"{k:<16} {val}")
    return verdicts["divergence_ok"] and verdicts["momentum_ok"] and verdicts["energy_ok"]


def cmd_all(cfg: RunConfig, args):
    from .suite import format_line, run_all

    only = {int(x) for x in args.only.split(",")} if getattr(args, "only", None) else None
    results = run_all(cfg.seed, only, echo=lambda r: print(format_line(r), flush=True))
    failed = [r for r in results if not r["passed"]]
    write_json(cfg.values["out"] or None, {"meta": cfg.meta(), "results": results})
    if failed:
        print("failing: " + ", ".join(f"{r['criterion']} ({r['name']})" for r in failed))
    return not failed


COMMANDS = {
    "verify-kernels": cmd_verify_kernels,
    "coeffs": cmd_coeffs,
    "limit-sweep": cmd_limit_sweep,
    "simulate-vns": cmd_simulate_vns,
    "all": cmd_all,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    set_default_workers(cfg.values["workers"] or None)
    log.info("config hash %s, seed %d", cfg.config_hash, cfg.seed)
    try:
        ok = COMMANDS[cfg.command](cfg, args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except AerokinError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
