"""Command-line front end.

Exit codes: 0 success or certified, 1 analysis negative, 2 input error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import setcalc as sc
from .netmodel import ScenarioError, builtin_scenarios, disturbance_set, load_scenario, lqr_gains
from .tmpc import MODES, TubeInadmissibleError, build_controllers, sample_initial_state, simulate
from .tubes import UnsupportedNetworkError, mrpi_approx, square_box_pi_exists, theorem2_certificate, tube_admissible, Tube

EXIT_OK, EXIT_NEGATIVE, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _load(spec: str):
    builtins = builtin_scenarios()
    if spec in builtins:
        net = builtins[spec]
    else:
        path = Path(spec)
        if not path.exists():
            raise InputError(f"unknown scenario {spec!r}: not a builtin ({', '.join(builtins)}) and no such file")
        try:
            net = load_scenario(path)
        except ScenarioError as exc:
            raise InputError(str(exc)) from exc
    if net.gains is None:
        net = net.with_gains(lqr_gains(net))
    return net


def _outdir(args):
    if args.out is None:
        return None
    d = Path(args.out)
    try:
        d.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {d}: {exc}") from exc
    return d


def cmd_certify(args) -> int:
    net = _load(args.scenario)
    rep = theorem2_certificate(net, eps=args.eps, tol=args.tol)
    sys.stdout.write(rep.to_text())
    out = _outdir(args)
    if out is not None:
        (out / "certificate.json").write_text(rep.to_json())
        (out / "certificate.txt").write_text(rep.to_text())
    return EXIT_OK if rep.certified else EXIT_NEGATIVE


def cmd_rpi(args) -> int:
    net = _load(args.scenario)
    named, panels = [], []
    ok = True
    for i, s in enumerate(net.subsystems):
        W, parts = disturbance_set(net, i)
        K = net.gains[i]
        F = s.A + s.B @ K
        if not parts:
            print(f"subsystem {i}: no neighbours, Z = {{0}}")
            continue
        try:
            t = mrpi_approx(F, W, args.eps)
        except ValueError as exc:
            print(f"subsystem {i}: no tube ({exc})")
            ok = False
            continue
        adm = tube_admissible(Tube(t.F, t.W, t.Z, t.s, t.alpha, t.eps, t.inflation, i, K), s.X, s.U, K, args.tol)
        ok &= adm.ok
        print(f"subsystem {i}: s={t.s} alpha={t.alpha:.3e} Z in X: {'yes' if adm.state_margin > args.tol else 'NO'} "
              f"(margin {adm.state_margin:+.6f}), KZ in U: {'yes' if adm.input_margin > args.tol else 'NO'} "
              f"(margin {adm.input_margin:+.6f})")
        if s.n <= 2:
            named += [(f"X_{i}", s.X), (f"Z_{i}", t.Z)]
            if s.n == 2:
                panels.append((f"subsystem {i}", [(f"X_{i}", s.X, "hatched"), (f"Z_{i}", t.Z, "filled")]))
    if args.svg and args.out is None:
        args.out = "."
    out = _outdir(args)
    if out is not None:
        with open(out / "sets.csv", "w") as fh:
            sc.write_vertex_csv(fh, named)
        if args.svg:
            if panels:
                (out / "sets.svg").write_text(sc.svg_polygons(panels))
                print(f"wrote {out / 'sets.svg'}")
            else:
                print("no 2-D subsystems to draw")
    return EXIT_OK if ok else EXIT_NEGATIVE


def cmd_simulate(args) -> int:
    net = _load(args.scenario)
    rng = np.random.default_rng(args.seed)
    ctls = None
    if args.mode != "linear":
        try:
            ctls = build_controllers(net, N=args.horizon, eps=args.eps)
        except TubeInadmissibleError as exc:
            print(f"cannot build tube MPC: {exc}")
            return EXIT_NEGATIVE
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    try:
        x0 = sample_initial_state(net, args.mode, rng, ctls, eps=args.eps)
    except (RuntimeError, ValueError) as exc:
        print(f"no admissible initial state: {exc}")
        return EXIT_NEGATIVE
    tr = simulate(net, args.mode, x0, args.steps, ctls, tol=args.sim_tol)
    tr.meta.update({"seed": args.seed, "eps": args.eps, "horizon": args.horizon})
    out = _outdir(args)
    if out is not None:
        (out / "trace.csv").write_text(tr.to_csv())
        (out / "summary.json").write_text(tr.summary_json())
    s = tr.summary()
    print(f"{net.name} {args.mode}: {tr.steps} steps, in_tube={s['all_in_tube']} in_X={s['all_in_X']} "
          f"in_U={s['all_in_U']}" + (f", halted at {tr.halted}" if tr.halted else ""))
    return EXIT_OK if tr.all_flags() else EXIT_NEGATIVE


def cmd_squarepi(args) -> int:
    net = _load(args.scenario)
    try:
        r = square_box_pi_exists(net=net)
    except UnsupportedNetworkError as exc:
        raise InputError(str(exc)) from exc
    print(("FOUND" if r.exists else "NOT FOUND") + f" rho(|F|) = {r.rho_abs:.6f}")
    if r.exists:
        print("half-widths: " + ", ".join(f"{a:.6g}" for a in r.half_widths))
    return EXIT_OK if r.exists else EXIT_NEGATIVE


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tubecert", description="Certify networks of coupled LTI subsystems "
                                "from local robust tubes and simulate decentralized tube MPC.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True, help="builtin name or path to a scenario JSON file")
        sp.add_argument("--eps", type=float, default=1e-3, help="RPI outer-approximation tolerance")
        sp.add_argument("--tol", type=float, default=sc.DEFAULT_TOL, help="set-inclusion tolerance")
        sp.add_argument("--out", default=None, help="output directory")

    sp = sub.add_parser("certify", help="run the network certificate")
    common(sp)
    sp.set_defaults(func=cmd_certify)
    sp = sub.add_parser("rpi", help="compute tube sets and dump vertices")
    common(sp)
    sp.add_argument("--svg", action="store_true", help="also write sets.svg (into --out, default the working directory)")
    sp.set_defaults(func=cmd_rpi)
    sp = sub.add_parser("simulate", help="closed-loop simulation")
    common(sp)
    sp.add_argument("--mode", choices=MODES, default="tmpc")
    sp.add_argument("--steps", "-T", type=int, default=100)
    sp.add_argument("--horizon", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--sim-tol", type=float, default=1e-7, help="tolerance of the membership flags")
    sp.set_defaults(func=cmd_simulate)
    sp = sub.add_parser("squarepi", help="symmetric box PI test for scalar subsystems")
    common(sp)
    sp.set_defaults(func=cmd_squarepi)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if getattr(args, "steps", 1) < 1 or getattr(args, "horizon", 1) < 1 or args.eps <= 0:
        print("error: --steps, --horizon and --eps must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
