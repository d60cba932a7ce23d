"""Command-line entry points: run, converge, cut, meshdump."""

import argparse
import sys

from .driver import RunConfig, converge, cut, load_config, meshdump, run


def _add_config_args(p):
    p.add_argument("--config", help="sectioned key-value config file")
    p.add_argument("--override", action="append", default=[],
                   metavar="section.key=value",
                   help="override a config entry (repeatable)")


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="solve",
        description="moving-mesh DG transport solver")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one configured run")
    _add_config_args(p_run)

    p_conv = sub.add_parser("converge", help="run a refinement ladder")
    _add_config_args(p_conv)
    p_conv.add_argument("--degrees", default="1,2")
    p_conv.add_argument("--ns", default="10,20,40,80")
    p_conv.add_argument("--modes", default="fixed,moving")
    p_conv.add_argument("--csv", default="converge.csv")

    p_cut = sub.add_parser("cut", help="sample a checkpoint along a line")
    p_cut.add_argument("--run", required=True, dest="run_dir")
    p_cut.add_argument("--axis", default="y", choices=["x", "y", "slope"])
    p_cut.add_argument("--value", type=float, default=0.0)
    p_cut.add_argument("--slope", type=float, default=None,
                       help="cut along y = slope*x + intercept")
    p_cut.add_argument("--intercept", type=float, default=0.0)
    p_cut.add_argument("--direction", type=int, default=0)
    p_cut.add_argument("--step", default="last")
    p_cut.add_argument("--points", type=int, default=1000)
    p_cut.add_argument("-o", "--output", default=None)

    p_dump = sub.add_parser("meshdump", help="export a checkpoint mesh")
    p_dump.add_argument("--run", required=True, dest="run_dir")
    p_dump.add_argument("--step", default="last")
    p_dump.add_argument("-o", "--output", default=None)

    args = parser.parse_args(argv)

    if args.command == "run":
        cfg = load_config(args.config, args.override)
        manifest = run(cfg)
        out = cfg.outdir or cfg.default_outdir()
        print(f"run complete: {out}")
        if manifest.global_norms:
            g = manifest.global_norms
            print(f"global norms  L1={g['L1']:.6e}  L2={g['L2']:.6e}  "
                  f"Linf={g['Linf']:.6e}")
        print(f"cpu seconds   {manifest.cpu_seconds:.2f}")
        return 0

    if args.command == "converge":
        cfg = load_config(args.config, args.override)
        degrees = [int(s) for s in args.degrees.split(",") if s]
        ns = [int(s) for s in args.ns.split(",") if s]
        modes = [s.strip() for s in args.modes.split(",") if s.strip()]
        rows, slopes, failures = converge(cfg, degrees, ns, modes, args.csv)
        for (degree, mode, norm), slope in sorted(slopes.items()):
            print(f"P{degree} {mode:6s} {norm:4s} slope {slope:+.3f}")
        for f in failures:
            print(f"FAILED: mode={f[0]} P{f[1]} n={f[2]}: {f[3]}",
                  file=sys.stderr)
        print(f"table written to {args.csv}")
        return 1 if failures else 0

    if args.command == "cut":
        path = cut(args.run_dir, axis=args.axis, value=args.value,
                   direction=args.direction, step=args.step,
                   npoints=args.points, slope=args.slope,
                   intercept=args.intercept, out_path=args.output)
        print(path)
        return 0

    if args.command == "meshdump":
        path = meshdump(args.run_dir, args.step, args.output)
        print(path)
        return 0

    return 2


if __name__ == "__main__":
    sys.exit(main())
