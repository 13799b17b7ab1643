"""Command-line entry point.

    nanotherm run <config>
    nanotherm sweep <config> --param section.key --values "v1, v2, ..."
    nanotherm gen-network <config> -o network.txt
    nanotherm verify <case|all>

Exit status: 0 on success, 1 on configuration or data errors, 2 on
numerical failures (including failed verification checks).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import list_presets, parse_config, parse_value_list
from .errors import ConfigurationError, DataError, NumericalError, VerificationError

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage errors; usage errors are config errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _global_flags(p, defaults: bool):
    # accepted before or after the subcommand; the subparser copies only
    # override the top-level values when given
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    p.add_argument("--out-dir", default=d("out"), help="output directory (default: ./out)")
    p.add_argument("--quiet", action="store_true", default=d(False), help="only report warnings and errors")
    p.add_argument("--threads", type=int, default=d(1),
                   help="concurrent runs in a sweep or concurrent verify cases (default: 1)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nanotherm", description="Nanoparticle hyperthermia simulator.")
    _global_flags(p, True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, False)
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)

    r = sub.add_parser("run", help="run one scenario", parents=[common])
    r.add_argument("config", help=f"config file or preset name ({', '.join(list_presets())})")

    s = sub.add_parser("sweep", help="run a scenario for several values of one parameter", parents=[common])
    s.add_argument("config")
    s.add_argument("--param", required=True, help="parameter path, e.g. protocol.sar")
    s.add_argument("--values", required=True, help='comma-separated values, e.g. "1.5 MW/kg, 2 MW/kg"')

    g = sub.add_parser("gen-network", help="write the synthetic network described by a config", parents=[common])
    g.add_argument("spec", help="config whose [mesh] and [network] sections describe the network")
    g.add_argument("-o", "--output", required=True)

    v = sub.add_parser("verify", help="run verification cases", parents=[common])
    v.add_argument("case", help="mms-heat, mms-transport, pennes, line-source or all")
    return p


def _cmd_run(args) -> int:
    from .sim import run_simulation

    cfg = parse_config(args.config)
    out = Path(args.out_dir)
    res = run_simulation(cfg, out)
    s = res.summary()
    print(f"wrote {res.csv_path} ({len(res.rows)} steps, {len(res.snapshots)} snapshots, {res.elapsed_s:.1f} s)")
    print(f"peak mean temperature {s['peak_T_mean_K'] - 273.15:.3f} degC at t = {s['t_peak_s'] / 60:g} min; "
          f"peak max {s['peak_T_max_K'] - 273.15:.3f} degC")
    return EXIT_OK


def _cmd_sweep(args) -> int:
    from .sim import run_sweep

    cfg = parse_config(args.config)
    values = parse_value_list(args.values)
    rows = run_sweep(cfg, args.param, values, Path(args.out_dir), workers=args.threads)
    for r in rows:
        print(f"{args.param} = {r['value']}: peak mean {r['peak_T_mean_K'] - 273.15:.3f} degC "
              f"at {r['t_peak_s'] / 60:g} min")
    print(f"wrote {Path(args.out_dir) / 'sweep_summary.csv'}")
    return EXIT_OK


def _cmd_gen_network(args) -> int:
    from .mesh import build_mesh
    from .sim import make_network
    from .vasculature import save_network

    cfg = parse_config(args.spec)
    m = cfg.section("mesh")
    mesh = build_mesh(m["nx"], m["ny"], m["lx"], m["ly"], m["x0"], m["y0"])
    net = make_network(cfg, mesh)
    save_network(net, args.output)
    print(f"wrote {args.output}: {net.n_nodes} nodes, {net.n_segments} segments, "
          f"{int(net.collapsed.sum())} collapsed")
    return EXIT_OK


def _cmd_verify(args) -> int:
    from .verify import run_cases

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    report = out / "verify_report.csv"
    checks = run_cases([args.case], report=report, threads=args.threads)
    for c in checks:
        print(f"{c.case:14s} {c.metric:28s} {c.value:12.6g}  {c.threshold:14s} {'pass' if c.passed else 'FAIL'}")
    print(f"wrote {report}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_NUMERICAL


COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "gen-network": _cmd_gen_network, "verify": _cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        if args.threads < 1:
            raise ConfigurationError("--threads must be >= 1")
        return COMMANDS[args.command](args)
    except (ConfigurationError, DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, VerificationError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
