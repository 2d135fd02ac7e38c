"""`stagespace` command line: staging servers and the benchmark drivers.

Subcommands:

- ``server``      run one staging server from a config file (blocks)
- ``devbench``    FIO-style fixed-size transfer benchmark -> devbench CSV
- ``scaling``     strong/weak scaling drill with live servers -> scaling CSV
- ``kernelbench`` compiled vs pure-Python kernel comparison -> CSV

Grid sweeps: devbench accepts comma-separated value lists for --pattern,
--rw, --bs, --jobs and --qd and runs the Cartesian product, one CSV row per
cell.
"""

from __future__ import annotations

import argparse
import itertools
import logging
import sys

from .bench.devbench import DevbenchConfig, run_devbench
from .bench.kernelbench import KernelbenchConfig, run_kernelbench
from .bench.report import BenchReport, emit_report, render_report
from .bench.scaling import ScalingConfig, run_scaling
from .errors import ConfigError, StagingError
from .server import load_config, run_server
from .tier import parse_size

log = logging.getLogger("stagespace.cli")

# Full-scale domains need tens of GB of staging; the defaults below are
# sized for a development desk instead.
DESK_STRONG_BYTES = 64 << 20  # total per timestep
DESK_WEAK_BYTES = 512 << 10  # per writer per timestep
FULL_STRONG_BYTES = 4 << 30
FULL_WEAK_BYTES = 64 << 20


def _csv_list(conv):
    def parse(text: str) -> list:
        return [conv(part) for part in text.split(",") if part != ""]
    return parse


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stagespace",
        description="versioned array staging: servers and benchmarks")
    parser.add_argument("-v", "--verbose", action="store_true",
                        help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("server", help="run one staging server (blocks)")
    p.add_argument("--config", required=True,
                   help="key=value config file (see README)")

    p = sub.add_parser("devbench",
                       help="fixed-size transfer benchmark on a file or tier")
    p.add_argument("--target", required=True,
                   help="file path, or tier spec like heap:256M, "
                        "mmap:/path:256M, delayed:200:1000:heap:256M")
    p.add_argument("--pattern", default="seq", type=_csv_list(str),
                   help="seq|rand (comma list sweeps)")
    p.add_argument("--rw", default="write", type=_csv_list(str),
                   help="read|write|mix50 (comma list sweeps)")
    p.add_argument("--bs", default="4096", type=_csv_list(parse_size),
                   help="transfer size >= 512, e.g. 4K (comma list sweeps)")
    p.add_argument("--jobs", default="1", type=_csv_list(int),
                   help="worker count (comma list sweeps)")
    p.add_argument("--qd", default="1", type=_csv_list(int),
                   help="outstanding ops per worker (comma list sweeps)")
    p.add_argument("--runtime", type=float, default=2.0,
                   help="seconds per cell; 0 = until --total-bytes")
    p.add_argument("--total-bytes", type=parse_size, default=0,
                   help="stop each cell after exactly this many bytes")
    p.add_argument("--size", type=parse_size, default=256 << 20,
                   help="target extent the offsets roam over")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--direct", choices=("auto", "1", "0"), default="auto",
                   help="O_DIRECT: attempt (auto), require (1), forbid (0)")
    p.add_argument("--processes", action="store_true",
                   help="one OS process per job (file targets only)")
    p.add_argument("--out", default="-", help="CSV path, - for stdout")

    p = sub.add_parser("scaling", help="strong/weak scaling drill")
    p.add_argument("--mode", required=True, choices=("strong", "weak"))
    p.add_argument("--writers", type=int, default=4)
    p.add_argument("--readers", type=int, default=4)
    p.add_argument("--servers", type=int, default=2)
    p.add_argument("--timesteps", type=int, default=5)
    p.add_argument("--bytes", type=parse_size, default=None, dest="nbytes",
                   help="strong: total per timestep; weak: per writer "
                        "(default 64M / 512K, --full-scale 4G / 64M)")
    p.add_argument("--tier", default="heap",
                   help="heap | mmap:<path> | delayed:<op_us>:<mib_us>:"
                        "<inner>; capacity defaults to fit the run")
    p.add_argument("--element-size", type=int, default=8)
    p.add_argument("--timeout-ms", type=int, default=60_000,
                   help="per-client staging operation timeout")
    p.add_argument("--full-scale", action="store_true",
                   help="default --bytes to production-sized domains")
    p.add_argument("--out", default="-", help="CSV path, - for stdout")

    p = sub.add_parser("kernelbench",
                       help="compare compiled and pure-Python kernels")
    p.add_argument("--size", type=parse_size, default=16 << 20)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--backends", default="", type=_csv_list(str),
                   help="subset to run, e.g. cython,python")
    p.add_argument("--element-size", type=int, default=8)
    p.add_argument("--out", default="-", help="CSV path, - for stdout")
    return parser


def _write(report: BenchReport, out: str):
    if out == "-":
        sys.stdout.write(render_report(report))
    else:
        emit_report(report, out)
        log.info("wrote %d %s rows to %s", len(report.rows), report.kind,
                 out)


def _cmd_server(args) -> int:
    run_server(load_config(args.config))
    return 0


def _cmd_devbench(args) -> int:
    report = BenchReport("devbench")
    cells = list(itertools.product(args.pattern, args.rw, args.bs,
                                   args.jobs, args.qd))
    direct = {"auto": None, "1": True, "0": False}[args.direct]
    for i, (pattern, rw, bs, jobs, qd) in enumerate(cells):
        log.info("cell %d/%d: %s %s bs=%d jobs=%d qd=%d", i + 1, len(cells),
                 pattern, rw, bs, jobs, qd)
        cfg = DevbenchConfig(target=args.target, pattern=pattern, rw=rw,
                             bs=bs, jobs=jobs, qd=qd,
                             runtime_s=args.runtime,
                             total_bytes=args.total_bytes,
                             size_bytes=args.size, seed=args.seed,
                             direct=direct, use_processes=args.processes)
        report.extend(run_devbench(cfg))
    _write(report, args.out)
    return 0


def _cmd_scaling(args) -> int:
    nbytes = args.nbytes
    if nbytes is None:
        if args.mode == "strong":
            nbytes = FULL_STRONG_BYTES if args.full_scale \
                else DESK_STRONG_BYTES
        else:
            nbytes = FULL_WEAK_BYTES if args.full_scale \
                else DESK_WEAK_BYTES
    cfg = ScalingConfig(mode=args.mode, writers=args.writers,
                        readers=args.readers, servers=args.servers,
                        timesteps=args.timesteps, bytes_per=nbytes,
                        tier=args.tier, element_size=args.element_size,
                        client_timeout_ms=args.timeout_ms)
    report = run_scaling(cfg)
    _write(report, args.out)
    failed = [row for row in report.rows if row[-1] == "FAILED"]
    if failed:
        log.error("%d scaling rows FAILED", len(failed))
        return 1
    return 0


def _cmd_kernelbench(args) -> int:
    cfg = KernelbenchConfig(size_bytes=args.size, repeats=args.repeats,
                            element_size=args.element_size,
                            backends=tuple(args.backends))
    _write(run_kernelbench(cfg), args.out)
    return 0


_COMMANDS = {
    "server": _cmd_server,
    "devbench": _cmd_devbench,
    "scaling": _cmd_scaling,
    "kernelbench": _cmd_kernelbench,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"stagespace: {exc}", file=sys.stderr)
        return 2
    except StagingError as exc:
        print(f"stagespace: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
