"""Command-line front end for benchmark runs.

Exit status: 0 on success, 2 when verification fails, 1 on any other error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys

from ..errors import DistFFTError, WorkerPanic
from .runner import DECOMPOSITIONS, RunConfig, report_rows, run, strong_scaling

EXIT_OK, EXIT_ERROR, EXIT_VERIFY = 0, 1, 2


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _bool(text):
    low = text.lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="distfft-bench", description="Run and time distributed FFTs.")
    p.add_argument("--dims", type=_ints, required=True, help="global lengths, e.g. 64,64,64")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--grid", type=_ints, help="process grid, e.g. 2,4")
    g.add_argument("--np", type=int, dest="nprocs", help="rank count; the grid is auto-factored")
    p.add_argument("--kind", choices=("c2c", "r2c", "c2r"), default="c2c")
    p.add_argument("--direction", choices=("forward", "backward"), default="forward")
    p.add_argument("--decomp", choices=DECOMPOSITIONS, default="pencil", dest="decomposition")
    p.add_argument("--backend", choices=("inprocess", "costmodel", "socket"), default="inprocess")
    p.add_argument("--pipelined", type=_bool, default=False)
    p.add_argument("--chunks", type=int, default=1)
    p.add_argument("--staging-buffers", type=int, default=2)
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--warmup", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--precision", choices=("double", "single"), default="double")
    p.add_argument("--out", help="write the report here instead of stdout")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--latency", type=float, default=1e-6, help="seconds per message")
    p.add_argument("--inv-bw", type=float, default=1e-9, help="seconds per wire byte")
    p.add_argument("--staging-inv-bw", type=float, default=0.0, help="seconds per staged byte")
    p.add_argument("--flop-time", type=float, default=1e-10, help="seconds per flop")
    p.add_argument("--pack-inv-bw", type=float, default=1e-10, help="seconds per packed byte")
    p.add_argument("--verify", choices=("auto", "on", "off"), default="auto")
    p.add_argument("--input", help="tensor file holding the input")
    p.add_argument("--output", help="tensor file for the result")
    p.add_argument("--sweep", type=_ints, help="strong-scaling rank counts, e.g. 1,2,4,8")
    p.add_argument("--timeout", type=float, default=60.0)
    return p


def config_from_args(ns) -> RunConfig:
    return RunConfig(
        dims=ns.dims, grid=ns.grid, nprocs=ns.nprocs, kind=ns.kind, direction=ns.direction,
        decomposition=ns.decomposition, backend=ns.backend, pipelined=ns.pipelined,
        chunks=ns.chunks, staging_buffers=ns.staging_buffers, reps=ns.reps, warmup=ns.warmup,
        seed=ns.seed, precision=ns.precision, verify=ns.verify, input=ns.input, output=ns.output,
        latency=ns.latency, inv_bw=ns.inv_bw, staging_inv_bw=ns.staging_inv_bw,
        flop_time=ns.flop_time, pack_inv_bw=ns.pack_inv_bw, timeout=ns.timeout,
    )


def render(reports, fmt: str) -> str:
    if fmt == "json":
        body = reports[0] if len(reports) == 1 else {"sweep": reports}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"
    rows = [r for rep in reports for r in report_rows(rep)]
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(ns)
        reports = strong_scaling(cfg, ns.sweep) if ns.sweep else [run(cfg)]
    except WorkerPanic as exc:
        print(f"error: rank {exc.rank} failed: {exc.exc!r}", file=sys.stderr)
        return EXIT_ERROR
    except (DistFFTError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    text = render(reports, ns.format)
    if ns.out:
        with open(ns.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    failed = [r for r in reports if r["verification"]["verified"] is False]
    for r in failed:
        print(f"verification failed: relative error {r['verification']['max_rel_error']:.3e} "
              f"exceeds {r['verification']['tolerance']:g}", file=sys.stderr)
    return EXIT_VERIFY if failed else EXIT_OK
