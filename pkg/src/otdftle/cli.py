"""Command-line entry point: ``otdftle {field,trace,diag,bench}``.

Exit codes: 0 success, 1 runtime failure (or flagged points with
``--strict``), 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, build_config, read_config_file
from .diagnostics import detect_crossing, relative_gap
from .errors import ConfigError, OtdFtleError
from .field_scan import (
    FAILURE_MASK,
    FLAG_NAMES,
    benchmark_scaling,
    scan_full,
    scan_reduced,
    write_cost_table,
    write_field,
    write_field_raw,
)
from .otd import equivalence_history, ftle_history

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _fmt(v) -> str:
    return format(float(v), ".17g")


def write_table(path, header: dict, columns, data) -> None:
    lines = [f"# {k}: {v}" for k, v in header.items()]
    lines.append(",".join(columns))
    lines += [",".join(_fmt(v) for v in row) for row in np.asarray(data)]
    Path(path).write_text("\n".join(lines) + "\n")


def _header(cfg: RunConfig, kind: str) -> dict:
    return {"format": f"otdftle-{kind}-1", "version": __version__, **cfg.resolved()}


# ---------------------------------------------------------------- commands


def cmd_field(cfg: RunConfig) -> int:
    model = cfg.build_model()
    icfg = cfg.integrator
    if cfg.mode == "reduced":
        slc = scan_reduced(
            model, cfg.grid, cfg.r[0], icfg, workers=cfg.workers, crossing_threshold=cfg.threshold
        )
    else:
        method = "full_fd" if cfg.method == "fd" else "full_variational"
        slc = scan_full(model, cfg.grid, method, icfg, cfg.fd, workers=cfg.workers)
    header = {k: v for k, v in cfg.resolved().items() if k not in ("T", "dt", "t0")}
    header.pop("mode", None)
    write_field(slc, cfg.output, icfg, extra=header)
    if cfg.raw:
        write_field_raw(slc, str(cfg.output) + ".bin")
    failed = (slc.flags & FAILURE_MASK) != 0
    print(f"wrote {slc.values.shape[0]}x{slc.values.shape[1]} field to {cfg.output}")
    if failed.any():
        counts = {
            name: int(np.count_nonzero(slc.flags & bit))
            for bit, name in FLAG_NAMES.items()
            if bit & FAILURE_MASK and np.any(slc.flags & bit)
        }
        summary = ", ".join(f"{k}={v}" for k, v in counts.items())
        print(f"{int(failed.sum())} flagged points ({summary})", file=sys.stderr)
        if cfg.strict:
            return EXIT_RUNTIME
    return EXIT_OK


def _crossing_reports(hist, cfg: RunConfig):
    n = hist.eigenvalues.shape[1]
    return [
        detect_crossing(hist.times, hist.eigenvalues, r, cfg.threshold)
        for r in sorted(set(cfg.r) | {1})
        if r < n
    ]


def cmd_trace(cfg: RunConfig) -> int:
    model = cfg.build_model()
    hist = ftle_history(model, np.array(cfg.z0), cfg.integrator, r_values=cfg.r)
    n = model.dimension
    cols = ["t"] + [f"Lambda_{i + 1}" for i in range(n)]
    data = [hist.times[:, None], hist.full]
    for r in cfg.r:
        cols += [f"Gamma_r{r}_{i + 1}" for i in range(r)]
        data.append(hist.reduced[r])
    reports = _crossing_reports(hist, cfg)
    header = _header(cfg, "trace")
    for rep in reports:
        i, j = rep.pair
        header[f"crossing_{i}_{j}"] = " ".join(_fmt(t) for t in rep.times) or "none"
    write_table(cfg.output, header, cols, np.hstack(data))
    rows = [(t, pair, g) for rep in reports for (t, pair, g) in rep.rows()]
    cross_path = _sibling(cfg.output, "crossings")
    lines = [f"# {k}: {v}" for k, v in header.items()] + ["t,pair,relative_gap"]
    lines += [f"{_fmt(t)},{p},{_fmt(g)}" for t, p, g in rows]
    Path(cross_path).write_text("\n".join(lines) + "\n")
    print(f"wrote trace to {cfg.output}, crossings to {cross_path}")
    for t, p, g in rows:
        print(f"crossing {p} at T={t:.6g} (relative gap {g:.3g})")
    return EXIT_OK


def cmd_diag(cfg: RunConfig) -> int:
    model = cfg.build_model()
    z0 = np.array(cfg.z0)
    hist = ftle_history(model, z0, cfg.integrator, r_values=cfg.r)
    n = model.dimension
    cols, data = ["t"], [hist.times[:, None]]
    for r in cfg.r:
        _, gam = equivalence_history(model, z0, r, cfg.integrator)
        cols += [f"equivalence_r{r}", f"alignment_r{r}"]
        data += [gam[1:, None], hist.alignment[r][:, None]]
        if r < n:
            cols.append(f"gap_{r}_{r + 1}")
            data.append(relative_gap(hist.eigenvalues, r)[:, None])
    write_table(cfg.output, _header(cfg, "diag"), cols, np.hstack(data))
    print(f"wrote diagnostics to {cfg.output}")
    return EXIT_OK


def cmd_bench(cfg: RunConfig) -> int:
    table = benchmark_scaling(cfg.n_list, cfg.r[0], cfg.integrator, repeats=cfg.repeats)
    write_cost_table(table, cfg.output, extra=cfg.resolved())
    for row in table.rows:
        print(
            f"n={row.n:5d} full {row.full_equations:8d} eq {row.full_seconds:.4g}s  "
            f"reduced {row.reduced_equations:6d} eq {row.reduced_seconds:.4g}s"
        )
    print(f"log-log slope: full {table.full_slope:.3f}, reduced {table.reduced_slope:.3f}")
    return EXIT_OK


COMMANDS = {"field": cmd_field, "trace": cmd_trace, "diag": cmd_diag, "bench": cmd_bench}


def _sibling(path, tag: str) -> str:
    p = Path(path)
    return str(p.with_name(f"{p.stem}.{tag}{p.suffix or '.csv'}"))


# ------------------------------------------------------------------ parser


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value file; flags override its entries")
    p.add_argument("--model", help="abc, cdv or linear (default abc)")
    p.add_argument("--param", action="append", metavar="K=V", help="model parameter override")
    p.add_argument("--matrix", help="linear model: diag:a,b,... or rows:a,b;c,d")
    p.add_argument("--cdv-as-printed", dest="cdv_as_printed", action="store_const", const=True)
    p.add_argument("--r", help="reduction size(s), comma separated")
    p.add_argument("--T", help="horizon")
    p.add_argument("--t0", help="initial time")
    p.add_argument("--dt", help="RK4 step")
    p.add_argument("--threshold", help="relative-gap threshold for crossings")
    p.add_argument("-o", "--output", help="output path")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="otdftle", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"otdftle {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("field", help="FTLE field over a 2-D grid slice")
    _add_common(f)
    f.add_argument("--mode", help="full or reduced")
    f.add_argument("--method", help="full mode: variational or fd")
    f.add_argument("--h", help="finite-difference step")
    f.add_argument("--grid", nargs="+", metavar="SPEC", help="AXES RANGE [RANGE2], e.g. z1,z2 0:6.2832:51")
    f.add_argument("--fix", action="append", metavar="zK=V", help="value of a non-grid coordinate")
    f.add_argument("--workers", help="worker processes (env OTDFTLE_WORKERS)")
    f.add_argument("--strict", action="store_const", const=True, help="exit 1 if any point is flagged")
    f.add_argument("--raw", action="store_const", const=True, help="also write OUTPUT.bin")

    for name, text in (("trace", "FTLE histories at one point"), ("diag", "subspace diagnostics at one point")):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--z0", help="initial point, comma separated")

    b = sub.add_parser("bench", help="full vs reduced cost scaling")
    b.add_argument("--config")
    b.add_argument("--n-list", dest="n_list", help="comma separated sizes")
    b.add_argument("--r")
    b.add_argument("--T")
    b.add_argument("--dt")
    b.add_argument("--repeats")
    b.add_argument("-o", "--output")
    return parser


_RANGE = re.compile(r"^[-+.\deE]+:[-+.\deE]+:\d+$")


def _fold_grid(argv):
    """Join ``--grid`` operands so ranges like ``-1:1:5`` are not read as flags."""
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--grid":
            j = i + 1
            if j < len(argv) and not argv[j].startswith("-"):
                j += 1
            while j < len(argv) and _RANGE.match(argv[j]):
                j += 1
            out.append("--grid=" + " ".join(argv[i + 1 : j]))
            i = j
        else:
            out.append(argv[i])
            i += 1
    return out


def resolve(argv=None) -> RunConfig:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = make_parser().parse_args(_fold_grid(argv))
    values = {}
    if args.config:
        values.update(read_config_file(args.config))
    cli = {k: v for k, v in vars(args).items() if v is not None and k not in ("config", "command")}
    for key in ("param", "fix"):
        if key in cli:
            cli[key] = values.get(key, []) + cli[key]
    if "grid" in cli:
        cli["grid"] = " ".join(cli["grid"])
    values.update(cli)
    if "workers" not in values and os.environ.get("OTDFTLE_WORKERS"):
        values["workers"] = os.environ["OTDFTLE_WORKERS"]
    return build_config(args.command, values)


def main(argv=None) -> int:
    try:
        cfg = resolve(argv)
    except ConfigError as exc:
        print(f"otdftle: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"otdftle: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OtdFtleError, OSError, np.linalg.LinAlgError) as exc:
        stage = getattr(exc, "stage", None)
        where = f" during {stage}" if stage else ""
        print(f"otdftle: failed{where}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
