"""Command-line interface.

Subcommands: `study` (run a convergence study), `element-table` (print the
DOF catalog for an (m, n) element), `verify` (run the invariant battery).
Exit codes: 0 success, 2 solver failure, 3 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

from .element import dof_table_text
from .study import ConfigError, SolverFailure, StudyConfig, emit_table, run_study


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse exits with 2 by default; we need 3
        raise ConfigError(message)


def _parse_resolutions(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.replace(" ", "").split(",") if t)
    except ValueError as exc:
        raise ConfigError(f"bad resolution list '{text}'") from exc


def _read_config_file(path: str) -> dict:
    out = {}
    try:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected key=value, got '{line}'")
                key, val = (s.strip() for s in line.split("=", 1))
                out[key] = val
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return out


_FIELD_PARSERS = {
    "m": int, "n": int, "domain": str, "solution": str,
    "resolutions": _parse_resolutions, "eta": float,
    "quad_exactness": int, "solver_tol": float, "solver_maxit": int,
    "norms": lambda s: tuple(t.strip() for t in s.split(",") if t.strip()),
    "out": str, "fmt": str,
}


def _build_config(args) -> StudyConfig:
    values: dict = {}
    if args.config:
        known = {f.name for f in fields(StudyConfig)}
        for key, raw in _read_config_file(args.config).items():
            if key not in known:
                raise ConfigError(f"unknown config key '{key}'")
            values[key] = _FIELD_PARSERS[key](raw)
    for key in _FIELD_PARSERS:
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    if "m" not in values or "n" not in values:
        raise ConfigError("both --m and --n are required (flag or config file)")
    return StudyConfig(**values).validated()


def _cmd_study(args) -> int:
    config = _build_config(args)
    try:
        rows = run_study(config)
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 2
    text = emit_table(rows, config.fmt)
    if config.out:
        with open(config.out, "w") as fh:
            fh.write(text)
        print(f"wrote {config.out}")
    else:
        print(text, end="")
    return 0


def _cmd_element_table(args) -> int:
    print(dof_table_text(args.m, args.n))
    return 0


def _cmd_verify(_args) -> int:
    from .verify import run_checks

    ok = run_checks(print)
    return 0 if ok else 1


def main(argv=None) -> int:
    parser = _Parser(prog="ipfem",
                     description="interior-penalty nonconforming finite elements "
                                 "for 2m-th order problems")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("study", help="run a convergence study")
    ps.add_argument("--m", type=int)
    ps.add_argument("--n", type=int)
    ps.add_argument("--domain", choices=("box", "lshape"))
    ps.add_argument("--solution")
    ps.add_argument("--resolutions", type=_parse_resolutions,
                    help="comma-separated 1/h values, e.g. 8,16,32,64")
    ps.add_argument("--eta", type=float)
    ps.add_argument("--quad-exactness", dest="quad_exactness", type=int)
    ps.add_argument("--solver-tol", dest="solver_tol", type=float)
    ps.add_argument("--solver-maxit", dest="solver_maxit", type=int)
    ps.add_argument("--norms", type=_FIELD_PARSERS["norms"],
                    help="comma-separated subset of L2,H1,...,Hm,energy")
    ps.add_argument("--out", help="output file (default: print to stdout)")
    ps.add_argument("--format", dest="fmt", choices=("csv", "markdown"))
    ps.add_argument("--config", help="key=value config file; flags override it")
    ps.set_defaults(fn=_cmd_study)

    pe = sub.add_parser("element-table", help="print the DOF catalog for (m, n)")
    pe.add_argument("--m", type=int, required=True)
    pe.add_argument("--n", type=int, required=True)
    pe.set_defaults(fn=_cmd_element_table)

    pv = sub.add_parser("verify", help="run the invariant suites")
    pv.set_defaults(fn=_cmd_verify)

    try:
        args = parser.parse_args(argv)
        return args.fn(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
