"""Command-line front end: density and bridge grids, exact sampling, urns, selection and validation.

Every data command writes CSV: one metadata comment line, a header row, then
values formatted with repr so they parse back bit-exactly.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from typing import Sequence

import numpy as np

from . import __version__
from .bridge import BridgeSpec, UnsupportedBridge, bridge_density
from .orthopoly import MutationPair
from .sampler import sample_bridge_00, sample_bridge_general, spawn_rngs
from .selection import SelectionModel, bridge_selection, density_selection, eigenpairs, psi_density
from .urn import DEFAULT_HORIZON, three_urn_simulate, two_urn_simulate
from .validation import SUITES, run_suite
from .wf_density import DensityQuery, density_mixture, density_spectral

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
# draws per random substream; substream i always produces draws i*BLOCK .. (i+1)*BLOCK-1
BLOCK = 10_000
# endpoint rows of a density grid carry the one-sided limit, evaluated this far inside
EDGE = 1e-12
# lineage-series methods need about 2/t multiprecision terms; shorter times are refused up front
MIN_TIME = 0.01


class ConfigError(ValueError):
    """Flags that violate the selected command's preconditions."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _fail(EXIT_CONFIG, "config", message)


def _fail(code: int, kind: str, message: str, **extra):
    print(json.dumps({"error": kind, "message": message, "exit_status": code, **extra}), file=sys.stderr)
    raise SystemExit(code)


def _fmt(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(stream, columns: Sequence[str], rows, meta: dict) -> None:
    stream.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])


def read_csv(text: str) -> tuple[dict, list[str], list[list[float]]]:
    """Inverse of write_csv: (metadata, columns, rows of floats)."""
    lines = text.splitlines()
    meta = dict(item.split("=", 1) for item in lines[0][2:].split())
    reader = csv.reader(io.StringIO("\n".join(lines[1:])))
    columns = next(reader)
    return meta, columns, [[float(v) for v in row] for row in reader]


def _grid(size: int) -> np.ndarray:
    if size < 3:
        raise ConfigError("--grid needs at least 3 points")
    return np.linspace(0.0, 1.0, size)


def _on_grid(density, y: np.ndarray) -> np.ndarray:
    inner = np.clip(y, EDGE, 1 - EDGE)
    return np.asarray(density(inner), dtype=float)


def _require(condition: bool, message: str):
    if not condition:
        raise ConfigError(message)


# ------------------------------------------------------------------ commands


def cmd_density(args) -> tuple[list[str], list, dict]:
    theta = MutationPair(args.theta1, args.theta2)
    _require(0 <= args.x <= 1 and args.t > 0, "need 0 <= x <= 1 and t > 0")
    y = _grid(args.grid)
    if not args.gamma:
        _require(args.t >= MIN_TIME, f"t must be at least {MIN_TIME} for neutral densities")
    if args.gamma:
        model = SelectionModel(args.gamma, args.theta2)
        _require(args.theta1 == 0, "selection densities need theta1 = 0")
        values, bound = density_selection(model, args.x, np.clip(y, EDGE, 1 - EDGE), args.t, args.N)
        bounds = np.full(y.shape, bound)
    else:
        method = density_spectral if args.method == "spectral" else density_mixture
        # bounds depend on y, so each point is queried on its own
        outs = [method(DensityQuery(args.x, float(u), args.t, theta), with_bound=True) for u in np.clip(y, EDGE, 1 - EDGE)]
        values, bounds = [o.value for o in outs], [o.bound for o in outs]
    return ["y", "density", "bound"], zip(y, values, bounds), {}


def cmd_bridge(args) -> tuple[list[str], list, dict]:
    theta = MutationPair(args.theta1, args.theta)
    spec = BridgeSpec(args.x, args.z, args.T, args.t, theta, args.gamma)
    if not args.gamma:
        _require(min(args.t, args.T - args.t) >= MIN_TIME, f"t and T - t must be at least {MIN_TIME}")
    density = bridge_selection(spec, args.N) if args.gamma else (lambda u: bridge_density(spec, u))
    y = _grid(args.grid)
    return ["y", "density"], zip(y, _on_grid(density, y)), {}


def _sample_block(job) -> np.ndarray:
    args, rng, size = job
    if args.x == 0 and args.z == 0 and args.theta1 == 0:
        return np.atleast_1d(sample_bridge_00(args.theta, args.t, args.T, rng, size))
    theta = MutationPair(args.theta1, args.theta)
    return np.atleast_1d(sample_bridge_general(args.x, args.z, args.t, args.T, theta, rng, size))


def _blocks(n: int) -> list[int]:
    _require(n > 0, "--n must be positive")
    full, rest = divmod(n, BLOCK)
    return [BLOCK] * full + ([rest] if rest else [])


def _run_blocks(worker, args, sizes: list[int]) -> list:
    rngs = spawn_rngs(args.seed, len(sizes))
    jobs = [(args, rng, size) for rng, size in zip(rngs, sizes)]
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as pool:
            return list(pool.map(worker, jobs))
    return [worker(job) for job in jobs]


def cmd_sample(args) -> tuple[list[str], list, dict]:
    BridgeSpec(args.x, args.z, args.T, args.t, MutationPair(args.theta1, args.theta))
    _require(
        (args.x == 0 and args.z == 0 and args.theta1 == 0) or (0 < args.x < 1 and 0 < args.z < 1),
        "exact sampling needs x = z = 0 with theta1 = 0, or interior endpoints",
    )
    draws = np.concatenate(_run_blocks(_sample_block, args, _blocks(args.n)))
    return ["draw", "y"], zip(range(draws.size), draws), {}


def _urn_block(job):
    args, rng, size = job
    theta = MutationPair(args.theta1, args.theta2)
    if args.model == "two":
        r = two_urn_simulate(theta, args.t, args.x, rng, args.horizon, size)
        return np.column_stack([r.l, r.k, r.x_hat, r.y_hat])
    r = three_urn_simulate(theta, args.t, args.T, rng, args.horizon, size)
    return np.column_stack([r.l, r.m, r.j, r.k, r.x_hat, r.z_hat, r.y_hat])


def cmd_urn(args) -> tuple[list[str], list, dict]:
    _require(args.horizon >= 1, "--horizon must be positive")
    if args.model == "three":
        _require(args.T is not None and 0 < args.t < args.T, "the three-urn model needs 0 < t < T")
        columns = ["l", "m", "j", "k", "x_hat", "z_hat", "y_hat"]
        counts = 4
    else:
        _require(args.t > 0, "t must be positive")
        _require(args.x is None or 0 <= args.x <= 1, "x must lie in [0, 1]")
        columns = ["l", "k", "x_hat", "y_hat"]
        counts = 2
    table = np.vstack(_run_blocks(_urn_block, args, _blocks(args.runs)))
    rows = ([int(v) for v in row[:counts]] + [float(v) for v in row[counts:]] for row in table)
    return columns, rows, {"horizon": args.horizon}


def cmd_selection(args) -> tuple[list[str], list, dict]:
    model = SelectionModel(args.gamma, args.theta)
    if args.eigen:
        _require(args.count >= 1, "--count must be positive")
        sols = eigenpairs(model, args.count, args.basis)
        columns = ["order", "lambda", "mu", "residual", "basis_size"]
        # the spheroidal eigenvalue only exists without mutation
        rows = [
            (s.order, s.eigenvalue, s.spheroidal_eigenvalue if args.theta == 0 else float("nan"), s.residual, s.basis_size)
            for s in sols
        ]
        return columns, rows, {}
    y = _grid(args.grid)
    if args.T is not None:
        spec = BridgeSpec(0.0, 0.0, args.T, args.t, MutationPair(0.0, args.theta), args.gamma)
        return ["y", "density"], zip(y, _on_grid(bridge_selection(spec, args.N), y)), {"N": args.N}
    return ["y", "psi"], zip(y, _on_grid(lambda u: psi_density(model, u), y)), {}


def cmd_validate(args) -> int:
    checks = run_suite(args.suite, quick=args.quick, sampler_draws=args.n)
    failed = [c for c in checks if not c.passed]
    if args.json:
        report = {"suite": args.suite, "quick": args.quick, "version": __version__, "checks": [c.as_dict() for c in checks]}
        print(json.dumps(report, indent=2))
    else:
        for c in checks:
            print(c.line())
        print(f"{len(checks) - len(failed)} passed, {len(failed)} failed")
    return EXIT_NUMERIC if failed else EXIT_OK


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="wfbridge", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def output(sp):
        sp.add_argument("--out", help="CSV path (default: standard output)")

    d = sub.add_parser("density", help="transition density on a y-grid")
    d.add_argument("--x", type=float, required=True)
    d.add_argument("--t", type=float, required=True)
    d.add_argument("--theta1", type=float, default=0.0)
    d.add_argument("--theta2", type=float, default=0.0)
    d.add_argument("--gamma", type=float, default=0.0)
    d.add_argument("--N", type=int, default=40, help="dual lattice level for selection")
    d.add_argument("--method", choices=["mixture", "spectral"], default="mixture")
    d.add_argument("--grid", type=int, default=101)
    output(d)

    b = sub.add_parser("bridge", help="bridge marginal density on a y-grid")
    b.add_argument("--x", type=float, required=True)
    b.add_argument("--z", type=float, required=True)
    b.add_argument("--T", type=float, required=True)
    b.add_argument("--t", type=float, required=True)
    b.add_argument("--theta", type=float, default=0.0, help="mutation rate away from the first allele")
    b.add_argument("--theta1", type=float, default=0.0)
    b.add_argument("--gamma", type=float, default=0.0)
    b.add_argument("--N", type=int, default=40)
    b.add_argument("--grid", type=int, default=201)
    output(b)

    s = sub.add_parser("sample", help="exact draws of a bridge at time t")
    s.add_argument("--x", type=float, default=0.0)
    s.add_argument("--z", type=float, default=0.0)
    s.add_argument("--T", type=float, required=True)
    s.add_argument("--t", type=float, required=True)
    s.add_argument("--theta", type=float, default=0.0)
    s.add_argument("--theta1", type=float, default=0.0)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--workers", type=int, default=1)
    output(s)

    u = sub.add_parser("urn", help="two- or three-urn Monte Carlo")
    u.add_argument("--model", choices=["two", "three"], required=True)
    u.add_argument("--theta1", type=float, required=True)
    u.add_argument("--theta2", type=float, required=True)
    u.add_argument("--t", type=float, required=True)
    u.add_argument("--T", type=float)
    u.add_argument("--x", type=float, help="two-urn model: condition on X = x")
    u.add_argument("--runs", type=int, default=100_000)
    u.add_argument("--horizon", type=int, default=DEFAULT_HORIZON)
    u.add_argument("--seed", type=int, required=True)
    u.add_argument("--workers", type=int, default=1)
    output(u)

    g = sub.add_parser("selection", help="eigenvalues, psi density or selection bridge")
    g.add_argument("--gamma", type=float, required=True)
    g.add_argument("--theta", type=float, default=0.0)
    g.add_argument("--eigen", action="store_true", help="emit the eigenvalue table")
    g.add_argument("--count", type=int, default=1)
    g.add_argument("--basis", type=int, help="fixed basis size (default: grow until the residual target)")
    g.add_argument("--T", type=float, help="bridge horizon; with --t emits the 0-to-0 bridge density")
    g.add_argument("--t", type=float)
    g.add_argument("--N", type=int, default=40)
    g.add_argument("--grid", type=int, default=101)
    output(g)

    v = sub.add_parser("validate", help="run acceptance checks")
    v.add_argument("suite", choices=SUITES)
    v.add_argument("--quick", action="store_true")
    v.add_argument("--json", action="store_true")
    v.add_argument("--n", type=int, help="sampler draws per case")
    return p


COMMANDS = {
    "density": cmd_density,
    "bridge": cmd_bridge,
    "sample": cmd_sample,
    "urn": cmd_urn,
    "selection": cmd_selection,
}

TOLERANCES = {"density": "1e-13", "bridge": "1e-13", "sample": "exact", "urn": "exact", "selection": "1e-8"}


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate(args)
        columns, rows, extra = COMMANDS[args.command](args)
        meta = {"wfbridge": __version__, "command": args.command, "seed": getattr(args, "seed", "none"),
                "tolerance": TOLERANCES[args.command], **extra}
        if args.out:
            with open(args.out, "w", newline="") as fh:
                write_csv(fh, columns, rows, meta)
        else:
            write_csv(sys.stdout, columns, rows, meta)
        return EXIT_OK
    # LinAlgError subclasses ValueError, so numerical failures are matched first
    except (ArithmeticError, RuntimeError, np.linalg.LinAlgError) as exc:
        _fail(EXIT_NUMERIC, type(exc).__name__, str(exc))
    except (ConfigError, UnsupportedBridge, ValueError) as exc:
        _fail(EXIT_CONFIG, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
