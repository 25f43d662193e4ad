"""Command-line interface: ``pilotbox <subcommand> [flags]``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical or
runtime failure. Without ``--out`` the summary JSON goes to stdout; with
``--out`` the data goes to that file (CSV additionally gets a
``<out>.summary.json`` sidecar).
"""

from __future__ import annotations

import argparse
import json
import math
import re
import sys
from pathlib import Path

import numpy as np

from . import units
from .errors import ConfigurationError, DomainError, EnsembleError, NumericalError, PilotBoxError
from .evolve import EvolutionPlan, beat_period, energy_expectation, evolve
from .pilot import polar_decompose, quantum_potential
from .traject import VelocityTable, equivariance_test, run_ensemble
from .well import (
    Grid1D,
    WaveFunction,
    WellSpec,
    eigenenergy,
    eigenstate,
    paper_mode_to_standard,
    superpose,
)


class UsageError(PilotBoxError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ---------------------------------------------------------------- output


def format_number(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


def write_csv(path, columns):
    """Write equal-length columns (an ordered mapping) as CSV."""
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    lines = [",".join(names)]
    for row in zip(*data):
        lines.append(",".join(format_number(v) for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def dump_json(obj):
    return json.dumps(_jsonable(obj), indent=2, allow_nan=False) + "\n"


def emit(args, summary, columns=None, extra_files=None):
    """Write results according to ``--out``/``--format``."""
    if args.out is None:
        sys.stdout.write(dump_json(summary))
        return
    out = Path(args.out)
    if args.format == "json":
        doc = {"summary": summary}
        if columns is not None:
            doc["columns"] = columns
        if extra_files:
            doc.update(extra_files)
        out.write_text(dump_json(doc))
        return
    if columns is not None:
        write_csv(out, columns)
    for path, cols in (extra_files or {}).items():
        write_csv(path, cols)
    Path(str(out) + ".summary.json").write_text(dump_json(summary))


# ---------------------------------------------------------------- parsing helpers

_TERM = re.compile(r"^\s*(\d+)\s*:\s*([-+0-9.eE]+)\s*,\s*([-+0-9.eE]+)\s*$")


def parse_terms(text):
    """``"m1:re,im;m2:re,im"`` -> ``[(complex, mode), ...]``."""
    terms = []
    for chunk in filter(None, (c.strip() for c in text.split(";"))):
        m = _TERM.match(chunk)
        if not m:
            raise UsageError(f"cannot parse term {chunk!r}; expected 'mode:re,im'")
        terms.append((complex(float(m.group(2)), float(m.group(3))), int(m.group(1))))
    if not terms:
        raise UsageError("--terms is empty")
    return terms


def parse_time(text, tau):
    """A time given as a number, ``tau``, ``<f>tau`` or ``tau/<f>``."""
    s = str(text).strip().replace(" ", "")
    if "tau" not in s:
        return float(s)
    if tau is None:
        raise UsageError(f"time {text!r} uses tau but the state has a single mode")
    if s == "tau":
        return tau
    if s.startswith("tau/"):
        return tau / float(s[4:])
    if s.endswith("*tau"):
        return float(s[:-4]) * tau
    if s.endswith("tau"):
        return float(s[:-3]) * tau
    raise UsageError(f"cannot parse time {text!r}")


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


# ---------------------------------------------------------------- commands


def _spec(args):
    return WellSpec(args.length, args.mass, args.hbar)


def _mode(args):
    if args.paper_n is not None:
        if args.mode is not None:
            raise UsageError("give either --mode or --paper-n, not both")
        return paper_mode_to_standard(args.paper_n)
    return 1 if args.mode is None else args.mode


def _interior_zeros(values):
    """Count of sign changes / exact zeros of a real field strictly inside."""
    v = np.real(values[1:-1])
    exact = int(np.count_nonzero(np.abs(v) <= 1e-14 * np.abs(v).max()))
    nz = v[np.abs(v) > 1e-14 * np.abs(v).max()]
    return exact + int(np.count_nonzero(np.signbit(nz[1:]) != np.signbit(nz[:-1])))


def cmd_eigenstate(args):
    spec = _spec(args)
    mode = _mode(args)
    psi = eigenstate(spec, mode, Grid1D.for_spec(spec, args.points))
    rho = psi.density
    summary = {
        "command": "eigenstate",
        "mode": mode,
        "energy": eigenenergy(spec, mode),
        "points": args.points,
        "norm": psi.norm(),
        "interior_zeros": _interior_zeros(psi.values),
        "max_symmetry_defect": float(np.max(np.abs(rho - rho[::-1]))),
    }
    columns = {"x": psi.x, "re": psi.values.real, "im": psi.values.imag, "density": rho}
    emit(args, summary, columns)


def cmd_qpotential(args):
    spec = _spec(args)
    grid = Grid1D.for_spec(spec, args.points)
    if args.synthetic_uniform:
        psi = WaveFunction(grid, np.ones(grid.n_points), spec)
        mode, energy = None, 0.0
    else:
        mode = _mode(args)
        psi = eigenstate(spec, mode, grid)
        energy = eigenenergy(spec, mode)
    qf = quantum_potential(psi)
    polar = polar_decompose(psi)
    keep = qf.valid_mask
    Q = qf.Q[keep]
    rel = np.abs(Q - energy) / energy if energy else np.abs(Q)
    summary = {
        "command": "qpotential",
        "mode": mode,
        "synthetic_uniform": bool(args.synthetic_uniform),
        "energy": energy,
        "points": args.points,
        "valid_nodes": int(keep.sum()),
        "masked_fraction": qf.masked_fraction,
        "max_rel_err": float(rel.max()),
    }
    columns = {
        "x": grid.positions[keep],
        "R": polar.R[keep],
        "Q": Q,
        "E_m": np.full(Q.size, energy),
        "rel_err": rel,
    }
    emit(args, summary, columns)


def _initial_state(args):
    spec = _spec(args)
    terms = parse_terms(args.terms)
    psi0 = superpose(terms, spec, Grid1D.for_spec(spec, args.points))
    modes = [m for _, m in terms]
    tau = beat_period(spec, modes[0], modes[1]) if len(modes) > 1 else None
    return psi0, terms, tau


def _plan(args, tau, default_stride):
    t_final = parse_time(args.t_final, tau)
    if args.steps is not None:
        if not t_final > 0:
            raise DomainError(f"t-final must be positive, got {t_final}")
        dt, n = t_final / args.steps, args.steps
    else:
        probe = EvolutionPlan.covering(t_final, args.dt)
        dt, n = probe.dt, probe.n_steps
    stride = default_stride(n) if args.stride is None else args.stride
    return EvolutionPlan(dt, n, min(stride, n))


def cmd_evolve(args):
    psi0, terms, tau = _initial_state(args)
    plan = _plan(args, tau, lambda n: max(1, n // 20))
    frames = evolve(psi0, plan)
    norms = frames.norms()
    dens = frames.densities()
    dx = psi0.grid.dx
    l2 = math.sqrt(dx * float(np.sum((dens[-1] - dens[0]) ** 2)))
    summary = {
        "command": "evolve",
        "terms": [[m, c.real, c.imag] for c, m in terms],
        "beat_period": tau,
        "dt": plan.dt,
        "steps": plan.n_steps,
        "frames": len(frames),
        "t_final": float(frames.times[-1]),
        "max_norm_drift": float(np.max(np.abs(norms - norms[0]))),
        "energy_initial": energy_expectation(frames[0]),
        "energy_final": energy_expectation(frames[len(frames) - 1]),
        "density_l2_first_last": l2,
        "max_density_diff_first_last": float(np.max(np.abs(dens[-1] - dens[0]))),
    }
    if args.out is None:
        emit(args, summary)
        return
    out = Path(args.out)
    if args.format == "json":
        doc = {
            "summary": summary,
            "x": psi0.x,
            "times": frames.times,
            "norms": norms,
            "frames": [{"re": v.real, "im": v.imag} for v in frames.values],
        }
        out.write_text(dump_json(doc))
        return
    stem = out.with_suffix("")
    paths = []
    for k, values in enumerate(frames.values):
        path = Path(f"{stem}.frame{k:05d}.csv")
        write_csv(path, {"x": psi0.x, "re": values.real, "im": values.imag, "density": np.abs(values) ** 2})
        paths.append(path.name)
    write_csv(out, {"frame": np.arange(len(frames)), "t": frames.times, "norm": norms})
    Path(str(out) + ".summary.json").write_text(dump_json({**summary, "frame_files": paths}))


def _ensemble(args, record_all):
    psi0, terms, tau = _initial_state(args)
    plan = _plan(args, tau, lambda n: min(10, n))
    frames = evolve(psi0, plan)
    dt_traj = args.dt_traj if args.dt_traj is not None else plan.dt * plan.frame_stride
    ks_times = [parse_time(t, tau) for t in args.ks_times.split(",") if t.strip()]
    table = VelocityTable.from_frames(frames)
    ens = run_ensemble(
        psi0, table, args.count, args.seed, dt_traj,
        record_stride=args.record_every if record_all else None,
        record_times=ks_times,
    )
    ks = [equivariance_test(ens, frames, t) for t in ks_times]
    summary = {
        "command": args.command,
        "terms": [[m, c.real, c.imag] for c, m in terms],
        "beat_period": tau,
        "count": args.count,
        "seed": args.seed,
        "dt": plan.dt,
        "steps": plan.n_steps,
        "dt_traj": dt_traj,
        "t_final": float(frames.times[-1]),
        "max_displacement": ens.max_displacement(),
        "order_preserved": ens.order_preserved(),
        "ks": [
            {"t": r.time, "statistic": r.statistic, "sampling_bound": 1.63 / math.sqrt(r.sample_count)}
            for r in ks
        ],
    }
    return ens, summary


def cmd_trajectories(args):
    ens, summary = _ensemble(args, record_all=True)
    n_t, n_p = ens.positions.shape
    columns = {
        "particle_id": np.repeat(np.arange(n_p), n_t),
        "t": np.tile(ens.times, n_p),
        "x": ens.positions.T.reshape(-1),
    }
    emit(args, summary, columns)


def cmd_equivariance(args):
    _, summary = _ensemble(args, record_all=False)
    columns = {
        "t": [r["t"] for r in summary["ks"]],
        "statistic": [r["statistic"] for r in summary["ks"]],
        "sampling_bound": [r["sampling_bound"] for r in summary["ks"]],
    }
    emit(args, summary, columns)


def cmd_quark(args):
    report = units.quark_report(args.radius, args.current_mass, args.constituent_mass)
    summary = {"command": "quark", **report.to_dict()}
    if args.out is None:
        emit(args, summary)
    else:
        Path(args.out).write_text(dump_json(summary))


# ---------------------------------------------------------------- parser


def _add_output(p):
    p.add_argument("--out", help="output file (default: summary JSON on stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--config", help="JSON file of flag values; explicit flags win")


def _add_well(p, points=8192):
    p.add_argument("--length", type=float, default=1.0)
    p.add_argument("--mass", type=float, default=1.0)
    p.add_argument("--hbar", type=float, default=1.0)
    p.add_argument("--points", type=int, default=points)


def _add_mode(p):
    p.add_argument("--mode", type=int, help="standard mode index m >= 1")
    p.add_argument("--paper-n", type=int, help="state sin(2 pi n x / L), i.e. mode 2n")


def _add_evolution(p, t_final="1.0"):
    p.add_argument("--terms", default="1:1,0", help='superposition "m1:re,im;m2:re,im"')
    p.add_argument("--dt", type=float, default=1e-4, help="largest time step")
    p.add_argument("--steps", type=_positive_int, help="exact step count (dt = t-final/steps)")
    p.add_argument("--t-final", default=t_final, help="end time: number, tau, 0.25tau, tau/4")
    p.add_argument("--stride", type=_positive_int, help="store every k-th frame")


def _add_ensemble(p, ks_times):
    p.add_argument("--count", type=_positive_int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt-traj", type=float, help="trajectory step (default: frame spacing)")
    p.add_argument("--ks-times", default=ks_times, help="comma-separated KS evaluation times")


def build_parser():
    parser = _Parser(prog="pilotbox", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("eigenstate", help="write one eigenstate")
    _add_well(p)
    _add_mode(p)
    _add_output(p)
    p.set_defaults(func=cmd_eigenstate)

    p = sub.add_parser("qpotential", help="quantum potential of an eigenstate vs its energy")
    _add_well(p)
    _add_mode(p)
    p.add_argument("--synthetic-uniform", action="store_true", help="use a uniform-amplitude field")
    _add_output(p)
    p.set_defaults(func=cmd_qpotential)

    p = sub.add_parser("evolve", help="Crank-Nicolson evolution of a superposition")
    _add_well(p, points=1025)
    _add_evolution(p)
    _add_output(p)
    p.set_defaults(func=cmd_evolve)

    p = sub.add_parser("trajectories", help="Bohmian ensemble, one row per particle and time")
    _add_well(p, points=1025)
    _add_evolution(p)
    _add_ensemble(p, ks_times="0")
    p.add_argument("--record-every", type=_positive_int, default=1, help="record every k-th step")
    _add_output(p)
    p.set_defaults(func=cmd_trajectories)

    p = sub.add_parser("equivariance", help="KS distance of an ensemble from |psi|^2")
    _add_well(p, points=1025)
    _add_evolution(p)
    _add_ensemble(p, ks_times="0")
    _add_output(p)
    p.set_defaults(func=cmd_equivariance)

    p = sub.add_parser("quark", help="confinement momentum and quark speeds")
    p.add_argument("--radius", type=float, default=units.DEFAULT_RADIUS_FM, help="fm")
    p.add_argument("--current-mass", type=float, default=units.DEFAULT_CURRENT_MASS_MEV, help="MeV")
    p.add_argument("--constituent-mass", type=float, default=units.DEFAULT_CONSTITUENT_MASS_MEV, help="MeV")
    _add_output(p)
    p.set_defaults(func=cmd_quark)
    return parser


def _subparser(parser, name):
    for action in parser._subparsers._group_actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _apply_config(parser, argv, args):
    """Re-parse with values from ``--config`` as defaults under explicit flags."""
    try:
        config = json.loads(Path(args.config).read_text())
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read config {args.config}: {exc}") from None
    if not isinstance(config, dict):
        raise ConfigurationError("config file must hold a JSON object")
    sub = _subparser(parser, args.command)
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest not in actions:
            raise ConfigurationError(f"unknown config key {key!r} for '{args.command}'")
        action = actions[dest]
        if isinstance(action, argparse._StoreTrueAction):
            if not isinstance(value, bool):
                raise ConfigurationError(f"config key {key!r} must be true or false")
        elif value is not None and action.type is not None:
            try:
                value = action.type(str(value))
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise ConfigurationError(f"config key {key!r}: {exc}") from None
        if action.choices is not None and value not in action.choices:
            raise ConfigurationError(f"config key {key!r} must be one of {list(action.choices)}")
        defaults[dest] = value
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "config", None):
            args = _apply_config(parser, argv, args)
        args.func(args)
    except (UsageError, DomainError, ConfigurationError) as exc:
        print(f"pilotbox: error: {exc}", file=sys.stderr)
        return 1
    except EnsembleError as exc:
        print(f"pilotbox: integration failed: {exc}", file=sys.stderr)
        return 2
    except (NumericalError, ArithmeticError) as exc:
        print(f"pilotbox: numerical failure: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pilotbox: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
