"""Command-line front end.

Four subcommands cover the workflow: ``solve`` reports cross sections,
``field`` samples the wavefunction and flux on a plane, ``design`` runs
the two-stage cloak search, ``sweep`` scans the hidden medium of a
finished cloak.  Every run writes CSV/JSON artifacts plus rendered
figures into --out, stamped with the sha256 of the canonical config so
outputs can be traced back to their inputs.  Figures can be skipped with
--no-figures; numeric payloads are byte-identical across reruns.

Exit codes: 0 success, 2 invalid config or usage, 3 degenerate or
numerically untrustworthy solve, 4 design search found nothing, 5
malformed JSON config.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .designer import (EPSILON_DEFAULT, design_cloak, design_result_to_dict,
                       robustness_sweep, sweep_grid_to_dict, write_sweep_csv)
from .errors import (ConfigStructureError, DegenerateInputError,
                     NumericalDegeneracyError, QCloakError, QuadratureError)
from .fields import (export_field_grid, recommended_l_max, streamlines_to_dict,
                     trace_streamlines, write_field_csv, write_field_json)
from .model import (LayerStack, _medium_from_dict, stack_from_dict,
                    stack_to_dict, validate, wavenumber)
from .serialize import config_hash, dump_json, fmt_float
from .solver import cross_section, solve_partial_waves

__all__ = ["main"]

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEGENERATE = 3
EXIT_INFEASIBLE = 4
EXIT_PARSE = 5


class _CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_config(path: str) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as e:
        raise _CliError(EXIT_CONFIG, f"cannot read config {path}: {e}") from None
    except json.JSONDecodeError as e:
        raise _CliError(
            EXIT_PARSE,
            f"config {path}: malformed JSON at byte offset {e.pos}: {e.msg}") from None


def _parse_stack(doc: dict) -> LayerStack:
    stack = stack_from_dict(doc)
    problems = validate(stack)
    if problems:
        raise _CliError(EXIT_CONFIG, "invalid config:\n  " + "\n  ".join(problems))
    return stack


def _require_keys(doc, where: str, required, optional=()) -> None:
    if not isinstance(doc, dict):
        raise ConfigStructureError(f"{where}: expected an object")
    extra = set(doc) - set(required) - set(optional)
    if extra:
        raise ConfigStructureError(f"{where}: unknown keys {sorted(extra)}")
    missing = [k for k in required if k not in doc]
    if missing:
        raise ConfigStructureError(f"{where}: missing keys {missing}")


def _number_list(v, where: str) -> np.ndarray:
    try:
        arr = np.asarray([float(x) for x in v], dtype=float)
    except (TypeError, ValueError):
        raise ConfigStructureError(f"{where}: must be an array of numbers") from None
    if arr.size == 0:
        raise ConfigStructureError(f"{where}: must not be empty")
    return arr


def _bounds_pair(v, where: str) -> tuple[float, float]:
    arr = _number_list(v, where)
    if arr.size != 2 or not arr[0] < arr[1]:
        raise ConfigStructureError(f"{where}: expected [low, high] with low < high")
    return float(arr[0]), float(arr[1])


def _figures(args) -> bool:
    return not args.no_figures


def cmd_solve(args, cfg: dict, cfg_hash: str, outdir: Path) -> int:
    stack = _parse_stack(cfg)
    cs = cross_section(stack)
    sols = solve_partial_waves(stack, cs.l_max_used)
    residuals = [abs(abs(1 + 2 * s.a_scat) - 1.0) for s in sols]
    term_by_l = dict(cs.per_l_terms)
    k0 = wavenumber(stack.energy_ev, stack.background)

    report = {
        "config_sha256": cfg_hash,
        "k0_per_nm": float(k0.real),
        "sigma_nm2": cs.sigma_nm2,
        "sigma_normalized": cs.sigma_normalized,
        "l_max_used": cs.l_max_used,
        "per_l": [{
            "l": l,
            "re_a": s.a_scat.real,
            "im_a": s.a_scat.imag,
            "term": term_by_l[l],
            "unitarity_residual": residuals[l],
        } for l, s in enumerate(sols)],
        "stack": stack_to_dict(stack),
    }
    dump_json(report, outdir / "report.json")
    with open(outdir / "per_l.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# config={cfg_hash}\n")
        fh.write("l,re_a,im_a,term,unitarity_residual\n")
        for l, s in enumerate(sols):
            fh.write(",".join([str(l), fmt_float(s.a_scat.real),
                               fmt_float(s.a_scat.imag),
                               fmt_float(term_by_l[l]),
                               fmt_float(residuals[l])]) + "\n")
    if _figures(args):
        from .plots import per_l_figure
        per_l_figure(cs.per_l_terms, outdir / "per_l.png")

    print(f"sigma_nm2 = {fmt_float(cs.sigma_nm2)}")
    print(f"sigma_normalized = {fmt_float(cs.sigma_normalized)}")
    print(f"l_max_used = {cs.l_max_used}")
    print("l, re_a, im_a, term, unitarity_residual")
    for l, s in enumerate(sols):
        print(", ".join([str(l), fmt_float(s.a_scat.real), fmt_float(s.a_scat.imag),
                         fmt_float(term_by_l[l]), fmt_float(residuals[l])]))
    return EXIT_OK


def cmd_field(args, cfg: dict, cfg_hash: str, outdir: Path) -> int:
    stack = _parse_stack(cfg)
    if args.resolution < 2:
        raise _CliError(EXIT_CONFIG, "--resolution must be >= 2")
    half_width = args.half_width
    if half_width is None:
        half_width = 1.5 * stack.layers[0].outer_radius_nm
    if not half_width > 0:
        raise _CliError(EXIT_CONFIG, "--half-width must be > 0")

    l_max = recommended_l_max(stack, math.hypot(half_width, half_width))
    sols = solve_partial_waves(stack, l_max)
    grid = export_field_grid(stack, sols, plane=args.plane,
                             half_width=half_width, resolution=args.resolution)
    write_field_csv(grid, outdir / "field.csv", header_comment=f"config={cfg_hash}")
    write_field_json(grid, outdir / "field.json", extra={"config_sha256": cfg_hash})

    seeds = [(float(u), float(grid.v[0]))
             for u in np.linspace(-0.9 * half_width, 0.9 * half_width, 15)]
    lines = trace_streamlines(grid, seeds)
    dump_json({**streamlines_to_dict(grid, lines), "config_sha256": cfg_hash},
              outdir / "streamlines.json")
    if _figures(args):
        from .plots import amplitude_figure, flux_figure
        amplitude_figure(grid, outdir / "amplitude.png")
        flux_figure(grid, outdir / "flux.png", lines)

    inner_region = len(stack.layers)
    mask = grid.region == inner_region
    if mask.any():
        core_max = float((np.abs(grid.psi[mask]) ** 2).max())
        r_inner = stack.layers[-1].outer_radius_nm
        print(f"max |psi|^2 for r < {fmt_float(r_inner)} nm = {fmt_float(core_max)}")
    else:
        print("innermost region not sampled at this resolution")
    return EXIT_OK


def cmd_design(args, cfg: dict, cfg_hash: str, outdir: Path) -> int:
    _require_keys(cfg, "design config",
                  required=("energy_eV", "background", "outer_radius_nm",
                            "core_radius_nm", "shell", "core"),
                  optional=("epsilon", "max_attempts"))
    background = _medium_from_dict(cfg["background"], "background")
    _require_keys(cfg["shell"], "shell", ("mass_values", "potential_values"))
    _require_keys(cfg["core"], "core", ("mass_bounds", "potential_bounds"))
    max_attempts = cfg.get("max_attempts")
    if max_attempts is not None and (not isinstance(max_attempts, int) or max_attempts < 1):
        raise ConfigStructureError("max_attempts: must be a positive integer")

    result = design_cloak(
        background=background,
        energy_ev=float(cfg["energy_eV"]),
        outer_radius_nm=float(cfg["outer_radius_nm"]),
        core_radius_nm=float(cfg["core_radius_nm"]),
        shell_mass_values=_number_list(cfg["shell"]["mass_values"], "shell.mass_values"),
        shell_potential_values=_number_list(cfg["shell"]["potential_values"],
                                            "shell.potential_values"),
        core_mass_bounds=_bounds_pair(cfg["core"]["mass_bounds"], "core.mass_bounds"),
        core_potential_bounds=_bounds_pair(cfg["core"]["potential_bounds"],
                                           "core.potential_bounds"),
        epsilon=float(cfg.get("epsilon", EPSILON_DEFAULT)),
        max_attempts=max_attempts,
        threads=args.threads,
    )
    dump_json({**design_result_to_dict(result), "config_sha256": cfg_hash},
              outdir / "design.json")
    write_sweep_csv(result.shell_grid, outdir / "shell_grid.csv",
                    header_comment=f"config={cfg_hash}")
    if _figures(args):
        from .plots import feasibility_figure, sweep_figure
        feasibility_figure(result.shell_grid, outdir / "shell_feasibility.png")
        sweep_figure(result.shell_grid, outdir / "shell_objective.png")

    if result.point is None:
        hist = ", ".join(f"{k}: {v}" for k, v in sorted(result.reason_histogram.items()))
        print(f"no feasible design ({hist or 'no cells evaluated'})")
        return EXIT_INFEASIBLE
    p = result.point
    print(f"shell: mass_me = {fmt_float(p.shell.mass_me)}, "
          f"potential_eV = {fmt_float(p.shell.potential_ev)}")
    print(f"core: mass_me = {fmt_float(p.core.mass_me)}, "
          f"potential_eV = {fmt_float(p.core.potential_ev)}")
    print(f"sigma_normalized = {fmt_float(p.sigma_normalized)}")
    print(f"flux_fraction = {fmt_float(p.flux_fraction)}")
    print(f"nodal_radius_nm = {fmt_float(p.r_n_nm)}")
    return EXIT_OK


def cmd_sweep(args, cfg: dict, cfg_hash: str, outdir: Path) -> int:
    _require_keys(cfg, "sweep config", ("stack", "hidden"))
    stack = _parse_stack(cfg["stack"])
    _require_keys(cfg["hidden"], "hidden", ("mass_values", "potential_values"))
    grid = robustness_sweep(
        stack,
        _number_list(cfg["hidden"]["mass_values"], "hidden.mass_values"),
        _number_list(cfg["hidden"]["potential_values"], "hidden.potential_values"),
        threads=args.threads,
    )
    dump_json({**sweep_grid_to_dict(grid), "config_sha256": cfg_hash},
              outdir / "sweep.json")
    write_sweep_csv(grid, outdir / "sweep.csv", header_comment=f"config={cfg_hash}")
    if _figures(args):
        from .plots import sweep_figure
        sweep_figure(grid, outdir / "sweep.png")

    objectives = np.asarray([c.objective for c in grid.cells if c.feasible])
    print(f"cells = {len(grid.cells)}, feasible = {objectives.size}")
    if objectives.size:
        spread = float((objectives.max() - objectives.min()) / objectives.mean())
        print(f"sigma_normalized spread = {fmt_float(spread)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qcloak",
        description="Matter-wave scattering and cloak design for layered "
                    "effective-mass nanoparticles.")
    parser.add_argument("--version", action="version", version=f"qcloak {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads for grid scans (0 = all cores; "
                            "default from QCLOAK_THREADS, else 1)")
        p.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")

    p = sub.add_parser("solve", help="cross-section report for a layer stack")
    common(p)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("field", help="sample wavefunction and flux on a plane")
    common(p)
    p.add_argument("--plane", default="x=0", help="plane spec, e.g. x=0 or z=0.5")
    p.add_argument("--resolution", type=int, default=201,
                   help="samples per axis (>= 2)")
    p.add_argument("--half-width", type=float, default=None,
                   help="half-width of the sampled square in nm "
                        "(default 1.5 * outer radius)")
    p.set_defaults(func=cmd_field)

    p = sub.add_parser("design", help="two-stage cloak parameter search")
    common(p)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("sweep", help="hidden-medium robustness sweep")
    common(p)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    t0 = time.perf_counter()
    try:
        cfg = _load_config(args.config)
        cfg_hash = config_hash(cfg)
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        code = args.func(args, cfg, cfg_hash, outdir)
    except _CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except ConfigStructureError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (DegenerateInputError, NumericalDegeneracyError, QuadratureError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except QCloakError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    # wall time varies run to run, so the manifest is not part of the
    # byte-identical payload guarantee
    dump_json({
        "command": args.command,
        "config_path": str(args.config),
        "out_dir": str(outdir),
        "config_sha256": cfg_hash,
        "version": __version__,
        "wall_time_s": time.perf_counter() - t0,
    }, outdir / "manifest.json")
    return code


if __name__ == "__main__":
    sys.exit(main())
