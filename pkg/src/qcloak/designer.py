"""Two-stage cloak design and parameter sweeps.

Stage one scans shell parameters for cells that support total internal
reflection (a common nodal point of the l = 0 and l = 1 shell radial
functions just inside the core boundary) while keeping the flux loss
through the equatorial shell annulus at most epsilon.  Stage two tunes
core parameters to cancel the dominant scattering amplitudes, then
rechecks every condition with the exact solver.  The flux condition is a
bound, F >= 1 - epsilon: epsilon measures the tolerated loss, and the
exact solution of a well-designed cloak concentrates slightly more than
the disc-equivalent flux into the shell (F a little above 1).
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize

from .errors import QCloakError
from .fields import find_nodal_point, flux_through_shell_annulus
from .model import Layer, LayerStack, Medium, wavenumber
from .serialize import config_hash, fmt_float
from .solver import (cross_section, shell_coefficients_approx,
                     solve_partial_wave, solve_partial_waves)
from .specfun import legendre_p_family

__all__ = [
    "EPSILON_DEFAULT",
    "ACCEPT_OBJECTIVE",
    "SHELL_L_MAX",
    "SweepAxis",
    "SweepCell",
    "SweepGrid",
    "DesignPoint",
    "DesignAttempt",
    "DesignResult",
    "feasible_shell_set",
    "match_core_parameters",
    "design_cloak",
    "robustness_sweep",
    "design_point_to_dict",
    "sweep_grid_to_dict",
    "design_result_to_dict",
    "write_sweep_csv",
]

EPSILON_DEFAULT = 0.05
ACCEPT_OBJECTIVE = 1e-4       # on max(|a_0|, |a_1|)
SIGMA_ACCEPT = 1e-3           # residual sigma_normalized allowed after cancellation
SHELL_L_MAX = 8               # partial waves in the shell-stage flux estimate
NODAL_MATCH_TOL = 0.02        # |r_n(0) - r_n(1)| <= this * a_c
_NODAL_SAMPLES = 1024
_FLUX_NODES = 64
_Z_GUARD = 500.0              # |k r| cap for the unscaled fast path


def _resolve_threads(threads: int | None) -> int:
    if threads is None:
        try:
            threads = int(os.environ.get("QCLOAK_THREADS", "1"))
        except ValueError:
            threads = 1
    if threads == 0:
        return os.cpu_count() or 1
    if threads < 0:
        raise ValueError("threads must be >= 0")
    return threads


def _map_ordered(fn, items, threads: int | None):
    n = _resolve_threads(threads)
    if n <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# vectorized shell-stage basis rows (l small, |z| moderate: no scaling needed)

def _j_rows(lmax: int, z: np.ndarray) -> np.ndarray:
    zmax = float(np.max(np.abs(z)))
    nstart = lmax + int(zmax) + 16
    rows = np.empty((lmax + 1, z.size), dtype=np.complex128)
    fp = np.zeros(z.size, dtype=np.complex128)
    f = np.full(z.size, 1e-30, dtype=np.complex128)
    for l in range(nstart, 0, -1):
        if l <= lmax:
            rows[l] = f
        fp, f = f, (2 * l + 1) / z * f - fp
    rows[0] = f
    rows *= np.sin(z) / z / f
    return rows


def _h_rows(lmax: int, z: np.ndarray) -> np.ndarray:
    rows = np.empty((lmax + 1, z.size), dtype=np.complex128)
    eiz = np.exp(1j * z)
    rows[0] = -1j * eiz / z
    if lmax >= 1:
        rows[1] = eiz * (-z - 1j) / (z * z)
    for l in range(1, lmax):
        rows[l + 1] = (2 * l + 1) / z * rows[l] - rows[l - 1]
    return rows


# ---------------------------------------------------------------------------
# result containers

@dataclass(frozen=True)
class SweepAxis:
    name: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class SweepCell:
    ix: int
    iy: int
    x: float
    y: float
    objective: float | None
    feasible: bool
    reasons: tuple[str, ...] = ()
    diagnostics: dict | None = None


@dataclass(frozen=True)
class SweepGrid:
    """Row-major rectangular sweep (first axis outermost)."""

    axes: tuple[SweepAxis, SweepAxis]
    cells: tuple[SweepCell, ...]
    provenance: str

    def cell(self, ix: int, iy: int) -> SweepCell:
        return self.cells[ix * len(self.axes[1].values) + iy]

    def feasible_cells(self) -> tuple[SweepCell, ...]:
        return tuple(c for c in self.cells if c.feasible)


@dataclass(frozen=True)
class DesignPoint:
    shell: Medium | None
    core: Medium | None
    r_n_nm: float | None
    flux_fraction: float | None
    sigma_normalized: float | None
    max_a01: float | None
    feasible: bool
    reasons: tuple[str, ...] = ()


@dataclass(frozen=True)
class DesignAttempt:
    ix: int
    iy: int
    point: DesignPoint


@dataclass(frozen=True)
class DesignResult:
    point: DesignPoint | None
    shell_grid: SweepGrid
    attempts: tuple[DesignAttempt, ...]
    reason_histogram: dict


# ---------------------------------------------------------------------------
# stage one: shell feasibility

def _nodal_radius(rgrid: np.ndarray, fvals: np.ndarray, rho) -> float | None:
    """Zero of the radial function nearest the end of rgrid, or None."""
    mags = np.abs(fvals)
    peak = float(mags.max())
    if peak == 0.0:
        return None
    ref = complex(fvals[int(mags.argmax())]).conjugate()
    proj = (fvals * ref).real

    def s(r: float) -> float:
        return (rho(r) * ref).real

    roots = []
    for i in range(rgrid.size - 1):
        if proj[i] == 0.0:
            roots.append(float(rgrid[i]))
        elif proj[i] * proj[i + 1] < 0.0:
            roots.append(brentq(s, rgrid[i], rgrid[i + 1], xtol=1e-13))
    if proj[-1] == 0.0:
        roots.append(float(rgrid[-1]))
    roots = [r for r in roots if abs(rho(r)) <= 1e-6 * peak]
    return max(roots) if roots else None


def _shell_cell(background: Medium, energy_ev: float, a: float, a_c: float,
                epsilon: float, ix: int, iy: int, ms: float, vs: float,
                rl_nodes, gl_r, gl_w, p0, dp0) -> SweepCell:
    try:
        shell = Medium(ms, vs)
        stack = LayerStack(background=background, energy_ev=energy_ev,
                           layers=(Layer(shell, a), Layer(shell, a_c)))
        ks = wavenumber(energy_ev, shell)
        k0 = wavenumber(energy_ev, background).real
        coeffs = [shell_coefficients_approx(l, stack) for l in range(SHELL_L_MAX + 1)]
        z_all = ks * np.concatenate([rl_nodes, gl_r])
        if float(np.max(np.abs(z_all))) > _Z_GUARD:
            return SweepCell(ix, iy, ms, vs, None, False, ("error:overflow-guard",))
        jr = _j_rows(SHELL_L_MAX, z_all)
        hr = _h_rows(SHELL_L_MAX, z_all)
        nn = rl_nodes.size
        f_nodal = [coeffs[l][0] * jr[l, :nn] + coeffs[l][1] * hr[l, :nn] for l in range(2)]
        f_flux = [coeffs[l][0] * jr[l, nn:] + coeffs[l][1] * hr[l, nn:]
                  for l in range(SHELL_L_MAX + 1)]

        def rho_fn(l):
            b, c = coeffs[l]
            def rho(r: float) -> complex:
                z = np.array([ks * r])
                return complex(b * _j_rows(l, z)[l, 0] + c * _h_rows(l, z)[l, 0])
            return rho

        r0 = _nodal_radius(rl_nodes, f_nodal[0], rho_fn(0))
        r1 = _nodal_radius(rl_nodes, f_nodal[1], rho_fn(1))
        common = None
        if r0 is not None and r1 is not None and abs(r0 - r1) <= NODAL_MATCH_TOL * a_c:
            common = 0.5 * (r0 + r1)

        psi = np.zeros(gl_r.size, dtype=np.complex128)
        dth = np.zeros(gl_r.size, dtype=np.complex128)
        for l in range(SHELL_L_MAX + 1):
            pref = (1j ** l) * (2 * l + 1)
            psi += pref * p0[l] * f_flux[l]
            dth -= pref * dp0[l] * f_flux[l]
        scale = background.mass_me / (k0 * ms)
        jz = -scale * (np.conj(psi) * dth / gl_r).imag
        flux_fraction = float(2.0 / (a * a) * np.sum(gl_w * jz * gl_r))

        reasons = []
        if common is None or not common < a_c:
            reasons.append("no-common-nodal-point")
        if not flux_fraction >= 1.0 - epsilon:
            reasons.append("flux-below-bound")
        diag = {"flux_fraction": flux_fraction, "r_n_l0_nm": r0, "r_n_l1_nm": r1,
                "common_nodal_radius_nm": common}
        return SweepCell(ix, iy, ms, vs, abs(flux_fraction - (1.0 - epsilon)),
                         not reasons, tuple(reasons), diag)
    except QCloakError as exc:
        return SweepCell(ix, iy, ms, vs, None, False, (f"error:{type(exc).__name__}",))


def feasible_shell_set(background: Medium, energy_ev: float, outer_radius_nm: float,
                       core_radius_nm: float, mass_values, potential_values,
                       epsilon: float = EPSILON_DEFAULT, *,
                       threads: int | None = None) -> SweepGrid:
    """Mark shell parameter cells that pass the nodal and flux conditions.

    Cells are evaluated with the no-scattering shell coefficients; the
    recorded objective is the distance |F - (1-epsilon)|.  Every cell goes
    through the same physics, so a V_s > 0 (barrier) region simply yields
    no feasible cells rather than being rejected up front.
    """
    if not 0 < epsilon <= 0.2:
        raise ValueError("epsilon must lie in (0, 0.2]")
    mass_values = tuple(float(v) for v in mass_values)
    potential_values = tuple(float(v) for v in potential_values)
    if not mass_values or not potential_values:
        raise ValueError("empty shell parameter grid")
    if not 0 < core_radius_nm < outer_radius_nm:
        raise ValueError("radii must satisfy 0 < core < outer")

    a, a_c = outer_radius_nm, core_radius_nm
    rl_nodes = np.linspace(0.2 * a_c, a_c, _NODAL_SAMPLES)
    nodes, weights = np.polynomial.legendre.leggauss(_FLUX_NODES)
    gl_r = 0.5 * (a - a_c) * (nodes + 1.0) + a_c
    gl_w = 0.5 * (a - a_c) * weights
    p0, dp0 = legendre_p_family(SHELL_L_MAX, 0.0)

    tasks = [(ix, iy, ms, vs)
             for ix, ms in enumerate(mass_values)
             for iy, vs in enumerate(potential_values)]
    cells = _map_ordered(
        lambda t: _shell_cell(background, energy_ev, a, a_c, epsilon,
                              t[0], t[1], t[2], t[3], rl_nodes, gl_r, gl_w, p0, dp0),
        tasks, threads)
    prov = config_hash({
        "op": "feasible_shell_set", "energy_eV": energy_ev,
        "background": {"mass_me": background.mass_me, "potential_eV": background.potential_ev},
        "outer_radius_nm": a, "core_radius_nm": a_c, "epsilon": epsilon,
        "mass_values": list(mass_values), "potential_values": list(potential_values)})
    return SweepGrid(axes=(SweepAxis("shell_mass_me", mass_values),
                           SweepAxis("shell_potential_eV", potential_values)),
                     cells=tuple(cells), provenance=prov)


# ---------------------------------------------------------------------------
# stage two: core cancellation

def _scattering_objective(stack: LayerStack) -> float:
    amps = [solve_partial_wave(l, stack).a_scat for l in (0, 1)]
    return max(abs(a) for a in amps)


def match_core_parameters(shell: Medium, background: Medium, energy_ev: float,
                          outer_radius_nm: float, core_radius_nm: float,
                          mass_bounds: tuple[float, float],
                          potential_bounds: tuple[float, float],
                          epsilon: float = EPSILON_DEFAULT, *,
                          coarse: tuple[int, int] = (48, 48),
                          accept: float = ACCEPT_OBJECTIVE,
                          param_tol: float = 1e-6) -> DesignPoint:
    """Tune (m_c, V_c) to cancel the l = 0 and l = 1 scattering amplitudes.

    Coarse grid seeding followed by bounded Nelder-Mead; an accepted point
    must reach the objective threshold and then survive a full-solver
    recheck of the flux bound, the nodal condition on the exact shell
    coefficients, and the l >= 2 tail.
    """
    a, a_c = outer_radius_nm, core_radius_nm
    mlo, mhi = map(float, mass_bounds)
    vlo, vhi = map(float, potential_bounds)
    if not (mlo < mhi and vlo < vhi):
        raise ValueError("search box must have positive extent")

    def objective(x) -> float:
        mc, vc = float(x[0]), float(x[1])
        try:
            stack = LayerStack(background=background, energy_ev=energy_ev,
                               layers=(Layer(shell, a), Layer(Medium(mc, vc), a_c)))
            return _scattering_objective(stack)
        except QCloakError:
            return 1e6

    best = (math.inf, mlo, vlo)
    for mc in np.linspace(mlo, mhi, coarse[0]):
        for vc in np.linspace(vlo, vhi, coarse[1]):
            val = objective((mc, vc))
            if val < best[0]:
                best = (val, float(mc), float(vc))

    res = minimize(objective, x0=np.array(best[1:]), method="Nelder-Mead",
                   bounds=[(mlo, mhi), (vlo, vhi)],
                   options={"xatol": param_tol, "fatol": 1e-30, "maxiter": 600})
    obj = float(res.fun)
    mc, vc = (float(res.x[0]), float(res.x[1])) if obj <= best[0] else best[1:]
    obj = min(obj, best[0])
    core = Medium(mc, vc)

    reasons = []
    if not obj <= accept:
        reasons.append("objective-above-threshold")
        return DesignPoint(shell=shell, core=core, r_n_nm=None, flux_fraction=None,
                           sigma_normalized=None, max_a01=obj, feasible=False,
                           reasons=tuple(reasons))

    stack = LayerStack(background=background, energy_ev=energy_ev,
                       layers=(Layer(shell, a), Layer(core, a_c)))
    # the l >= 2 amplitudes are untouched by the design, so the residual
    # cross section is the honest tail measure
    cs = cross_section(stack)
    exact_coeffs = {}
    for l in range(3):
        lc = solve_partial_wave(l, stack).layer_coeffs[0]
        exact_coeffs[l] = (lc.inward_value, lc.outward_value)
    report = find_nodal_point(stack, exact_coeffs, match_tol=NODAL_MATCH_TOL)
    flux_fraction = flux_through_shell_annulus(
        stack, solve_partial_waves(stack, SHELL_L_MAX))

    if not flux_fraction >= 1.0 - epsilon:
        reasons.append("recheck-flux")
    if report.common_radius is None or not report.common_radius < a_c:
        reasons.append("recheck-nodal")
    if not cs.sigma_normalized <= SIGMA_ACCEPT:
        reasons.append("recheck-sigma")
    return DesignPoint(shell=shell, core=core, r_n_nm=report.common_radius,
                       flux_fraction=flux_fraction, sigma_normalized=cs.sigma_normalized,
                       max_a01=obj, feasible=not reasons, reasons=tuple(reasons))


def design_cloak(background: Medium, energy_ev: float, outer_radius_nm: float,
                 core_radius_nm: float, shell_mass_values, shell_potential_values,
                 core_mass_bounds, core_potential_bounds,
                 epsilon: float = EPSILON_DEFAULT, *,
                 accept: float = ACCEPT_OBJECTIVE,
                 coarse: tuple[int, int] = (48, 48),
                 param_tol: float = 1e-6,
                 threads: int | None = None,
                 max_attempts: int | None = None) -> DesignResult:
    """Shell stage, then core matching over feasible cells in row-major order.

    Returns the first fully verified DesignPoint; on failure the result
    carries point=None and a histogram of why cells and attempts failed.
    """
    grid = feasible_shell_set(background, energy_ev, outer_radius_nm, core_radius_nm,
                              shell_mass_values, shell_potential_values, epsilon,
                              threads=threads)
    histogram: dict[str, int] = {}
    attempts: list[DesignAttempt] = []
    for cell in grid.cells:
        if not cell.feasible:
            for reason in cell.reasons:
                histogram[reason] = histogram.get(reason, 0) + 1
            continue
        point = match_core_parameters(Medium(cell.x, cell.y), background, energy_ev,
                                      outer_radius_nm, core_radius_nm,
                                      core_mass_bounds, core_potential_bounds, epsilon,
                                      coarse=coarse, accept=accept, param_tol=param_tol)
        attempts.append(DesignAttempt(cell.ix, cell.iy, point))
        if point.feasible:
            return DesignResult(point=point, shell_grid=grid,
                                attempts=tuple(attempts), reason_histogram=histogram)
        for reason in point.reasons:
            histogram[reason] = histogram.get(reason, 0) + 1
        if max_attempts is not None and len(attempts) >= max_attempts:
            break
    return DesignResult(point=None, shell_grid=grid, attempts=tuple(attempts),
                        reason_histogram=histogram)


# ---------------------------------------------------------------------------
# three-layer robustness sweep

def robustness_sweep(stack: LayerStack, hidden_mass_values, hidden_potential_values,
                     *, threads: int | None = None) -> SweepGrid:
    """Cross section of the stack as the innermost (hidden) medium varies.

    Records sigma_normalized per (m_h, V_h) cell; per-cell solver failures
    are recorded in the cell and do not stop the sweep.
    """
    if len(stack.layers) < 3:
        raise ValueError("robustness sweep needs a hidden innermost layer (>= 3 layers)")
    hidden_mass_values = tuple(float(v) for v in hidden_mass_values)
    hidden_potential_values = tuple(float(v) for v in hidden_potential_values)
    if not hidden_mass_values or not hidden_potential_values:
        raise ValueError("empty sweep grid")

    outer = stack.layers[:-1]
    a_h = stack.layers[-1].outer_radius_nm

    def run(task) -> SweepCell:
        ix, iy, mh, vh = task
        try:
            cell_stack = LayerStack(background=stack.background, energy_ev=stack.energy_ev,
                                    layers=outer + (Layer(Medium(mh, vh), a_h),))
            sig = cross_section(cell_stack).sigma_normalized
            return SweepCell(ix, iy, mh, vh, sig, True)
        except (QCloakError, ValueError, ArithmeticError) as exc:
            return SweepCell(ix, iy, mh, vh, None, False, (f"error:{type(exc).__name__}",))

    tasks = [(ix, iy, mh, vh)
             for ix, mh in enumerate(hidden_mass_values)
             for iy, vh in enumerate(hidden_potential_values)]
    cells = _map_ordered(run, tasks, threads)
    from .model import stack_to_dict
    prov = config_hash({"op": "robustness_sweep", "stack": stack_to_dict(stack),
                        "hidden_mass_values": list(hidden_mass_values),
                        "hidden_potential_values": list(hidden_potential_values)})
    return SweepGrid(axes=(SweepAxis("hidden_mass_me", hidden_mass_values),
                           SweepAxis("hidden_potential_eV", hidden_potential_values)),
                     cells=tuple(cells), provenance=prov)


# ---------------------------------------------------------------------------
# plain-dict views for serialization

def design_point_to_dict(point: DesignPoint) -> dict:
    def med(m: Medium | None):
        return None if m is None else {"mass_me": m.mass_me, "potential_eV": m.potential_ev}
    return {
        "shell": med(point.shell),
        "core": med(point.core),
        "r_n_nm": point.r_n_nm,
        "flux_fraction": point.flux_fraction,
        "sigma_normalized": point.sigma_normalized,
        "max_a01": point.max_a01,
        "feasible": point.feasible,
        "reasons": list(point.reasons),
    }


def sweep_grid_to_dict(grid: SweepGrid) -> dict:
    return {
        "axes": [{"name": ax.name, "values": list(ax.values)} for ax in grid.axes],
        "cells": [{
            "ix": c.ix, "iy": c.iy, "x": c.x, "y": c.y,
            "objective": c.objective, "feasible": c.feasible,
            "reasons": list(c.reasons),
            "diagnostics": c.diagnostics,
        } for c in grid.cells],
        "provenance": grid.provenance,
    }


def design_result_to_dict(result: DesignResult) -> dict:
    return {
        "point": None if result.point is None else design_point_to_dict(result.point),
        "shell_grid": sweep_grid_to_dict(result.shell_grid),
        "attempts": [{"ix": at.ix, "iy": at.iy,
                      "point": design_point_to_dict(at.point)} for at in result.attempts],
        "reason_histogram": dict(sorted(result.reason_histogram.items())),
    }


def write_sweep_csv(grid: SweepGrid, path, *, header_comment: str | None = None) -> None:
    """One row per cell: indices, axis values, objective, feasibility, reasons."""
    xname, yname = grid.axes[0].name, grid.axes[1].name
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment is not None:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["ix", "iy", xname, yname, "objective", "feasible", "reasons"])
        for c in grid.cells:
            writer.writerow([c.ix, c.iy, fmt_float(c.x), fmt_float(c.y),
                             fmt_float(c.objective), int(c.feasible),
                             ";".join(c.reasons)])
