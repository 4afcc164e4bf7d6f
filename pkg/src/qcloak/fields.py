"""Wavefunction and probability-flux evaluation on top of partial-wave solutions.

Everything here is dimensionless in the incident-wave gauge: the incident
plane wave carries unit flux along +z, so fluxes are reported relative to
it.  The flux in a medium of mass m is (m0 / (k0 m)) Im[conj(psi) grad psi].
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import DegenerateInputError, QuadratureError
from .model import LayerStack, stack_from_dict, stack_to_dict, wavenumber
from .serialize import dump_json, fmt_float
from .solver import MIN_TRUNCATION_L
from .specfun import L_MAX, legendre_p_family, sph_bessel_j, sph_hankel1

__all__ = [
    "wavefunction",
    "flux",
    "wavefunction_and_flux",
    "flux_through_shell_annulus",
    "NodalReport",
    "find_nodal_point",
    "FieldGrid",
    "export_field_grid",
    "write_field_csv",
    "read_field_csv",
    "write_field_json",
    "read_field_json",
    "trace_streamlines",
    "streamlines_to_dict",
    "recommended_l_max",
    "parse_plane",
]

# Radii below this are clamped before evaluation; every radial series is
# regular at the origin, so the clamp only avoids 0/0 in the 1/r terms.
_R_FLOOR = 1e-12


def _combine(pairs) -> complex:
    """Sum of mantissa * exp(scale) terms, aligned on the largest scale."""
    live = [(m, s) for m, s in pairs if m != 0]
    if not live:
        return 0j
    top = max(s for _, s in live)
    acc = sum(m * math.exp(s - top) for m, s in live)
    return acc * math.exp(top)


def _region_k(stack: LayerStack, region: int) -> complex:
    k = wavenumber(stack.energy_ev, stack.medium_of(region))
    if k == 0:
        raise DegenerateInputError(
            f"wavenumber vanishes in region {region} (E equals the potential)")
    return k


def _background_k(stack: LayerStack) -> float:
    k0 = wavenumber(stack.energy_ev, stack.background)
    if k0.imag != 0.0 or k0.real <= 0.0:
        raise DegenerateInputError(
            "background wavenumber must be real positive (E above background potential)")
    return k0.real


def _assemble(stack: LayerStack, solutions, r: float, theta: float, region: int):
    """Partial-wave sums at one point: psi, dpsi/dr, dpsi/dtheta."""
    k = _region_k(stack, region)
    r_eval = r if r > _R_FLOOR else _R_FLOOR
    z = k * r_eval
    lmax = max(s.l for s in solutions)
    p, dp = legendre_p_family(lmax, math.cos(theta))
    neg_sin = -math.sin(theta)
    psi = 0j
    dpsi_dr = 0j
    dpsi_dth = 0j
    for sol in solutions:
        l = sol.l
        pref = (1j ** l) * (2 * l + 1)
        pairs_v = []
        pairs_d = []
        if region == 0:
            jb = sph_bessel_j(l, z)
            hb = sph_hankel1(l, z)
            pairs_v = [(jb.value, jb.log_scale), (sol.a_scat * hb.value, hb.log_scale)]
            pairs_d = [(jb.derivative, jb.log_scale),
                       (sol.a_scat * hb.derivative, hb.log_scale)]
        else:
            co = sol.layer_coeffs[region - 1]
            if co.inward != 0:
                jb = sph_bessel_j(l, z)
                pairs_v.append((co.inward * jb.value, co.inward_scale + jb.log_scale))
                pairs_d.append((co.inward * jb.derivative, co.inward_scale + jb.log_scale))
            if co.outward != 0:
                hb = sph_hankel1(l, z)
                pairs_v.append((co.outward * hb.value, co.outward_scale + hb.log_scale))
                pairs_d.append((co.outward * hb.derivative, co.outward_scale + hb.log_scale))
        v = _combine(pairs_v)
        d = _combine(pairs_d) * k          # d/dr = k d/dz
        psi += pref * v * p[l]
        dpsi_dr += pref * d * p[l]
        dpsi_dth += pref * v * dp[l] * neg_sin
    return psi, dpsi_dr, dpsi_dth, r_eval


def wavefunction(stack: LayerStack, solutions, r: float, theta: float,
                 *, region: int | None = None) -> complex:
    """Total wavefunction at (r, theta).

    `region` overrides the geometric region lookup; evaluating both sides
    of an interface with the two adjacent regions probes continuity.
    """
    if region is None:
        region = stack.region_of(r)
    psi, _, _, _ = _assemble(stack, solutions, r, theta, region)
    return psi


def wavefunction_and_flux(stack: LayerStack, solutions, r: float, theta: float,
                          *, region: int | None = None) -> tuple[complex, float, float]:
    """(psi, J_r, J_theta) at one point, dimensionless incident-flux units."""
    if region is None:
        region = stack.region_of(r)
    psi, dpsi_dr, dpsi_dth, r_eval = _assemble(stack, solutions, r, theta, region)
    k0 = _background_k(stack)
    scale = stack.background.mass_me / (k0 * stack.medium_of(region).mass_me)
    j_r = scale * (psi.conjugate() * dpsi_dr).imag
    j_th = scale * (psi.conjugate() * (dpsi_dth / r_eval)).imag
    return psi, j_r, j_th


def flux(stack: LayerStack, solutions, r: float, theta: float,
         *, region: int | None = None) -> tuple[float, float]:
    """(J_r, J_theta) at one point."""
    _, j_r, j_th = wavefunction_and_flux(stack, solutions, r, theta, region=region)
    return j_r, j_th


def flux_through_shell_annulus(stack: LayerStack, solutions,
                               tol: float = 1e-8) -> float:
    """Normalized forward flux through the equatorial annulus a_c <= r <= a.

    F = (2 / a^2) * integral of z-hat . J(r, theta=pi/2) r dr between the
    innermost interface and the outer surface.  At theta = pi/2 the z
    component of the flux is -J_theta.  F -> 1 - (a_c/a)^2 when the stack
    does not disturb the incident wave at all.
    """
    a = stack.outer_radius_nm
    a_c = stack.layers[-1].outer_radius_nm
    if not a_c < a:
        raise DegenerateInputError("annulus requires at least two distinct radii")
    half_pi = math.pi / 2.0

    def integrand(r: float) -> float:
        _, j_th = flux(stack, solutions, r, half_pi)
        return -j_th * r

    interior = [lay.outer_radius_nm for lay in stack.layers[1:-1]]
    result, abserr, info, *extra = quad(
        integrand, a_c, a, epsabs=0.5 * tol * a * a, epsrel=tol,
        limit=200, points=interior or None, full_output=1)
    achieved = 2.0 * abserr / (a * a)
    if extra:
        raise QuadratureError(f"annulus flux quadrature: {extra[0]}", achieved=achieved)
    if achieved > tol:
        raise QuadratureError(
            f"annulus flux quadrature stopped at {achieved:.3e} > {tol:.3e}",
            achieved=achieved)
    return 2.0 * result / (a * a)


@dataclass(frozen=True)
class NodalReport:
    """Zeros of the shell radial functions nearest the innermost interface.

    radii maps l to the zero radius in nm (None when the window holds no
    zero); common_radius is the mean of the l = 0 and l = 1 radii when the
    two agree to the matching tolerance, else None.
    """

    radii: dict
    common_radius: float | None
    spread: float | None
    window_nm: tuple[float, float]


def find_nodal_point(stack: LayerStack, shell_coeffs,
                     *, window: tuple[float, float] = (0.2, 1.0),
                     samples: int = 2048,
                     match_tol: float = 0.02) -> NodalReport:
    """Locate the shared zero of the l = 0 and l = 1 shell radial functions.

    shell_coeffs maps l to (b_l, c_l); the radial function is
    b j_l(k_s r) + c h_l(k_s r), continued inward from the shell across
    the innermost interface down to window[0] * a_c.  Zeros are found on
    the real projection against the function's own largest value, which
    for the physically relevant case (a common phase across r) carries
    all sign changes.
    """
    if not (0 < window[0] < window[1] <= 1.0):
        raise ValueError("window must satisfy 0 < lo < hi <= 1")
    if 0 not in shell_coeffs or 1 not in shell_coeffs:
        raise ValueError("shell_coeffs must cover l = 0 and l = 1")
    a_c = stack.layers[-1].outer_radius_nm
    ks = _region_k(stack, 1)
    lo, hi = window[0] * a_c, window[1] * a_c
    grid = np.linspace(lo, hi, samples)

    def rho_fn(l, b, c):
        def f(r: float) -> complex:
            jb = sph_bessel_j(l, ks * r)
            hb = sph_hankel1(l, ks * r)
            return _combine([(b * jb.value, jb.log_scale),
                             (c * hb.value, hb.log_scale)])
        return f

    radii: dict[int, float | None] = {}
    for l in sorted(shell_coeffs):
        b, c = shell_coeffs[l]
        rho = rho_fn(l, b, c)
        vals = np.array([rho(r) for r in grid])
        mags = np.abs(vals)
        peak = mags.max()
        if peak == 0.0:
            radii[l] = None
            continue
        ref = vals[int(mags.argmax())].conjugate()
        proj = (vals * ref).real

        def s(r: float) -> float:
            return (rho(r) * ref).real

        roots = []
        for i in range(samples - 1):
            if proj[i] == 0.0:
                roots.append(grid[i])
            elif proj[i] * proj[i + 1] < 0.0:
                roots.append(brentq(s, grid[i], grid[i + 1], xtol=1e-13))
        if proj[-1] == 0.0:
            roots.append(grid[-1])
        # keep genuine zeros of rho, not just of its projection
        roots = [r for r in roots if abs(rho(r)) <= 1e-6 * peak]
        radii[l] = max(roots) if roots else None

    r0, r1 = radii[0], radii[1]
    common = None
    spread = None
    if r0 is not None and r1 is not None:
        spread = abs(r0 - r1) / a_c
        if spread <= match_tol:
            common = 0.5 * (r0 + r1)
    return NodalReport(radii=radii, common_radius=common, spread=spread,
                       window_nm=(lo, hi))


_PLANE_AXES = {"x": ("y_nm", "z_nm"), "y": ("x_nm", "z_nm"), "z": ("x_nm", "y_nm")}


def parse_plane(plane: str) -> tuple[str, float]:
    """Parse a plane spec like "x=0" or "z=1.5" into (axis, value)."""
    txt = plane.strip().lower().replace(" ", "")
    axis, sep, val = txt.partition("=")
    if not sep or axis not in _PLANE_AXES:
        raise ValueError(f"plane must look like 'x=0', 'y=0.5' or 'z=-1', got {plane!r}")
    try:
        value = float(val)
    except ValueError:
        raise ValueError(f"plane offset {val!r} is not a number") from None
    if not math.isfinite(value):
        raise ValueError("plane offset must be finite")
    return axis, value


@dataclass(frozen=True)
class FieldGrid:
    """Field samples on a regular grid in one Cartesian plane.

    Arrays are indexed [i_u, i_v] with u the first named axis; j1 and j2
    are the flux components along the two in-plane axes.
    """

    plane: str
    axis_names: tuple[str, str]
    u: np.ndarray
    v: np.ndarray
    region: np.ndarray
    psi: np.ndarray
    j1: np.ndarray
    j2: np.ndarray
    stack_config: dict


def _point_on_plane(axis: str, value: float, uu: float, vv: float):
    if axis == "x":
        return value, uu, vv
    if axis == "y":
        return uu, value, vv
    return uu, vv, value


def export_field_grid(stack: LayerStack, solutions, *, plane: str = "x=0",
                      half_width: float | None = None,
                      resolution: int = 201) -> FieldGrid:
    """Sample psi and flux over a square patch of the given plane.

    The patch spans [-half_width, half_width] on both in-plane axes,
    defaulting to 1.5 times the outer radius.
    """
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    axis, offset = parse_plane(plane)
    if half_width is None:
        half_width = 1.5 * stack.outer_radius_nm
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    u = np.linspace(-half_width, half_width, resolution)
    v = np.linspace(-half_width, half_width, resolution)
    n = resolution
    region = np.zeros((n, n), dtype=np.int64)
    psi = np.zeros((n, n), dtype=np.complex128)
    j1 = np.zeros((n, n))
    j2 = np.zeros((n, n))
    for iu, uu in enumerate(u):
        for iv, vv in enumerate(v):
            x, y, z = _point_on_plane(axis, offset, uu, vv)
            rho = math.hypot(x, y)
            r = math.hypot(rho, z)
            theta = math.atan2(rho, z)
            reg = stack.region_of(r)
            p, j_r, j_th = wavefunction_and_flux(stack, solutions, r, theta)
            if r > 0:
                sin_t, cos_t = rho / r, z / r
            else:
                sin_t, cos_t = 0.0, 1.0
            if rho > 0:
                cos_p, sin_p = x / rho, y / rho
            else:
                cos_p, sin_p = 1.0, 0.0
            jx = j_r * sin_t * cos_p + j_th * cos_t * cos_p
            jy = j_r * sin_t * sin_p + j_th * cos_t * sin_p
            jz = j_r * cos_t - j_th * sin_t
            if axis == "x":
                c1, c2 = jy, jz
            elif axis == "y":
                c1, c2 = jx, jz
            else:
                c1, c2 = jx, jy
            region[iu, iv] = reg
            psi[iu, iv] = p
            j1[iu, iv] = c1
            j2[iu, iv] = c2
    return FieldGrid(plane=f"{axis}={fmt_float(offset)}", axis_names=_PLANE_AXES[axis],
                     u=u, v=v, region=region, psi=psi, j1=j1, j2=j2,
                     stack_config=stack_to_dict(stack))


def write_field_csv(grid: FieldGrid, path, *, header_comment: str | None = None) -> None:
    """Row-major CSV dump; floats carry 17 significant digits.

    `header_comment` (without the leading ``#``) is written as a first
    comment line, used by the CLI to stamp the config hash.
    """
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if header_comment is not None:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh)
        writer.writerow([grid.axis_names[0], grid.axis_names[1], "region",
                         "re_psi", "im_psi", "abs_psi", "j_1", "j_2"])
        for iu in range(grid.u.size):
            for iv in range(grid.v.size):
                p = grid.psi[iu, iv]
                writer.writerow([
                    fmt_float(float(grid.u[iu])), fmt_float(float(grid.v[iv])),
                    int(grid.region[iu, iv]),
                    fmt_float(p.real), fmt_float(p.imag), fmt_float(abs(p)),
                    fmt_float(float(grid.j1[iu, iv])), fmt_float(float(grid.j2[iu, iv])),
                ])


def read_field_csv(path) -> dict:
    """Read a field CSV back into column arrays keyed by header name."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = (line for line in fh if not line.startswith("#"))
        reader = csv.reader(rows)
        header = next(reader)
        cols: dict[str, list] = {name: [] for name in header}
        for row in reader:
            for name, cell in zip(header, row):
                cols[name].append(int(cell) if name == "region" else float(cell))
    return {name: np.asarray(vals) for name, vals in cols.items()}


def _grid_payload(grid: FieldGrid) -> dict:
    return {
        "plane": grid.plane,
        "axis_names": list(grid.axis_names),
        "u": [float(x) for x in grid.u],
        "v": [float(x) for x in grid.v],
        "region": [[int(x) for x in row] for row in grid.region],
        "re_psi": [[float(x) for x in row] for row in grid.psi.real],
        "im_psi": [[float(x) for x in row] for row in grid.psi.imag],
        "j1": [[float(x) for x in row] for row in grid.j1],
        "j2": [[float(x) for x in row] for row in grid.j2],
        "stack": grid.stack_config,
    }


def write_field_json(grid: FieldGrid, path, *, extra: dict | None = None) -> None:
    """JSON dump embedding the stack config; round-trips bit-exactly.

    `extra` entries are merged at top level; the reader ignores keys it
    does not know, so provenance stamps do not break round-trips.
    """
    payload = _grid_payload(grid)
    if extra:
        payload.update(extra)
    dump_json(payload, path)


def read_field_json(path) -> FieldGrid:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    stack_from_dict(doc["stack"])   # validates the embedded config
    re_psi = np.asarray(doc["re_psi"])
    return FieldGrid(
        plane=doc["plane"], axis_names=tuple(doc["axis_names"]),
        u=np.asarray(doc["u"]), v=np.asarray(doc["v"]),
        region=np.asarray(doc["region"], dtype=np.int64),
        psi=re_psi + 1j * np.asarray(doc["im_psi"]),
        j1=np.asarray(doc["j1"]), j2=np.asarray(doc["j2"]),
        stack_config=doc["stack"])


def _bilinear(u: np.ndarray, v: np.ndarray, arr: np.ndarray,
              pu: float, pv: float) -> float | None:
    if not (u[0] <= pu <= u[-1] and v[0] <= pv <= v[-1]):
        return None
    iu = min(int((pu - u[0]) / (u[1] - u[0])), u.size - 2)
    iv = min(int((pv - v[0]) / (v[1] - v[0])), v.size - 2)
    fu = (pu - u[iu]) / (u[iu + 1] - u[iu])
    fv = (pv - v[iv]) / (v[iv + 1] - v[iv])
    return ((1 - fu) * (1 - fv) * arr[iu, iv] + fu * (1 - fv) * arr[iu + 1, iv]
            + (1 - fu) * fv * arr[iu, iv + 1] + fu * fv * arr[iu + 1, iv + 1])


def trace_streamlines(grid: FieldGrid, seeds, *, step: float | None = None,
                      max_steps: int = 100_000,
                      min_flux: float = 1e-12) -> list[np.ndarray]:
    """Integrate flux streamlines through the sampled plane.

    Fixed-step fourth-order Runge-Kutta on the unit flux direction with
    bilinear interpolation; a line ends when it leaves the grid, enters a
    |J| < min_flux stagnation zone, or hits max_steps.
    """
    if step is None:
        step = 0.5 * min(grid.u[1] - grid.u[0], grid.v[1] - grid.v[0])
    if step == 0:
        raise ValueError("step must be nonzero")

    def direction(pu: float, pv: float):
        a = _bilinear(grid.u, grid.v, grid.j1, pu, pv)
        b = _bilinear(grid.u, grid.v, grid.j2, pu, pv)
        if a is None or b is None:
            return None
        mag = math.hypot(a, b)
        if mag < min_flux:
            return None
        return a / mag, b / mag

    lines = []
    for su, sv in seeds:
        pts = [(float(su), float(sv))]
        pu, pv = float(su), float(sv)
        for _ in range(max_steps):
            k1 = direction(pu, pv)
            if k1 is None:
                break
            k2 = direction(pu + 0.5 * step * k1[0], pv + 0.5 * step * k1[1])
            if k2 is None:
                break
            k3 = direction(pu + 0.5 * step * k2[0], pv + 0.5 * step * k2[1])
            if k3 is None:
                break
            k4 = direction(pu + step * k3[0], pv + step * k3[1])
            if k4 is None:
                break
            pu += step * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
            pv += step * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
            pts.append((pu, pv))
        lines.append(np.asarray(pts))
    return lines


def streamlines_to_dict(grid: FieldGrid, lines: list[np.ndarray]) -> dict:
    """JSON payload for traced streamlines: plane, axes, stack, polylines."""
    return {
        "plane": grid.plane,
        "axis_names": list(grid.axis_names),
        "polylines": [[[float(u), float(v)] for u, v in line] for line in lines],
        "stack": grid.stack_config,
    }


def recommended_l_max(stack: LayerStack, r_max: float) -> int:
    """Truncation order for field evaluation out to radius r_max."""
    k0 = abs(wavenumber(stack.energy_ev, stack.background))
    return min(L_MAX, max(MIN_TRUNCATION_L, math.ceil(k0 * r_max) + 8))
