"""Partial-wave matching for layered effective-mass scatterers.

Canonical paths: a 4x4 linear system for two-layer stacks and a chained
2x2 transfer-matrix product for arbitrary stacks.  The closed-form
coefficient expressions are kept as independent check paths.  Matching
conditions at every interface: continuity of the wavefunction and of
(1/m) times its radial derivative.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, NumericalDegeneracyError
from .model import LayerStack, two_layer_shorthand, wavenumber
from .specfun import L_MAX, sph_bessel_j, sph_hankel1

__all__ = [
    "SIGMA_TERM_CUTOFF",
    "MIN_TRUNCATION_L",
    "CONDITION_LIMIT",
    "LayerCoeff",
    "PartialWaveSolution",
    "CrossSectionResult",
    "shell_coefficients_approx",
    "solve_two_layer",
    "solve_n_layer",
    "solve_partial_wave",
    "solve_partial_waves",
    "a_scat_closed_form",
    "cross_section",
]

SIGMA_TERM_CUTOFF = 1e-5   # on (2l+1)|a_l|^2, i.e. the per-l term in units of 4 pi / k0^2
MIN_TRUNCATION_L = 4
CONDITION_LIMIT = 1e12


@dataclass(frozen=True)
class LayerCoeff:
    """Radial coefficients of one layer in the (h1, j) basis.

    True values are mantissa * exp(scale); the innermost layer always has
    outward == 0 (regular solution only).
    """

    outward: complex
    inward: complex
    outward_scale: float = 0.0
    inward_scale: float = 0.0

    @property
    def outward_value(self) -> complex:
        return self.outward * math.exp(self.outward_scale)

    @property
    def inward_value(self) -> complex:
        return self.inward * math.exp(self.inward_scale)


@dataclass(frozen=True)
class PartialWaveSolution:
    l: int
    a_scat: complex
    layer_coeffs: tuple[LayerCoeff, ...]


@dataclass(frozen=True)
class CrossSectionResult:
    sigma_nm2: float
    sigma_normalized: float
    per_l_terms: tuple[tuple[int, float], ...]
    l_max_used: int


def _require_propagating_background(stack: LayerStack) -> complex:
    k0 = wavenumber(stack.energy_ev, stack.background)
    if k0.imag != 0.0 or k0.real <= 0.0:
        raise DegenerateInputError(
            "background wavenumber must be real positive (E above background potential)")
    return k0


def _region_wavenumbers(stack: LayerStack) -> list[complex]:
    ks = [wavenumber(stack.energy_ev, stack.background)]
    for i, layer in enumerate(stack.layers):
        k = wavenumber(stack.energy_ev, layer.medium)
        if k == 0:
            raise DegenerateInputError(f"wavenumber vanishes in layer {i} (E equals potential)")
        ks.append(k)
    return ks


def shell_coefficients_approx(l: int, stack: LayerStack) -> tuple[complex, complex]:
    """Shell coefficients (b_l, c_l) under the no-scattering assumption a_l = 0.

    Only the outer interface enters, so the result is independent of the
    core.  The denominator is evaluated both directly and through the
    Wronskian identity j h' - j' h = i/z^2; the two must agree to 1e-10
    relative or the evaluation is rejected.
    """
    sh = two_layer_shorthand(stack)
    if sh["ks"] == 0:
        raise DegenerateInputError("shell wavenumber is zero (E equals shell potential)")
    _require_propagating_background(stack)
    x1, x2, y1, y2 = sh["x1"], sh["x2"], sh["y1"], sh["y2"]
    j1 = sph_bessel_j(l, x1)
    j2 = sph_bessel_j(l, x2)
    h2 = sph_hankel1(l, x2)
    j1v, j1d = j1.value_unscaled, j1.derivative_unscaled
    j2v, j2d = j2.value_unscaled, j2.derivative_unscaled
    h2v, h2d = h2.value_unscaled, h2.derivative_unscaled

    den_wronskian = 1j * y1 / x2
    den_direct = x2 * y1 * (j2v * h2d - j2d * h2v)
    if abs(den_direct - den_wronskian) > 1e-10 * abs(den_wronskian):
        raise NumericalDegeneracyError(
            "shell coefficient denominator fails the Wronskian cross-check")
    b = (x2 * y1 * j1v * h2d - x1 * y2 * h2v * j1d) / den_wronskian
    c = (x1 * y2 * j2v * j1d - x2 * y1 * j1v * j2d) / den_wronskian
    return b, c


def _pack_coeff(mantissa: complex, scale: float) -> tuple[complex, float]:
    if mantissa == 0:
        return 0j, 0.0
    tot = scale + math.log(abs(mantissa))
    if abs(tot) <= 300.0:
        return mantissa / abs(mantissa) * math.exp(tot), 0.0
    return mantissa / abs(mantissa), tot


def solve_two_layer(l: int, stack: LayerStack) -> PartialWaveSolution:
    """Exact partial-wave solution of a shell + core stack.

    Solves the 4x4 matching system for (a_l, b_l, c_l, d_l) with row and
    column equilibration; the equilibrated condition number above
    CONDITION_LIMIT raises a degeneracy error.
    """
    if len(stack.layers) != 2:
        raise ValueError("solve_two_layer requires exactly two layers")
    _require_propagating_background(stack)
    _region_wavenumbers(stack)
    sh = two_layer_shorthand(stack)
    x1, x2, x3, x4 = sh["x1"], sh["x2"], sh["x3"], sh["x4"]
    c0 = sh["k0"] / stack.background.mass_me
    cs = sh["ks"] / stack.layers[0].medium.mass_me
    cc = sh["kc"] / stack.layers[1].medium.mass_me

    j1 = sph_bessel_j(l, x1)
    h1 = sph_hankel1(l, x1)
    j2 = sph_bessel_j(l, x2)
    h2 = sph_hankel1(l, x2)
    j3 = sph_bessel_j(l, x3)
    h3 = sph_hankel1(l, x3)
    j4 = sph_bessel_j(l, x4)

    # rows: psi and (1/m) d psi/dr at r=a then r=ac; columns: a, b, c, d
    mant = np.array([
        [h1.value, -j2.value, -h2.value, 0.0],
        [c0 * h1.derivative, -cs * j2.derivative, -cs * h2.derivative, 0.0],
        [0.0, j3.value, h3.value, -j4.value],
        [0.0, cs * j3.derivative, cs * h3.derivative, -cc * j4.derivative],
    ], dtype=complex)
    logs = np.array([
        [h1.log_scale, j2.log_scale, h2.log_scale, 0.0],
        [h1.log_scale, j2.log_scale, h2.log_scale, 0.0],
        [0.0, j3.log_scale, h3.log_scale, j4.log_scale],
        [0.0, j3.log_scale, h3.log_scale, j4.log_scale],
    ])
    rhs = np.array([-j1.value_unscaled, -c0 * j1.derivative_unscaled, 0.0, 0.0], dtype=complex)

    with np.errstate(divide="ignore"):
        entry_log = np.where(mant != 0, np.log(np.abs(mant), where=mant != 0), -np.inf) + logs
    col_shift = entry_log.max(axis=0)          # equilibrate unknowns
    a_eq = mant * np.exp(logs - col_shift[None, :])
    row_shift = np.abs(a_eq).max(axis=1)
    if not np.all(row_shift > 0):
        raise NumericalDegeneracyError("matching system has a null row", float("inf"))
    a_eq = a_eq / row_shift[:, None]
    rhs_eq = rhs / row_shift

    cond = np.linalg.cond(a_eq)
    if not cond < CONDITION_LIMIT:
        raise NumericalDegeneracyError(
            f"matching system condition number {cond:.3e} exceeds {CONDITION_LIMIT:.0e}", cond)
    sol = np.linalg.solve(a_eq, rhs_eq)

    a_scat = sol[0] * math.exp(-col_shift[0])
    bm, bs = _pack_coeff(sol[1], -col_shift[1])
    cm, cs_ = _pack_coeff(sol[2], -col_shift[2])
    dm, ds = _pack_coeff(sol[3], -col_shift[3])
    coeffs = (
        LayerCoeff(outward=cm, inward=bm, outward_scale=cs_, inward_scale=bs),
        LayerCoeff(outward=0j, inward=dm, outward_scale=0.0, inward_scale=ds),
    )
    return PartialWaveSolution(l=l, a_scat=a_scat, layer_coeffs=coeffs)


def _scaled_matmul(am, asc, bm, bsc):
    """Product of 2x2 matrices held as (mantissa, log-scale) pairs."""
    cm = [[0j, 0j], [0j, 0j]]
    csc = [[0.0, 0.0], [0.0, 0.0]]
    for i in range(2):
        for j in range(2):
            terms = []
            for k in range(2):
                m = am[i][k] * bm[k][j]
                if m != 0:
                    terms.append((m, asc[i][k] + bsc[k][j]))
            if not terms:
                continue
            top = max(s for _, s in terms)
            val = sum(m * math.exp(s - top) for m, s in terms)
            if val == 0:
                continue
            mag = abs(val)
            cm[i][j] = val / mag
            csc[i][j] = top + math.log(mag)
    return cm, csc


def _interface_factor(l, k_out, m_out, k_in, m_in, r):
    """Transfer factor taking (j, h) coefficients across one interface, scaled."""
    z_out = k_out * r
    z_in = k_in * r
    jo = sph_bessel_j(l, z_out)
    ho = sph_hankel1(l, z_out)
    ji = sph_bessel_j(l, z_in)
    hi = sph_hankel1(l, z_in)
    co = k_out / m_out
    ci = k_in / m_in
    q = z_in * z_in / 1j      # inverse via the Wronskian determinant ci * i / z_in^2
    inv_m = [[hi.derivative * q, -hi.value * q / ci],
             [-ji.derivative * q, ji.value * q / ci]]
    inv_s = [[hi.log_scale, hi.log_scale], [ji.log_scale, ji.log_scale]]
    out_m = [[jo.value, ho.value], [co * jo.derivative, co * ho.derivative]]
    out_s = [[jo.log_scale, ho.log_scale], [jo.log_scale, ho.log_scale]]
    return _scaled_matmul(inv_m, inv_s, out_m, out_s)


def solve_n_layer(l: int, stack: LayerStack) -> PartialWaveSolution:
    """Partial-wave solution for an arbitrary layer count.

    Chains per-interface 2x2 transfer factors in (mantissa, log-scale)
    form, so strongly evanescent layers never materialize exp(kappa r) in
    a double.  Reduces to solve_two_layer for two-layer stacks.
    """
    if len(stack.layers) == 0:
        raise ValueError("solve_n_layer requires at least one layer")
    _require_propagating_background(stack)
    ks = _region_wavenumbers(stack)
    masses = [stack.background.mass_me] + [ly.medium.mass_me for ly in stack.layers]
    radii = [ly.outer_radius_nm for ly in stack.layers]

    factors = []
    for i in range(len(radii)):
        factors.append(_interface_factor(l, ks[i], masses[i], ks[i + 1], masses[i + 1], radii[i]))

    tot_m, tot_s = factors[0]
    for fm, fs in factors[1:]:
        tot_m, tot_s = _scaled_matmul(fm, fs, tot_m, tot_s)

    if tot_m[1][1] == 0:
        raise NumericalDegeneracyError("transfer chain is singular", float("inf"))
    # regularity at the origin: T21 + T22 a = 0
    a_scat = -tot_m[1][0] / tot_m[1][1] * math.exp(tot_s[1][0] - tot_s[1][1])
    if abs(a_scat) > 1.0 + 1e-6:
        raise NumericalDegeneracyError(
            f"scattering coefficient |a|={abs(a_scat):.3e} violates unitarity bound")

    coeffs = []
    vec_m = [1.0 + 0j, a_scat]
    vec_s = [0.0, 0.0]
    for idx, (fm, fs) in enumerate(factors):
        new_m = [0j, 0j]
        new_s = [0.0, 0.0]
        for i in range(2):
            terms = [(fm[i][k] * vec_m[k], fs[i][k] + vec_s[k])
                     for k in range(2) if fm[i][k] * vec_m[k] != 0]
            if not terms:
                continue
            top = max(s for _, s in terms)
            val = sum(m * math.exp(s - top) for m, s in terms)
            if val != 0:
                new_m[i] = val / abs(val)
                new_s[i] = top + math.log(abs(val))
        vec_m, vec_s = new_m, new_s
        inward, inward_s = _pack_coeff(vec_m[0], vec_s[0])
        if idx == len(factors) - 1:
            coeffs.append(LayerCoeff(outward=0j, inward=inward,
                                     outward_scale=0.0, inward_scale=inward_s))
        else:
            outward, outward_s = _pack_coeff(vec_m[1], vec_s[1])
            coeffs.append(LayerCoeff(outward=outward, inward=inward,
                                     outward_scale=outward_s, inward_scale=inward_s))
    return PartialWaveSolution(l=l, a_scat=a_scat, layer_coeffs=tuple(coeffs))


def solve_partial_wave(l: int, stack: LayerStack) -> PartialWaveSolution:
    """Canonical per-l solve: the 4x4 system for two layers, transfer chain otherwise."""
    if len(stack.layers) == 2:
        return solve_two_layer(l, stack)
    return solve_n_layer(l, stack)


def solve_partial_waves(stack: LayerStack, l_max: int) -> tuple[PartialWaveSolution, ...]:
    if not 0 <= l_max <= L_MAX:
        raise ValueError(f"l_max must lie in [0, {L_MAX}]")
    return tuple(solve_partial_wave(l, stack) for l in range(l_max + 1))


def _sprod(*terms):
    """Product of (mantissa, scale) pairs."""
    m = 1.0 + 0j
    s = 0.0
    for tm, ts in terms:
        m *= tm
        s += ts
    return m, s


def _ssum(terms):
    terms = [(m, s) for m, s in terms if m != 0]
    if not terms:
        return 0j, 0.0
    top = max(s for _, s in terms)
    val = sum(m * math.exp(s - top) for m, s in terms)
    return val, top


def a_scat_closed_form(l: int, stack: LayerStack) -> complex:
    """Closed-form a_l for two layers; independent check path for solve_two_layer."""
    sh = two_layer_shorthand(stack)
    _require_propagating_background(stack)
    x1, x2, x3, x4 = sh["x1"], sh["x2"], sh["x3"], sh["x4"]
    y1, y2, y3, y4 = sh["y1"], sh["y2"], sh["y3"], sh["y4"]
    j1 = sph_bessel_j(l, x1)
    j2 = sph_bessel_j(l, x2)
    h2 = sph_hankel1(l, x2)
    j3 = sph_bessel_j(l, x3)
    h3 = sph_hankel1(l, x3)
    j4 = sph_bessel_j(l, x4)
    h1o = sph_hankel1(l, x1)

    jv = lambda e: (e.value, e.log_scale)
    jd = lambda e: (e.derivative, e.log_scale)

    bracket_a = _ssum([_sprod(jv(j2), jd(h3)), _sprod((-1, 0.0), jv(h2), jd(j3))])
    bracket_b = _ssum([_sprod(jv(h2), jv(j3)), _sprod((-1, 0.0), jv(j2), jv(h3))])
    bracket_c = _ssum([_sprod(jd(h2), jd(j3)), _sprod((-1, 0.0), jd(h3), jd(j2))])
    bracket_d = _ssum([_sprod(jd(j2), jv(h3)), _sprod((-1, 0.0), jd(h2), jv(j3))])
    term_a = _sprod((y2 * x3 * y4, 0.0), jv(j4), bracket_a)
    term_b = _sprod((y2 * y3 * x4, 0.0), jd(j4), bracket_b)
    term_c = _sprod((x2 * x3 * y4, 0.0), jv(j4), bracket_c)
    term_d = _sprod((x2 * y3 * x4, 0.0), jd(j4), bracket_d)
    ab = _ssum([term_a, term_b])
    cd = _ssum([term_c, term_d])

    num = _ssum([_sprod((x1, 0.0), jd(j1), ab), _sprod((y1, 0.0), jv(j1), cd)])
    den = _ssum([_sprod((x1, 0.0), jd(h1o), ab), _sprod((y1, 0.0), jv(h1o), cd)])
    if den[0] == 0:
        raise NumericalDegeneracyError("closed-form denominator vanished", float("inf"))
    return -num[0] / den[0] * math.exp(num[1] - den[1])


def cross_section(stack: LayerStack, term_cutoff: float = SIGMA_TERM_CUTOFF) -> CrossSectionResult:
    """Total scattering cross section with the per-l truncation rule.

    Terms are added until (2l+1)|a_l|^2 stays below ``term_cutoff`` for two
    consecutive l, with l = 0..MIN_TRUNCATION_L always evaluated and the
    order capped at L_MAX.
    """
    k0 = _require_propagating_background(stack)
    prefactor = 4.0 * math.pi / (k0.real ** 2)
    terms: list[tuple[int, float]] = []
    below = 0
    for l in range(L_MAX + 1):
        sol = solve_partial_wave(l, stack)
        raw = (2 * l + 1) * abs(sol.a_scat) ** 2
        terms.append((l, prefactor * raw))
        below = below + 1 if raw < term_cutoff else 0
        if l >= MIN_TRUNCATION_L and below >= 2:
            break
    sigma = math.fsum(t for _, t in terms)
    area = math.pi * stack.outer_radius_nm ** 2
    return CrossSectionResult(
        sigma_nm2=sigma,
        sigma_normalized=sigma / area,
        per_l_terms=tuple(terms),
        l_max_used=terms[-1][0],
    )
