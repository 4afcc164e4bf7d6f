"""Spherical Bessel, Hankel and Legendre functions for complex arguments.

Evaluations carry an explicit log-scale so that strongly evanescent
arguments (|Im z| of order 1e3) stay inside double range: the true value
of an evaluation is ``value * exp(log_scale)``.  For moderate arguments
the scale collapses to zero and ``value`` is the plain function value.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from functools import lru_cache

__all__ = [
    "L_MAX",
    "SphericalBasisEval",
    "sph_bessel_j",
    "sph_hankel1",
    "sph_hankel2",
    "legendre_p",
    "legendre_p_deriv",
    "legendre_p_family",
]

L_MAX = 64                 # hard order cap; the long-wavelength regime never needs more
_MILLER_PAD = 30           # extra start orders for the downward recurrence
_RENORM_HI = 1e4           # working-value magnitude that triggers rescaling
_RENORM_LO = 1e-150
_COLLAPSE_LIMIT = 300.0    # |log magnitude| below which results fold into plain doubles
_MIN_ABS_Z = 1e-250


@dataclass(frozen=True)
class SphericalBasisEval:
    """One radial basis function and its derivative at a fixed argument.

    ``value`` and ``derivative`` share the same ``log_scale``; the true
    numbers are ``value * exp(log_scale)`` and ``derivative * exp(log_scale)``.
    """

    order: int
    argument: complex
    value: complex
    derivative: complex
    log_scale: float = 0.0

    @property
    def value_unscaled(self) -> complex:
        # exp() overflows (raises) rather than returning inf for log_scale > ~709
        return self.value * math.exp(self.log_scale)

    @property
    def derivative_unscaled(self) -> complex:
        return self.derivative * math.exp(self.log_scale)


def _check_order(l: int) -> None:
    if not 0 <= l <= L_MAX:
        raise ValueError(f"order l={l} outside supported range [0, {L_MAX}]")


def _sincos_scaled(z: complex) -> tuple[complex, complex, float]:
    """sin z and cos z as mantissas at scale |Im z|."""
    s = abs(z.imag)
    m1 = cmath.exp(1j * z - s)   # e^{iz} e^{-s}
    m2 = cmath.exp(-1j * z - s)  # e^{-iz} e^{-s}
    return (m1 - m2) / 2j, (m1 + m2) / 2.0, s


def _j0_series(z: complex) -> complex:
    """Power series for j_0; exact to machine precision for |z| <= 0.5."""
    z2 = z * z
    term = 1.0 + 0j
    acc = term
    for m in range(1, 26):
        term *= -z2 / ((2 * m) * (2 * m + 1))
        acc += term
        if abs(term) <= 1e-20 * abs(acc):
            break
    return acc


def _pack_pair(v: complex, d: complex, s: float) -> tuple[complex, complex, float]:
    """Collapse a (value, derivative, scale) triple to scale 0 when representable."""
    mx = max(abs(v), abs(d))
    if mx == 0.0:
        return 0j, 0j, 0.0
    tot = s + math.log(mx)
    if abs(tot) <= _COLLAPSE_LIMIT:
        factor = math.exp(tot)
        return v / mx * factor, d / mx * factor, 0.0
    return v / mx, d / mx, tot


@lru_cache(maxsize=2048)
def _j_family(z: complex) -> tuple[tuple[complex, ...], tuple[complex, ...], tuple[float, ...]]:
    """j_l and j_l' for l = 0..L_MAX by normalized downward recurrence."""
    if z == 0:
        vals = [1.0 + 0j] + [0j] * L_MAX
        ders = [0j] * (L_MAX + 1)
        ders[1] = 1.0 / 3.0 + 0j
        return tuple(vals), tuple(ders), tuple([0.0] * (L_MAX + 1))
    nstart = L_MAX + int(abs(z)) + _MILLER_PAD
    ms = [0j] * (L_MAX + 1)
    cs = [0.0] * (L_MAX + 1)
    fp = 0j
    f = 1e-100 + 0j
    cum = 0.0
    for l in range(nstart, 0, -1):
        if l <= L_MAX:
            ms[l] = f
            cs[l] = cum
        fp, f = f, (2 * l + 1) / z * f - fp
        af = abs(f)
        if af > _RENORM_HI:
            f /= af
            fp /= af
            cum += math.log(af)
        elif 0.0 < af < _RENORM_LO:
            f *= 1e100
            fp *= 1e100
            cum -= math.log(1e100)
    ms[0] = f
    cs[0] = cum

    # normalize against closed-form j_0 (or j_1 when sin z is near a zero);
    # near the origin both trig forms cancel, so use the j_0 power series
    if abs(z) <= 0.5:
        ref, ref_m, s_trig = 0, _j0_series(z), 0.0
    else:
        sin_m, cos_m, s_trig = _sincos_scaled(z)
        j0_m = sin_m / z
        j1_m = sin_m / (z * z) - cos_m / z
        ref = 0 if abs(j0_m) >= abs(j1_m) else 1
        ref_m = j0_m if ref == 0 else j1_m
    rm = ref_m / ms[ref]
    rs = s_trig - cs[ref]

    vals: list[complex] = [0j] * (L_MAX + 1)
    ders: list[complex] = [0j] * (L_MAX + 1)
    scales: list[float] = [0.0] * (L_MAX + 1)
    for l in range(L_MAX + 1):
        v = ms[l] * rm
        if l == 0:
            d = -(ms[1] * rm) * math.exp(cs[1] - cs[0])
        else:
            d = ms[l - 1] * rm * math.exp(cs[l - 1] - cs[l]) - (l + 1) / z * v
        vals[l], ders[l], scales[l] = _pack_pair(v, d, cs[l] + rs)
    return tuple(vals), tuple(ders), tuple(scales)


@lru_cache(maxsize=2048)
def _h_family(z: complex) -> tuple[tuple[complex, ...], tuple[complex, ...], tuple[float, ...]]:
    """h^(1)_l and its derivative for l = 0..L_MAX by upward recurrence."""
    if z == 0:
        raise ValueError("spherical Hankel function is singular at z = 0")
    s0 = -z.imag
    phase = cmath.exp(1j * z.real)   # e^{iz} = phase * e^{s0}
    ms = [0j] * (L_MAX + 1)
    cs = [0.0] * (L_MAX + 1)
    hm = -1j * phase / z
    hp = phase * (-z - 1j) / (z * z)
    ms[0], cs[0] = hm, 0.0
    ms[1], cs[1] = hp, 0.0
    cum = 0.0
    for l in range(1, L_MAX):
        hm, hp = hp, (2 * l + 1) / z * hp - hm
        ah = abs(hp)
        if ah > _RENORM_HI:
            hp /= ah
            hm /= ah
            cum += math.log(ah)
        elif 0.0 < ah < _RENORM_LO:
            hp *= 1e100
            hm *= 1e100
            cum -= math.log(1e100)
        ms[l + 1] = hp
        cs[l + 1] = cum

    vals: list[complex] = [0j] * (L_MAX + 1)
    ders: list[complex] = [0j] * (L_MAX + 1)
    scales: list[float] = [0.0] * (L_MAX + 1)
    for l in range(L_MAX + 1):
        v = ms[l]
        if l == 0:
            d = -ms[1] * math.exp(cs[1] - cs[0])
        else:
            d = ms[l - 1] * math.exp(cs[l - 1] - cs[l]) - (l + 1) / z * v
        vals[l], ders[l], scales[l] = _pack_pair(v, d, cs[l] + s0)
    return tuple(vals), tuple(ders), tuple(scales)


def _validate_argument(z: complex) -> complex:
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise ValueError("argument must be finite")
    if z != 0 and abs(z) < _MIN_ABS_Z:
        raise ValueError(f"|z| < {_MIN_ABS_Z} is outside the supported domain")
    return z


def sph_bessel_j(l: int, z: complex) -> SphericalBasisEval:
    """Spherical Bessel function j_l(z) and derivative, scaled.

    Parameters
    ----------
    l : int
        Order, 0 <= l <= L_MAX.
    z : complex
        Argument; z = 0 is handled as the series limit.
    """
    _check_order(l)
    z = _validate_argument(z)
    vals, ders, scales = _j_family(z)
    return SphericalBasisEval(l, z, vals[l], ders[l], scales[l])


def sph_hankel1(l: int, z: complex) -> SphericalBasisEval:
    """Outgoing spherical Hankel function h^(1)_l(z) and derivative, scaled."""
    _check_order(l)
    z = _validate_argument(z)
    vals, ders, scales = _h_family(z)
    return SphericalBasisEval(l, z, vals[l], ders[l], scales[l])


def sph_hankel2(l: int, z: complex) -> SphericalBasisEval:
    """Incoming spherical Hankel function via the companion relation h2 = 2j - h1."""
    j = sph_bessel_j(l, z)
    h = sph_hankel1(l, z)
    s = max(j.log_scale, h.log_scale)
    wj = math.exp(j.log_scale - s)
    wh = math.exp(h.log_scale - s)
    v, d, sc = _pack_pair(2.0 * j.value * wj - h.value * wh,
                          2.0 * j.derivative * wj - h.derivative * wh, s)
    return SphericalBasisEval(l, complex(z), v, d, sc)


def legendre_p_family(lmax: int, x: float) -> tuple[list[float], list[float]]:
    """P_l(x) and dP_l/dx for l = 0..lmax on x in [-1, 1]."""
    _check_order(lmax)
    if not -1.0 <= x <= 1.0:
        raise ValueError(f"Legendre argument {x} outside [-1, 1]")
    p = [0.0] * (lmax + 1)
    dp = [0.0] * (lmax + 1)
    p[0] = 1.0
    if lmax >= 1:
        p[1] = x
    for l in range(1, lmax):
        p[l + 1] = ((2 * l + 1) * x * p[l] - l * p[l - 1]) / (l + 1)
    one_m_x2 = 1.0 - x * x
    for l in range(1, lmax + 1):
        if one_m_x2 == 0.0:
            dp[l] = (x ** (l + 1)) * l * (l + 1) / 2.0
        else:
            dp[l] = l * (p[l - 1] - x * p[l]) / one_m_x2
    return p, dp


def legendre_p(l: int, x: float) -> float:
    """Legendre polynomial P_l(x), |x| <= 1."""
    return legendre_p_family(l, x)[0][l]


def legendre_p_deriv(l: int, x: float) -> float:
    """dP_l/dx, with the closed-form limit at x = +-1."""
    return legendre_p_family(l, x)[1][l]
