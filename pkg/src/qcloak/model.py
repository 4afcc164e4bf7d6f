"""Layered effective-mass media and the dispersion map.

Units everywhere: energies in eV, lengths in nm, masses in units of the
free-electron mass.  The single dimensional constant is hbar^2 / (2 m_e).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ConfigStructureError

__all__ = [
    "HBAR2_OVER_2ME",
    "Medium",
    "Layer",
    "LayerStack",
    "wavenumber",
    "validate",
    "stack_to_dict",
    "stack_from_dict",
    "two_layer_shorthand",
    "stack_from_shorthand",
    "wavenumber_products",
]

HBAR2_OVER_2ME = 0.0380998  # eV nm^2


@dataclass(frozen=True)
class Medium:
    """Homogeneous effective-mass medium."""

    mass_me: float
    potential_ev: float


@dataclass(frozen=True)
class Layer:
    medium: Medium
    outer_radius_nm: float


@dataclass(frozen=True)
class LayerStack:
    """Spherically layered particle in a background medium.

    ``layers`` is ordered outermost first; layer i occupies
    (r_{i+1}, r_i] and the innermost layer extends to the origin.
    """

    background: Medium
    layers: tuple[Layer, ...]
    energy_ev: float

    @property
    def outer_radius_nm(self) -> float:
        return self.layers[0].outer_radius_nm

    def region_of(self, r: float) -> int:
        """Region index at radius r: 0 = background, 1..N = layers outermost first."""
        if r < 0:
            raise ValueError("radius must be nonnegative")
        for i, layer in enumerate(self.layers):
            if r > layer.outer_radius_nm:
                return i
        return len(self.layers)

    def medium_of(self, region: int) -> Medium:
        return self.background if region == 0 else self.layers[region - 1].medium


def wavenumber(energy_ev: float, medium: Medium) -> complex:
    """Wavenumber in a homogeneous medium.

    Real positive for E > V, positive imaginary for E < V (decaying
    evanescent branch), zero exactly at E = V.
    """
    de = energy_ev - medium.potential_ev
    mag = math.sqrt(medium.mass_me * abs(de) / HBAR2_OVER_2ME)
    return complex(mag, 0.0) if de >= 0 else complex(0.0, mag)


def validate(stack: LayerStack) -> list[str]:
    """Check invariants; returns a list of violations, empty when valid."""
    out = []
    if not (math.isfinite(stack.background.mass_me) and stack.background.mass_me > 0):
        out.append("background.mass_me: must be finite and > 0")
    if not math.isfinite(stack.background.potential_ev):
        out.append("background.potential_eV: must be finite")
    if not math.isfinite(stack.energy_ev):
        out.append("energy_eV: must be finite")
    if len(stack.layers) == 0:
        out.append("layers: at least one layer required")
    prev = math.inf
    for i, layer in enumerate(stack.layers):
        tag = f"layers[{i}]"
        if not (math.isfinite(layer.medium.mass_me) and layer.medium.mass_me > 0):
            out.append(f"{tag}.mass_me: must be finite and > 0")
        if not math.isfinite(layer.medium.potential_ev):
            out.append(f"{tag}.potential_eV: must be finite")
        if not (math.isfinite(layer.outer_radius_nm) and layer.outer_radius_nm > 0):
            out.append(f"{tag}.outer_radius_nm: must be finite and > 0")
        elif not layer.outer_radius_nm < prev:
            out.append(f"{tag}.outer_radius_nm: radii must be strictly decreasing outermost first")
        prev = layer.outer_radius_nm
    return out


def _medium_from_dict(d: dict, where: str) -> Medium:
    if not isinstance(d, dict):
        raise ConfigStructureError(f"{where}: expected an object")
    extra = set(d) - {"mass_me", "potential_eV"}
    if extra:
        raise ConfigStructureError(f"{where}: unknown keys {sorted(extra)}")
    try:
        return Medium(mass_me=float(d["mass_me"]), potential_ev=float(d["potential_eV"]))
    except KeyError as e:
        raise ConfigStructureError(f"{where}: missing key {e.args[0]!r}") from None
    except (TypeError, ValueError):
        raise ConfigStructureError(f"{where}: mass_me and potential_eV must be numbers") from None


def stack_from_dict(d: dict) -> LayerStack:
    """Build a LayerStack from the JSON config schema.

    Schema: {"energy_eV": float, "background": {"mass_me", "potential_eV"},
    "layers": [{"mass_me", "potential_eV", "outer_radius_nm"}, ...]}.
    Structural problems raise ConfigStructureError; physics rules are
    checked separately by validate().
    """
    if not isinstance(d, dict):
        raise ConfigStructureError("config root: expected an object")
    extra = set(d) - {"energy_eV", "background", "layers"}
    if extra:
        raise ConfigStructureError(f"config root: unknown keys {sorted(extra)}")
    for key in ("energy_eV", "background", "layers"):
        if key not in d:
            raise ConfigStructureError(f"config root: missing key {key!r}")
    try:
        energy = float(d["energy_eV"])
    except (TypeError, ValueError):
        raise ConfigStructureError("energy_eV: must be a number") from None
    background = _medium_from_dict(d["background"], "background")
    if not isinstance(d["layers"], list):
        raise ConfigStructureError("layers: expected an array")
    layers = []
    for i, item in enumerate(d["layers"]):
        tag = f"layers[{i}]"
        if not isinstance(item, dict):
            raise ConfigStructureError(f"{tag}: expected an object")
        extra = set(item) - {"mass_me", "potential_eV", "outer_radius_nm"}
        if extra:
            raise ConfigStructureError(f"{tag}: unknown keys {sorted(extra)}")
        if "outer_radius_nm" not in item:
            raise ConfigStructureError(f"{tag}: missing key 'outer_radius_nm'")
        medium = _medium_from_dict(
            {k: item[k] for k in ("mass_me", "potential_eV") if k in item}, tag)
        try:
            radius = float(item["outer_radius_nm"])
        except (TypeError, ValueError):
            raise ConfigStructureError(f"{tag}: outer_radius_nm must be a number") from None
        layers.append(Layer(medium, radius))
    return LayerStack(background=background, layers=tuple(layers), energy_ev=energy)


def stack_to_dict(stack: LayerStack) -> dict:
    """Inverse of stack_from_dict; echoes the parsed values bit-exactly."""
    return {
        "energy_eV": stack.energy_ev,
        "background": {
            "mass_me": stack.background.mass_me,
            "potential_eV": stack.background.potential_ev,
        },
        "layers": [
            {
                "mass_me": layer.medium.mass_me,
                "potential_eV": layer.medium.potential_ev,
                "outer_radius_nm": layer.outer_radius_nm,
            }
            for layer in stack.layers
        ],
    }


def two_layer_shorthand(stack: LayerStack) -> dict:
    """Dimensionless interface products for a two-layer (shell + core) stack.

    x1 = k0 a, x2 = ks a, x3 = ks ac, x4 = kc ac and y_i the matching mass
    products m a; the shorthand the closed-form coefficient expressions use.
    """
    if len(stack.layers) != 2:
        raise ValueError("shorthand is defined for two-layer stacks")
    a = stack.layers[0].outer_radius_nm
    ac = stack.layers[1].outer_radius_nm
    m0 = stack.background
    ms = stack.layers[0].medium
    mc = stack.layers[1].medium
    k0 = wavenumber(stack.energy_ev, m0)
    ks = wavenumber(stack.energy_ev, ms)
    kc = wavenumber(stack.energy_ev, mc)
    return {
        "x1": k0 * a, "x2": ks * a, "x3": ks * ac, "x4": kc * ac,
        "y1": m0.mass_me * a, "y2": ms.mass_me * a,
        "y3": ms.mass_me * ac, "y4": mc.mass_me * ac,
        "k0": k0, "ks": ks, "kc": kc, "a": a, "ac": ac,
    }


def stack_from_shorthand(sh: dict, energy_ev: float) -> LayerStack:
    """Rebuild the stack from its dimensionless shorthand (round-trip inverse)."""
    a, ac = sh["a"], sh["ac"]

    def medium_from(x: complex, y: float, scale: float) -> Medium:
        mass = y / scale
        k2 = (complex(x) / scale) ** 2
        return Medium(mass_me=mass, potential_ev=energy_ev - HBAR2_OVER_2ME * k2.real / mass)

    background = medium_from(sh["x1"], sh["y1"], a)
    shell = medium_from(sh["x2"], sh["y2"], a)
    core = medium_from(sh["x4"], sh["y4"], ac)
    return LayerStack(background=background,
                      layers=(Layer(shell, a), Layer(core, ac)),
                      energy_ev=energy_ev)


def wavenumber_products(stack: LayerStack) -> dict:
    """|k| * radius products per layer, evaluated at both the layer's own
    outer radius and the stack's outer radius (the two size conventions in
    circulation for quoting evanescent layer strengths)."""
    a = stack.outer_radius_nm
    out = {"k0_a": abs(wavenumber(stack.energy_ev, stack.background)) * a}
    for i, layer in enumerate(stack.layers):
        k = abs(wavenumber(stack.energy_ev, layer.medium))
        out[f"layer{i}_k_outer_a"] = k * a
        out[f"layer{i}_k_own_radius"] = k * layer.outer_radius_nm
    return out
