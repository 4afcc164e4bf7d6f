"""Release gate: one test per advertised guarantee, run with -v for a
one-line verdict each.

Two gates are known red and kept red on purpose; the asserts state the
advertised band and the failure messages carry the measured values.  See
README, "Acceptance status", for the analysis.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from qcloak.cli import main
from qcloak.designer import robustness_sweep
from qcloak.fields import (flux_through_shell_annulus, recommended_l_max,
                           wavefunction)
from qcloak.model import (Layer, LayerStack, Medium, stack_to_dict,
                          wavenumber_products)
from qcloak.solver import (a_scat_closed_form, cross_section,
                           shell_coefficients_approx, solve_n_layer,
                           solve_partial_wave, solve_partial_waves,
                           solve_two_layer)
from qcloak.specfun import sph_bessel_j, sph_hankel1

from conftest import GOLDEN, make_two_layer
from oracle_ode import a_scat_ode
from test_solver import random_stack


def _budget(t0: float, limit: float, label: str) -> None:
    elapsed = time.perf_counter() - t0
    assert elapsed < limit, f"{label}: {elapsed:.2f}s, budget {limit}s"


def test_golden_case_cross_section_window_and_refinement_floor(golden_stack):
    """Gate 1: sigma_normalized in [1e-5, 1e-3] at the quoted design, and a
    local (m_c, V_c) refinement within +-2% reaches max(|a_0|, |a_1|) <= 1e-4.
    Budget 1 s."""
    t0 = time.perf_counter()
    cs = cross_section(golden_stack)

    def objective(p):
        stack = make_two_layer(float(p[0]), float(p[1]))
        return max(abs(solve_partial_wave(0, stack).a_scat),
                   abs(solve_partial_wave(1, stack).a_scat))

    bounds = [(0.33 * 0.98, 0.33 * 1.02), (16.21 * 0.98, 16.21 * 1.02)]
    coarse = min(
        (objective((m, v)), float(m), float(v))
        for m in np.linspace(*bounds[0], 15) for v in np.linspace(*bounds[1], 15))
    refined = minimize(objective, coarse[1:], method="Nelder-Mead", bounds=bounds,
                       options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 400})
    floor = float(refined.fun)
    _budget(t0, 1.0, "golden solve + box refinement")

    assert 1e-5 <= cs.sigma_normalized <= 1e-3
    assert floor <= 1e-4, (
        f"refinement floors at max(|a_0|,|a_1|) = {floor:.4e} at "
        f"(m_c, V_c) = ({refined.x[0]:.4f}, {refined.x[1]:.4f}); the joint "
        "cancellation of a_0 and a_1 sits ~17-19% away from the quoted core, "
        "outside the +-2% box. Known red gate; see README 'Acceptance status'.")


def test_golden_case_interior_density_suppressed(refined_stack):
    """Gate 2: after the box refinement of gate 1, |Psi|^2 <= 1e-8 at
    r = 0.5 a_c and <= 1e-12 at the origin.  Budget 1 s."""
    t0 = time.perf_counter()
    sols = solve_partial_waves(refined_stack, recommended_l_max(refined_stack, 4.5))
    r_half = 0.5 * refined_stack.layers[-1].outer_radius_nm
    worst = max(abs(wavefunction(refined_stack, sols, r_half, float(th))) ** 2
                for th in np.linspace(0.0, math.pi, 181))
    at_origin = abs(wavefunction(refined_stack, sols, 0.0, 0.0)) ** 2
    _budget(t0, 1.0, "interior density scan")
    assert worst <= 1e-8
    assert at_origin <= 1e-12


def test_golden_case_annulus_flux_fraction_band(refined_stack):
    """Gate 3: forward flux through the equatorial shell annulus lands in
    [0.93, 0.97] of the disc-equivalent incident flux, quadrature tolerance
    1e-8.  Budget 5 s."""
    t0 = time.perf_counter()
    sols = solve_partial_waves(refined_stack,
                               recommended_l_max(refined_stack, 2.0))
    fraction = flux_through_shell_annulus(refined_stack, sols, tol=1e-8)
    _budget(t0, 5.0, "annulus quadrature")
    assert 0.93 <= fraction <= 0.97, (
        f"flux fraction = {fraction:.6f}: the exact solution concentrates "
        "slightly more than the full disc-equivalent flux into the annulus "
        "instead of shedding 5% around the core. Verified against closed-"
        "sphere flux conservation and the hemisphere surface integral. "
        "Known red gate; see README 'Acceptance status'.")


def test_golden_case_wavenumber_scales(golden_stack):
    """Gate 4: |k_s| a = 6.30 +- 0.05 against the outer radius and
    |k_c| a_c = 20.06 +- 0.2 against the core radius."""
    products = wavenumber_products(golden_stack)
    assert products["layer0_k_outer_a"] == pytest.approx(6.30, abs=0.05)
    assert products["layer1_k_own_radius"] == pytest.approx(20.06, abs=0.2)


def test_hidden_region_parameter_sweep_is_flat(golden_stack_3):
    """Gate 5: replacing the hidden-core medium across a 5x5 grid spanning
    m in [0.055, 10] and V in [-9000, +9000] eV moves sigma_normalized by
    less than 1% relative, with every cell finishing.  Budget 10 s."""
    t0 = time.perf_counter()
    grid = robustness_sweep(golden_stack_3,
                            [0.055, 0.5, 1.0, 5.0, 10.0],
                            [-9000.0, -100.0, 0.0, 100.0, 9000.0])
    _budget(t0, 10.0, "25-cell sweep")
    objectives = [cell.objective for cell in grid.cells]
    assert len(objectives) == 25
    assert all(math.isfinite(o) for o in objectives)
    assert not any(r.startswith("error:") for c in grid.cells for r in c.reasons)
    spread = (max(objectives) - min(objectives)) / min(objectives)
    assert spread < 0.01


def test_solver_property_suite(identity_stack):
    """Gate 6: physics properties that need no tuned reference values.
    (a) |1 + 2 a_l| = 1 within 1e-9, 100 random stacks
    (b) optical-theorem sum rule within 1e-8 relative
    (c) independent radial-ODE oracle agrees with a_l within 1e-6
    (d) spherical Bessel Wronskian within 1e-10 over |x| in [0.1, 200], l <= 40
    (e) identity-medium stack: sigma = 0 and Psi = plane wave
    (f) N-layer chain equals the two-layer closed form within 1e-10
    (g) shell-coefficient closed form within 5e-4 whenever |a_0|, |a_1| <= 1e-4
    Budget 60 s total."""
    t0 = time.perf_counter()

    # (a) elastic unitarity
    rng = np.random.default_rng(2024)
    for _ in range(100):
        stack = random_stack(rng, layers=int(rng.integers(1, 4)))
        for l in range(0, 7, 2):
            a = solve_partial_wave(l, stack).a_scat
            assert abs(abs(1 + 2 * a) - 1.0) <= 1e-9, (stack, l)

    # (b) sum (2l+1)|a_l|^2 = -sum (2l+1) Re a_l
    rng = np.random.default_rng(5)
    for _ in range(30):
        stack = random_stack(rng, layers=2)
        sols = solve_partial_waves(stack, 8)
        lhs = math.fsum((2 * s.l + 1) * abs(s.a_scat) ** 2 for s in sols)
        rhs = -math.fsum((2 * s.l + 1) * s.a_scat.real for s in sols)
        if lhs > 0.0:
            assert abs(lhs - rhs) <= 1e-8 * lhs

    # (c) matching solver vs independent integration of the radial equation
    rng = np.random.default_rng(99)
    for _ in range(20):
        stack = random_stack(rng, layers=2)
        for l in range(7):
            a_pkg = solve_partial_wave(l, stack).a_scat
            a_ref = a_scat_ode(l, stack)
            assert abs(a_pkg - a_ref) <= 1e-6 * max(abs(a_ref), 1e-12), (stack, l)

    # (d) j h' - j' h = i / z^2 on the real band, both signs
    xs = np.concatenate([np.geomspace(0.1, 200.0, 25),
                         -np.geomspace(0.1, 200.0, 9)])
    for l in range(0, 41):
        for x in xs:
            z = complex(x)
            j = sph_bessel_j(l, z)
            h = sph_hankel1(l, z)
            w = (j.value_unscaled * h.derivative_unscaled
                 - j.derivative_unscaled * h.value_unscaled)
            expected = 1j / (z * z)
            assert abs(w - expected) <= 1e-10 * abs(expected), (l, x)

    # (e) identity media scatter nothing and transmit the plane wave
    assert cross_section(identity_stack).sigma_nm2 < 1e-25
    k0 = math.sqrt(identity_stack.energy_ev * identity_stack.background.mass_me
                   / 0.0380998)
    sols = solve_partial_waves(identity_stack,
                               recommended_l_max(identity_stack, 3.5))
    for r, theta in ((0.4, 0.3), (1.2, 2.0), (1.9, 1.0), (3.0, 2.8)):
        psi = wavefunction(identity_stack, sols, r, theta)
        plane = complex(np.exp(1j * k0 * r * math.cos(theta)))
        assert abs(psi - plane) <= 1e-6

    # (f) layer-chain solver against the closed form
    rng = np.random.default_rng(17)
    for _ in range(25):
        stack = random_stack(rng, layers=2)
        for l in (0, 1, 3, 6):
            a_direct = solve_two_layer(l, stack).a_scat
            a_chain = solve_n_layer(l, stack).a_scat
            a_closed = a_scat_closed_form(l, stack)
            scale = max(abs(a_closed), 1e-14)
            assert abs(a_direct - a_closed) <= 1e-10 * scale
            assert abs(a_chain - a_closed) <= 1e-10 * scale

    # (g) shell closed form in its validity window (the cancellation valley)
    checked = 0
    for v_core in 18.95300647206632 + np.array([-3e-4, -1.5e-4, 0.0, 1.5e-4, 3e-4]):
        stack = make_two_layer(0.3932852310054404, float(v_core))
        if any(abs(solve_partial_wave(l, stack).a_scat) > 1e-4 for l in (0, 1)):
            continue
        for l in (0, 1):
            b_approx, c_approx = shell_coefficients_approx(l, stack)
            shell = solve_partial_wave(l, stack).layer_coeffs[0]
            assert abs(b_approx - shell.inward_value) <= 5e-4 * max(
                abs(shell.inward_value), 1.0)
            assert abs(c_approx - shell.outward_value) <= 5e-4 * max(
                abs(shell.outward_value), 1.0)
            checked += 1
    assert checked >= 2

    _budget(t0, 60.0, "property suite")


def test_design_and_sweep_reruns_are_byte_identical(tmp_path, golden_stack_3):
    """Gate 7: the design and sweep commands are deterministic; identical
    configs produce byte-identical numeric payloads."""
    design_cfg = tmp_path / "design.json"
    design_cfg.write_text(json.dumps({
        "energy_eV": 0.01,
        "background": {"mass_me": 0.8, "potential_eV": 0.0},
        "outer_radius_nm": 2.0,
        "core_radius_nm": 1.7,
        "shell": {"mass_values": [0.16], "potential_values": [-2.6]},
        "core": {"mass_bounds": [0.01, 2.0], "potential_bounds": [0.1, 50.0]},
    }))
    sweep_cfg = tmp_path / "sweep.json"
    sweep_cfg.write_text(json.dumps({
        "stack": stack_to_dict(golden_stack_3),
        "hidden": {"mass_values": [0.055, 5.0], "potential_values": [-100.0, 100.0]},
    }))

    for cfg, cmd, files in ((design_cfg, "design", ("design.json", "shell_grid.csv")),
                            (sweep_cfg, "sweep", ("sweep.json", "sweep.csv"))):
        out1 = tmp_path / f"{cmd}_run1"
        out2 = tmp_path / f"{cmd}_run2"
        for out in (out1, out2):
            assert main([cmd, "--config", str(cfg), "--out", str(out),
                         "--no-figures"]) == 0
        for name in files:
            assert (out1 / name).read_bytes() == (out2 / name).read_bytes(), name
