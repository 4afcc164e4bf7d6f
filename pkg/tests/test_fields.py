"""Field evaluation checks built on conservation identities.

The flux tests lean on the divergence theorem: the probability current of
a stationary state is solenoidal, so its integral over any closed surface
vanishes and the flux through the equatorial disc equals the flux through
the hemisphere that caps it.  Those identities hold for the exact
solution regardless of parameters, which makes them oracle-grade.
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from qcloak.fields import (export_field_grid, find_nodal_point, flux,
                           flux_through_shell_annulus, parse_plane,
                           read_field_csv, read_field_json, recommended_l_max,
                           streamlines_to_dict, trace_streamlines,
                           wavefunction, wavefunction_and_flux,
                           write_field_csv, write_field_json)
from qcloak.model import wavenumber
from qcloak.solver import MIN_TRUNCATION_L, solve_partial_waves

from conftest import GOLDEN, make_two_layer

A_OUT = 2.0
A_CORE = 1.7


def _solutions(stack, r_max=4.5):
    return solve_partial_waves(stack, recommended_l_max(stack, r_max))


def test_identity_stack_is_plane_wave(identity_stack):
    # generous l_max: the flux series converges one order slower than psi
    sols = _solutions(identity_stack, r_max=30.0)
    k0 = wavenumber(identity_stack.energy_ev, identity_stack.background).real
    rng = np.random.default_rng(3)
    for _ in range(40):
        r = rng.uniform(0.05, 4.0)
        th = rng.uniform(0.0, math.pi)
        psi, jr, jth = wavefunction_and_flux(identity_stack, sols, r, th)
        z = r * math.cos(th)
        assert abs(psi - np.exp(1j * k0 * z)) < 1e-9
        # normalized current of e^{ikz} is the unit vector z-hat
        assert jr == pytest.approx(math.cos(th), abs=1e-9)
        assert jth == pytest.approx(-math.sin(th), abs=1e-9)


def test_identity_annulus_flux_fraction(identity_stack):
    sols = _solutions(identity_stack)
    f = flux_through_shell_annulus(identity_stack, sols)
    assert f == pytest.approx(GOLDEN["identity_flux_fraction"], abs=1e-6)


def test_net_flux_through_closed_spheres(golden_stack):
    # solenoidal current: net radial flux through any sphere vanishes
    sols = _solutions(golden_stack)
    for radius in (0.6, 1.2, 1.85, 2.0, 3.1):
        val, err = quad(
            lambda th: wavefunction_and_flux(golden_stack, sols, radius, th)[1]
            * math.sin(th),
            0.0, math.pi, epsabs=1e-11, limit=200)
        assert abs(val) < 5e-9, radius


def test_disc_equals_hemisphere(golden_stack):
    # flux through the equatorial disc r <= a equals the flux through the
    # upper hemisphere of radius a
    sols = _solutions(golden_stack)

    def minus_jtheta(r):
        return -wavefunction_and_flux(golden_stack, sols, r, math.pi / 2)[2] * r

    disc, _ = quad(minus_jtheta, 0.0, A_OUT, epsabs=1e-11, limit=300,
                   points=[A_CORE])

    def hemisphere(th):
        jr = wavefunction_and_flux(golden_stack, sols, A_OUT, th)[1]
        return jr * math.sin(th) * A_OUT * A_OUT

    cap, _ = quad(hemisphere, 0.0, math.pi / 2, epsabs=1e-11, limit=300)
    assert disc == pytest.approx(cap, rel=1e-7)


def test_annulus_flux_regression(golden_stack, refined_stack):
    # frozen at l_max = 11; consistent with the disc/hemisphere identities
    # above and a couple of 1e-8 ticks above the l_max = 8 values
    sols = _solutions(golden_stack)
    assert flux_through_shell_annulus(golden_stack, sols) == pytest.approx(
        1.0159121123601007, rel=1e-9)
    sols_r = _solutions(refined_stack)
    assert flux_through_shell_annulus(refined_stack, sols_r) == pytest.approx(
        1.0341188555863072, rel=1e-9)


def test_interface_continuity(golden_stack):
    # psi and the physical current are continuous across layer boundaries
    sols = _solutions(golden_stack)
    eps = 1e-9
    for r0 in (A_CORE, A_OUT):
        for th in (0.4, 1.2, 2.8):
            psi_in, jr_in, _ = wavefunction_and_flux(golden_stack, sols, r0 - eps, th)
            psi_out, jr_out, _ = wavefunction_and_flux(golden_stack, sols, r0 + eps, th)
            assert abs(psi_in - psi_out) <= 1e-6 * max(abs(psi_in), 1e-3)
            assert abs(jr_in - jr_out) <= 1e-6 * max(abs(jr_in), 1e-3)


def test_cloak_interior_is_dark(refined_stack):
    sols = _solutions(refined_stack)
    assert abs(wavefunction(refined_stack, sols, 0.85, 1.0)) ** 2 <= 1e-8
    assert abs(wavefunction(refined_stack, sols, 0.0, 0.0)) ** 2 <= 1e-12


def test_nodal_point_of_designed_shell():
    stack = make_two_layer(0.3932852310054404, 18.95300647206632)
    coeffs = {}
    for l in (0, 1):
        shell = solve_partial_waves(stack, 1)[l].layer_coeffs[0]
        coeffs[l] = (shell.inward_value, shell.outward_value)
    report = find_nodal_point(stack, coeffs)
    assert report.common_radius is not None
    assert report.common_radius == pytest.approx(1.547, abs=0.01)
    assert report.spread <= 0.02 * A_CORE
    assert report.radii[0] < A_CORE and report.radii[1] < A_CORE


def test_no_nodal_point_for_identity(identity_stack):
    # plane-wave shell: j_l(k r) has no zero inside the window at this k
    coeffs = {0: (1.0 + 0j, 0j), 1: (1.0 + 0j, 0j)}
    report = find_nodal_point(identity_stack, coeffs)
    assert report.common_radius is None


def test_field_grid_round_trips(tmp_path, golden_stack):
    sols = _solutions(golden_stack, r_max=3.0)
    grid = export_field_grid(golden_stack, sols, plane="x=0",
                             half_width=2.2, resolution=21)
    # JSON: bit-exact
    jpath = tmp_path / "grid.json"
    write_field_json(grid, jpath, extra={"config_sha256": "0" * 64})
    back = read_field_json(jpath)
    assert np.array_equal(back.psi, grid.psi)
    assert np.array_equal(back.j1, grid.j1)
    assert np.array_equal(back.region, grid.region)
    assert back.plane == grid.plane and back.axis_names == grid.axis_names
    # CSV: full 17-digit round trip, comment line skipped
    cpath = tmp_path / "grid.csv"
    write_field_csv(grid, cpath, header_comment="config=test")
    cols = read_field_csv(cpath)
    assert cols["region"].dtype.kind == "i"
    flat_psi = grid.psi.reshape(-1)
    assert np.array_equal(cols["re_psi"], flat_psi.real)
    assert np.array_equal(cols["im_psi"], flat_psi.imag)
    assert np.array_equal(cols["j_2"], grid.j2.reshape(-1))


def test_field_grid_regions_and_axes(golden_stack):
    sols = _solutions(golden_stack, r_max=3.0)
    grid = export_field_grid(golden_stack, sols, plane="y=0",
                             half_width=2.5, resolution=41)
    assert grid.axis_names == ("x_nm", "z_nm")
    mid = 20  # grid center, r = 0
    assert grid.region[mid, mid] == 2
    assert grid.region[0, 0] == 0
    r = math.hypot(grid.u[30], grid.v[mid])
    assert grid.region[30, mid] == golden_stack.region_of(r)


def test_plane_offset_misses_small_layers(golden_stack):
    sols = _solutions(golden_stack, r_max=3.5)
    grid = export_field_grid(golden_stack, sols, plane="z=1.9",
                             half_width=2.5, resolution=31)
    # plane at z = 1.9 only cuts the outer shell (a = 2), never the core
    assert set(np.unique(grid.region)) <= {0, 1}


def test_streamlines_straight_for_identity(identity_stack):
    sols = _solutions(identity_stack, r_max=4.5)
    grid = export_field_grid(identity_stack, sols, plane="x=0",
                             half_width=3.0, resolution=61)
    lines = trace_streamlines(grid, [(-1.2, -3.0), (0.7, -3.0)])
    for (u0, _), line in zip([(-1.2, -3.0), (0.7, -3.0)], lines):
        assert np.max(np.abs(line[:, 0] - u0)) < 1e-6
        assert line[-1, 1] > 2.9


def test_streamlines_bend_around_core():
    stack = make_two_layer(0.3932852310054404, 18.95300647206632)
    sols = _solutions(stack, r_max=4.5)
    grid = export_field_grid(stack, sols, plane="x=0",
                             half_width=3.0, resolution=121)
    seeds = [(0.3, -3.0), (0.8, -3.0)]
    lines = trace_streamlines(grid, seeds)
    for (b, _), line in zip(seeds, lines):
        r = np.hypot(line[:, 0], line[:, 1])
        # enters the shell but never penetrates the core region
        assert r.min() < A_OUT
        assert r.min() > 0.95 * A_CORE
        # leaves downstream at its original impact parameter: invisibility
        assert line[-1, 1] > 2.9
        assert abs(line[-1, 0] - b) < 0.05
    payload = streamlines_to_dict(grid, lines)
    assert payload["plane"] == "x=0"
    assert len(payload["polylines"]) == 2


def test_parse_plane():
    assert parse_plane("x=0") == ("x", 0.0)
    assert parse_plane(" Z = -1.5 ") == ("z", -1.5)
    for bad in ("w=0", "x", "x=abc", "x=inf"):
        with pytest.raises(ValueError):
            parse_plane(bad)


def test_recommended_l_max(golden_stack):
    lm_small = recommended_l_max(golden_stack, 1.0)
    lm_large = recommended_l_max(golden_stack, 50.0)
    assert MIN_TRUNCATION_L <= lm_small <= lm_large <= 64


def test_flux_vector_shapes(golden_stack):
    sols = _solutions(golden_stack)
    jr, jth = flux(golden_stack, sols, 2.5, 0.9)
    psi, jr2, jth2 = wavefunction_and_flux(golden_stack, sols, 2.5, 0.9)
    assert (jr, jth) == (jr2, jth2)
    assert abs(psi) > 0
