import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import mp_density_rescaled, mp_mass_above, two_atom_critical
from covspectra.errors import MassMismatch
from covspectra.solver import f_eval, f_prime_eval, solve_m1o
from covspectra.spectrum import Dimensions, SpectralPoint, identity_spectrum, make_spectrum
from covspectra.support import (
    classical_locations,
    critical_points,
    density,
    density_curve,
    density_w,
    in_domain,
    m1_real_axis,
    support_map,
)

PI = identity_spectrum()
TWO = make_spectrum([(2.0, 0.5), (1.0, 0.5)])

# Edges of 0.5 delta_2 + 0.5 delta_1 from the polynomial oracle in conftest, frozen.
TWO_ATOM_EDGES = {
    0.01: [2.3022226942782322, 1.7379824998296638, 1.1348899232078726, 0.8549048826842316],
    0.1: [3.0789123327330845, 1.3499999999999999, 1.3307110881251107, 0.5403765791418047],
    1.0: [6.532952096412179, 0.0],
    4.0: [14.166518410134227, 1.4148543541381593],
}


def test_critical_points_phi4():
    assert critical_points(PI, 4.0) == pytest.approx([1.0, -1 / 3], rel=1e-12)


def test_critical_points_phi1_has_point_at_infinity():
    xs = critical_points(PI, 1.0)
    assert xs[0] == math.inf
    assert xs[1] == pytest.approx(-0.5, rel=1e-12)


def test_critical_points_phi_quarter():
    xs = critical_points(PI, 0.25)
    assert sorted(xs) == pytest.approx([-2.0, -2 / 3], rel=1e-12)
    sm = support_map(PI, 0.25)
    assert (sm.components[0].L_k, sm.components[0].R_k) == pytest.approx((0.25, 2.25), abs=1e-10)


@pytest.mark.parametrize("phi", [0.01, 0.1, 4.0])
def test_two_atom_critical_points_against_polynomial(phi):
    xs_ref, _ = two_atom_critical(phi)
    assert critical_points(TWO, phi) == pytest.approx(xs_ref, rel=1e-10)


@pytest.mark.parametrize("phi, edges", sorted(TWO_ATOM_EDGES.items()))
def test_two_atom_edges_frozen(phi, edges):
    sm = support_map(TWO, phi)
    got = [e for c in sm.components for e in (c.R_k, c.L_k)]
    assert got == pytest.approx(edges, abs=1e-9)
    # live oracle agrees with the frozen table
    if phi != 1.0:
        assert two_atom_critical(phi)[1] == pytest.approx(edges, abs=1e-12)


@pytest.mark.parametrize(
    "phi, o_edges, r_edges",
    [
        (4.0, (1.0, 9.0), (0.5, 4.5)),
        (1.0, (0.0, 4.0), (0.0, 4.0)),
        (0.01, (0.81, 1.21), (8.1, 12.1)),
    ],
)
def test_support_examples(phi, o_edges, r_edges):
    c = support_map(PI, phi).components[0]
    assert (c.L_k, c.R_k) == pytest.approx(o_edges, abs=1e-10)
    assert (c.L_k_rescaled, c.R_k_rescaled) == pytest.approx(r_edges, abs=1e-10)


@pytest.mark.parametrize("pi", [PI, TWO])
@pytest.mark.parametrize("phi", [0.01, 0.1, 0.5, 2.0, 30.0])
def test_support_invariants(pi, phi):
    sm = support_map(pi, phi)
    s = math.sqrt(phi)
    prev_left = math.inf
    for c in sm.components:
        assert c.L_k < c.R_k < prev_left
        prev_left = c.L_k
        assert c.R_k_rescaled == c.R_k / s and c.L_k_rescaled == c.L_k / s
        assert f_eval(c.x_right, pi, phi) == pytest.approx(c.R_k, abs=1e-10)
        if c.L_k > 0:
            assert f_eval(c.x_left, pi, phi) == pytest.approx(c.L_k, abs=1e-10)
    assert sm.zero_mass == max(0.0, 1 - 1 / phi)
    # rho_W masses sum to K/N = min(1, phi); M-normalised masses to min(1, 1/phi)
    total_w = sum(c.mass_w for c in sm.components)
    assert total_w == pytest.approx(min(1.0, phi), abs=1e-6)
    assert total_w / phi + sm.zero_mass == pytest.approx(1.0, abs=1e-6)
    for x in sm.critical:
        if math.isfinite(x):
            assert abs(f_prime_eval(x, pi, phi)) <= 1e-10 * (1 / x**2 + phi * np.sum(pi.weights / (x + 1 / pi.values) ** 2))


def test_m1o_at_edges_equals_critical_points():
    for pi, phi in [(PI, 4.0), (TWO, 0.1), (TWO, 0.01)]:
        sm = support_map(pi, phi)
        for c in sm.components:
            assert abs(solve_m1o(c.R_k + 1e-8j, pi, phi) - c.x_right) <= 1e-3
            assert abs(solve_m1o(c.L_k + 1e-8j, pi, phi) - c.x_left) <= 1e-3


def test_density_mp_point():
    assert density(2.0, PI, 1.0) == pytest.approx(1 / (2 * math.pi), abs=1e-5)


@pytest.mark.parametrize("phi", [0.01, 0.25, 1.0, 4.0])
def test_density_matches_closed_form(phi):
    sm = support_map(PI, phi)
    L, R = sm.components[0].L_k_rescaled, sm.components[0].R_k_rescaled
    E = np.linspace(L, R, 41)[1:-1]
    ref = mp_density_rescaled(E, phi)
    assert np.max(np.abs(density(E, PI, phi) - ref)) <= 2e-4 * max(1.0, ref.max())


def test_density_zero_outside():
    sm = support_map(PI, 4.0)
    assert density(sm.rightmost_edge + 1.0, PI, 4.0) == 0.0
    curve = density_curve(np.linspace(-1, 6, 200), PI, 4.0)
    assert np.all(curve.values >= 0)
    outside = (curve.grid < 0.5 - 1e-3) | (curve.grid > 4.5 + 1e-3)
    assert np.all(curve.values[outside] <= 1e-6)


def test_density_w_is_phi_times_density():
    E = np.linspace(0.6, 4.4, 7)
    assert np.allclose(density_w(E, PI, 4.0), 4.0 * density(E, PI, 4.0), rtol=1e-6, atol=1e-9)


@pytest.mark.parametrize("pi, phi", [(PI, 4.0), (TWO, 0.1)])
def test_square_root_edges(pi, phi):
    sm = support_map(pi, phi)
    kappa = np.geomspace(1e-4, 1e-2, 10)
    for c in sm.components:
        for E, sign in [(c.R_k_rescaled, -1), (c.L_k_rescaled, 1)]:
            if E <= 0:
                continue
            rho = density(E + sign * kappa, pi, phi)
            slope = np.polyfit(np.log(kappa), np.log(rho), 1)[0]
            assert slope == pytest.approx(0.5, abs=0.05)


def test_edge_transition_band():
    sm = support_map(PI, 4.0)
    for edge, inward in [(4.5, -1), (0.5, 1)]:
        assert density(edge - inward * 1e-3, PI, 4.0) == 0.0
        assert density(edge + inward * 1e-3, PI, 4.0) > 0.0


def test_m1_real_axis_matches_closed_form():
    from conftest import mp_m1o

    for phi, E in [(4.0, 2.0), (1.0, 5.0), (0.25, 4.5)]:
        ref = math.sqrt(phi) * mp_m1o(complex(math.sqrt(phi) * E, 1e-300), phi)
        assert abs(m1_real_axis(E, PI, phi) - complex(ref)) <= 1e-7


def test_classical_locations_first_quantile():
    cl = classical_locations(PI, 1.0, Dimensions(100, 100))
    g1 = cl.component(1)[0]
    assert 3.6 < g1 < 4.0
    assert 100 * mp_mass_above(g1, 1.0, 4.0) == pytest.approx(0.5, abs=1e-3)


@pytest.mark.parametrize("M, N", [(100, 100), (50, 200), (300, 60)])
def test_classical_locations_quantiles(M, N):
    dims = Dimensions(M, N)
    phi = dims.phi
    sm = support_map(PI, phi)
    cl = classical_locations(PI, phi, dims)
    assert sum(cl.counts) == dims.K
    g = cl.component(1)
    c = sm.components[0]
    assert np.all(np.diff(g) < 0)
    assert np.all((g > c.L_k_rescaled) & (g < c.R_k_rescaled))
    for i in [1, len(g) // 3, len(g)]:
        assert N * mp_mass_above(g[i - 1], phi, c.R_k_rescaled) == pytest.approx(i - 0.5, abs=1e-3)


def test_classical_locations_two_components():
    dims = Dimensions(100, 1000)
    cl = classical_locations(TWO, dims.phi, dims)
    assert cl.counts == (50, 50)
    sm = support_map(TWO, dims.phi)
    for k, c in enumerate(sm.components, start=1):
        g = cl.component(k)
        assert g[0] < c.R_k_rescaled and g[-1] > c.L_k_rescaled


def test_classical_location_edge_exponent():
    dims = Dimensions(10000, 10000)
    g = classical_locations(PI, 1.0, dims).component(1)
    i = np.arange(1, 1001)
    slope = np.polyfit(np.log(i), np.log(4.0 - g[:1000]), 1)[0]
    assert slope == pytest.approx(2 / 3, abs=0.05)


def test_classical_counts_mass_mismatch():
    from covspectra.support import _largest_remainder

    assert _largest_remainder([2.4, 3.6], 6) == [2, 4]
    with pytest.raises(MassMismatch):
        _largest_remainder([2.4, 3.6], 9)


def test_csv_exports(tmp_path):
    curve = density_curve(np.linspace(0, 4, 5), PI, 1.0)
    curve.to_csv(tmp_path / "d.csv", header='{"a": 1}')
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == '# {"a": 1}' and lines[1] == "E,rho" and len(lines) == 7
    cl = classical_locations(PI, 1.0, Dimensions(5, 5))
    cl.to_csv(tmp_path / "g.csv")
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert lines[0] == "k,i,gamma" and lines[1].startswith("1,1,")


def test_in_domain_literal_definitions():
    dims = Dimensions(1000, 1000)
    sm = support_map(PI, 1.0)
    R = sm.rightmost_edge
    # eta = 0.01 sits below K**(-1 + c) = 1000**-0.5
    assert not in_domain(SpectralPoint(R + 0.1, 0.01), "D", dims, c=0.5, support=sm)
    assert in_domain(SpectralPoint(R + 0.1, 0.05), "D", dims, c=0.5, support=sm)
    assert not in_domain(SpectralPoint(R + 0.1, 1e-9), "D", dims, c=0.5, support=sm)
    # the outside domain needs E - R >= N**(-2/3 + delta) * (1 + phi**-0.5)
    gap = 1000 ** (-2 / 3 + 0.2)
    assert not in_domain(SpectralPoint(R + gap, 1e-6), "D_os", dims, delta=0.1, support=sm)
    assert in_domain(SpectralPoint(R + 2 * gap, 1e-6), "D_os", dims, delta=0.1, support=sm)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 20.0))
def test_bulk_mass_property(phi):
    sm = support_map(PI, phi)
    assert sum(c.mass_w for c in sm.components) == pytest.approx(min(1.0, phi), abs=1e-6)
