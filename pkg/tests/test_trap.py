import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.constants import atomic_mass, c, hbar, k, pi

from odtbec import (
    RB87,
    AtomSpecies,
    GaussianBeam,
    NoMinimum,
    TrapConfig,
    characterize,
    dipole_coefficient,
    peak_intensity,
    potential_at,
)
from odtbec.trap import beam_frequencies, potential_gradient

from conftest import approx, crossed, single

M = RB87.mass


def single_line_kappa(wavelength, counter_rotating=True):
    """Two-level atom with one effective line at 780 nm, 6.07 MHz width."""
    w0 = 2 * pi * c / 780e-9
    w = 2 * pi * c / wavelength
    gamma = 2 * pi * 6.07e6
    terms = gamma / (w0 - w) + (gamma / (w0 + w) if counter_rotating else 0.0)
    return 3 * pi * c**2 / (2 * w0**3) * terms


class TestSpecies:
    def test_rb87_values(self):
        assert RB87.mass == approx(86.909180527 * atomic_mass)
        assert RB87.reddest_line == RB87.d1_wavelength
        assert RB87.cross_section == approx(8 * pi * RB87.scattering_length**2)

    def test_invalid_species_rejected(self):
        with pytest.raises(ValueError):
            AtomSpecies("x", -1.0, 795e-9, 780e-9, 1e7, 1e7, 5e-9, 0.0)


class TestPeakIntensity:
    def test_reference_primary_beam(self):
        assert peak_intensity(GaussianBeam(15.0, 25e-6)) == approx(1.528e10, rel=1e-3)

    def test_zero_power(self):
        assert peak_intensity(GaussianBeam(0.0, 33e-6, 7e-6)) == 0.0

    def test_elliptical_auxiliary_beam(self):
        assert peak_intensity(GaussianBeam(1.0, 20e-6, 80e-6)) == approx(3.98e8, rel=1e-3)

    def test_intensity_profile(self):
        b = GaussianBeam(2.0, 30e-6, 10e-6, axis=(0, 0, 1), transverse_x=(1, 0, 0))
        I0 = peak_intensity(b)
        assert b.intensity(np.array([30e-6, 0, 0])) == approx(I0 * np.exp(-2))
        assert b.intensity(np.array([0, 10e-6, 0])) == approx(I0 * np.exp(-2))
        # on axis at one Rayleigh range of the y waist: area factor of that axis doubles
        zy = pi * (10e-6) ** 2 / b.wavelength
        zx = pi * (30e-6) ** 2 / b.wavelength
        expect = I0 / np.sqrt((1 + 1.0) * (1 + (zy / zx) ** 2))
        assert b.intensity(np.array([0, 0, zy])) == approx(expect)

    def test_beam_validation(self):
        with pytest.raises(ValueError):
            GaussianBeam(-1.0, 25e-6)
        with pytest.raises(ValueError):
            GaussianBeam(1.0, 0.0)
        with pytest.raises(ValueError):
            GaussianBeam(1.0, 25e-6, axis=(0, 0, 1), transverse_x=(0, 1, 1))


class TestDipoleCoefficient:
    def test_1064_against_single_line_oracle(self):
        kappa = dipole_coefficient(RB87, 1064e-9)
        assert kappa == approx(2.0e-36, rel=0.15)
        assert kappa == approx(single_line_kappa(1064e-9), rel=0.15)

    def test_counter_rotating_variant_close_to_oracle(self):
        kappa = dipole_coefficient(RB87, 1064e-9, counter_rotating=True)
        assert kappa == approx(single_line_kappa(1064e-9), rel=0.05)
        assert kappa > dipole_coefficient(RB87, 1064e-9)

    def test_decreases_monotonically_with_wavelength(self):
        lams = np.geomspace(0.9e-6, 1e-2, 40)
        for cr in (False, True):
            kappas = np.array([dipole_coefficient(RB87, lam, cr) for lam in lams])
            assert np.all(np.diff(kappas) < 0)

    def test_quasi_static_limit(self):
        # counter-rotating form tends to the static polarizability, not to zero
        static = 0.0
        for lam0, gamma, weight in (
            (RB87.d1_wavelength, RB87.d1_linewidth, 1 / 3),
            (RB87.d2_wavelength, RB87.d2_linewidth, 2 / 3),
        ):
            w0 = 2 * pi * c / lam0
            static += weight * 3 * pi * c**2 * gamma / w0**4
        assert dipole_coefficient(RB87, 1.0, counter_rotating=True) == approx(static, rel=1e-6)
        assert dipole_coefficient(RB87, 1.0) == approx(static / 2, rel=1e-6)

    @pytest.mark.parametrize("lam", [532e-9, 780e-9, 790e-9])
    def test_blue_or_between_lines_rejected(self, lam):
        with pytest.raises(ValueError):
            dipole_coefficient(RB87, lam)

    def test_reference_depth(self):
        depth = dipole_coefficient(RB87, 1064e-9) * peak_intensity(GaussianBeam(15.0, 25e-6))
        assert depth / k == approx(2e-3, rel=0.15)


class TestPotential:
    def test_single_beam_focus(self):
        cfg = single()
        assert potential_at(cfg, np.zeros(3)) == approx(-cfg.primary_depth)

    def test_far_away_vanishes(self):
        cfg = single()
        assert abs(potential_at(cfg, np.array([0.3, 0.2, 0.1]))) < 1e-12 * cfg.primary_depth

    def test_crossed_additivity(self):
        cfg = crossed()
        assert potential_at(cfg, np.zeros(3)) == approx(-cfg.beam_depths.sum())

    def test_gravity_term(self):
        cfg = single(gravity=True)
        r = np.array([0.0, 0.0, 1e-3])
        expect = potential_at(single(), r) + M * 9.80665 * 1e-3
        assert potential_at(cfg, r) == approx(expect)

    def test_gradient_matches_finite_difference(self):
        cfg = TrapConfig(
            RB87,
            (
                GaussianBeam(3.0, 25e-6, axis=(1, 0, 0)),
                GaussianBeam(1.0, 80e-6, 20e-6, axis=(0, 0, 1), transverse_x=(1, 0, 0), focus=(5e-6, 0, 0)),
            ),
            gravity_enabled=True,
        )
        rng = np.random.default_rng(3)
        pts = rng.normal(scale=[200e-6, 20e-6, 20e-6], size=(20, 3))
        g = potential_gradient(cfg, pts)
        h = 1e-9
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = h
            fd = (potential_at(cfg, pts + e) - potential_at(cfg, pts - e)) / (2 * h)
            scale = np.max(np.abs(g))
            assert np.max(np.abs(fd - g[:, axis])) < 1e-6 * scale


def closed_form_frequencies(P, w0=25e-6, lam=1.064e-6):
    U0 = dipole_coefficient(RB87, lam) * 2 * P / (pi * w0**2)
    zR = pi * w0**2 / lam
    return np.sqrt(4 * U0 / (M * w0**2)), np.sqrt(2 * U0 / (M * zR**2)), U0


class TestCharacterize:
    def test_paper_single_beam(self, ref_single):
        _, trap = ref_single
        wax, wr, _ = trap.frequencies  # beam along lab x
        assert trap.depth / k == approx(2e-3, rel=0.15)
        assert wr / (2 * pi) == approx(5.6e3, rel=0.10)
        assert wax / (2 * pi) == approx(51.0, rel=0.10)

    @pytest.mark.parametrize("P", [1.0, 5.0, 15.0])
    def test_hessian_matches_closed_form(self, P):
        trap = characterize(single(P))
        wr, wax, U0 = closed_form_frequencies(P)
        assert trap.frequencies[0] == approx(wax, rel=1e-4)
        assert trap.frequencies[1] == approx(wr, rel=1e-4)
        assert trap.frequencies[2] == approx(wr, rel=1e-4)
        assert trap.single_beam_depth_U0 == approx(U0, rel=1e-12)

    def test_closed_form_helper(self):
        cfg = single(5.0)
        wr, wax, _ = closed_form_frequencies(5.0)
        np.testing.assert_allclose(beam_frequencies(cfg, 0), [wr, wr, wax], rtol=1e-12)

    def test_axial_radial_ratio(self):
        w0, lam = 25e-6, 1.064e-6
        trap = characterize(single(7.0, w0, lam))
        ratio = trap.frequencies[0] / trap.frequencies[1]
        assert ratio == approx(lam / (np.sqrt(2) * pi * w0), rel=1e-4)

    def test_depth_linear_in_power(self):
        d1 = characterize(single(2.0)).depth
        d2 = characterize(single(6.0)).depth
        assert d2 == approx(3 * d1, rel=1e-6)

    def test_frequencies_scale_as_sqrt_power(self):
        f1 = np.array(characterize(single(2.0)).frequencies)
        f2 = np.array(characterize(single(8.0)).frequencies)
        np.testing.assert_allclose(f2, 2 * f1, rtol=1e-4)

    def test_single_beam_depth_equals_u0_up_to_escape_cut(self, ref_single):
        _, trap = ref_single
        # the escape barrier is taken where the on-axis intensity falls to 1e-3
        assert trap.depth / trap.single_beam_depth_U0 == approx(0.999, abs=1e-6)
        assert trap.beta == approx(0.999, abs=1e-6)

    def test_crossed_equal_beams_beta(self):
        trap = characterize(crossed())
        assert 1.8 < trap.beta < 2.0
        np.testing.assert_allclose(trap.minimum_position, 0, atol=1e-9)

    @pytest.mark.parametrize("cfg_factory", [lambda g: single(15.0, gravity=g), lambda g: crossed(power=0.2, gravity=g)])
    def test_gravity_never_increases_depth(self, cfg_factory):
        assert characterize(cfg_factory(True)).depth <= characterize(cfg_factory(False)).depth

    def test_gravity_sag(self):
        trap = characterize(single(0.5, gravity=True))
        wr = closed_form_frequencies(0.5)[0]
        assert trap.minimum_position[2] == approx(-9.80665 / wr**2, rel=0.02)

    def test_removing_a_beam_never_increases_depth(self):
        cfg = crossed()
        both = characterize(cfg).depth
        assert characterize(cfg.subset([0])).depth <= both
        assert characterize(cfg.subset([1])).depth <= both

    def test_zero_power_has_no_minimum(self):
        with pytest.raises(NoMinimum):
            characterize(single(0.0))

    def test_gravity_beats_weak_beam(self):
        with pytest.raises(NoMinimum):
            characterize(single(1e-3, gravity=True))

    def test_elliptical_beam(self):
        b = GaussianBeam(1.0, 80e-6, 20e-6, axis=(0, 0, 1), transverse_x=(1, 0, 0))
        assert b.rayleigh_x == approx(pi * (80e-6) ** 2 / b.wavelength)
        assert b.rayleigh_y == approx(pi * (20e-6) ** 2 / b.wavelength)
        trap = characterize(TrapConfig(RB87, (b,)))
        expect = beam_frequencies(TrapConfig(RB87, (b,)), 0)
        np.testing.assert_allclose(trap.frequencies, expect, rtol=1e-4)

    def test_mean_frequency(self, ref_single):
        _, trap = ref_single
        assert trap.mean_frequency == approx(np.prod(trap.frequencies) ** (1 / 3))

    @settings(max_examples=15, deadline=None)
    @given(P=st.floats(0.05, 20.0), w0=st.floats(10e-6, 60e-6))
    def test_property_depth_and_frequency(self, P, w0):
        trap = characterize(single(P, w0))
        wr, wax, U0 = closed_form_frequencies(P, w0)
        assert trap.depth == approx(0.999 * U0, rel=1e-6)
        assert trap.frequencies[1] == approx(wr, rel=1e-4)
        assert trap.frequencies[0] == approx(wax, rel=1e-4)
