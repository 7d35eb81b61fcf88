"""Centre/wing populations of crossed traps: exact tables against independent oracles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.constants import pi

from conftest import approx, crossed, single
from odtbec import (
    TruncatedThermalState,
    analytic_populations,
    characterize,
    exact_populations,
    harmonic_cloud,
    spatial_populations,
)
from odtbec.errors import ToleranceNotMet
from odtbec.volume import volume_table

ETAS = list(range(6, 13))


def reports(tables, lam, eta, N=2e6):
    cfg, trap, vt = tables[lam]
    state = TruncatedThermalState.at_eta(cfg, N, eta, 1.9, trap=trap)
    return state, exact_populations(state, vt, tolerance=None)


class TestNormalization:
    @pytest.mark.parametrize("lam", [1.06e-6, 10.6e-6])
    @pytest.mark.parametrize("eta", [6, 9, 12])
    def test_counts_add_up(self, fig1_tables, lam, eta):
        _, rep = reports(fig1_tables, lam, eta)
        assert rep.N_c + rep.N_w == approx(2e6, rel=1e-12)

    @pytest.mark.parametrize("lam", [1.06e-6, 10.6e-6])
    @pytest.mark.parametrize("eta", [6, 9, 12])
    def test_n0_matches_spatial_oracle_within_3_sigma(self, fig1_tables, lam, eta):
        # The oracle weights each 3-D sample by the density itself and uses
        # an unrelated seed, so it shares no histogram with the table.
        state, ex = reports(fig1_tables, lam, eta)
        sp = spatial_populations(state, 10**6, seed=1234, threads=4)
        sigma = np.hypot(ex.n0_err, sp.n0_err)
        assert abs(ex.n0 - sp.n0) < 3 * sigma
        sigma_f = np.hypot(ex.wing_fraction_err, sp.wing_fraction_err)
        assert abs(ex.wing_fraction - sp.wing_fraction) < 3 * sigma_f + 1e-4

    def test_single_beam_normalization(self, ref_single):
        cfg, trap = ref_single
        vt = volume_table(cfg, 0.95, 10**6, 21, trap=trap, threads=4)
        state = TruncatedThermalState.at_eta(cfg, 4e6, 10, 0.95, trap=trap)
        ex = exact_populations(state, vt)
        sp = spatial_populations(state, 10**6, seed=99, threads=4)
        assert abs(ex.n0 - sp.n0) < 3 * np.hypot(ex.n0_err, sp.n0_err)
        # a single beam has no crossing, so everything inside the depth is "centre"
        assert ex.wing_fraction == 0.0

    def test_tolerance_guard(self):
        cfg = crossed()
        trap = characterize(cfg)
        vt = volume_table(cfg, 1.9, 2000, 3, trap=trap)
        state = TruncatedThermalState.at_eta(cfg, 2e6, 8, 1.9, trap=trap)
        with pytest.raises(ToleranceNotMet):
            exact_populations(state, vt, tolerance=1e-4)

    def test_table_must_cover_beta(self, fig1_tables):
        cfg, trap, vt = fig1_tables[1.06e-6]
        state = TruncatedThermalState.at_eta(cfg, 2e6, 8, 1.95, trap=trap)
        with pytest.raises(ValueError):
            exact_populations(state, vt)


class TestFig1Shape:
    @pytest.mark.parametrize("lam", [1.06e-6, 10.6e-6])
    def test_exact_wing_fraction_decreases_with_eta(self, fig1_tables, lam):
        f = [reports(fig1_tables, lam, e)[1].wing_fraction for e in ETAS]
        assert all(a > b for a, b in zip(f, f[1:]))

    @pytest.mark.parametrize("eta", ETAS)
    def test_short_wavelength_has_more_wings(self, fig1_tables, eta):
        # longer Rayleigh range relative to the crossing means bigger wings
        near = reports(fig1_tables, 1.06e-6, eta)[1].wing_fraction
        far = reports(fig1_tables, 10.6e-6, eta)[1].wing_fraction
        assert near > far

    @pytest.mark.parametrize("lam", [1.06e-6, 10.6e-6])
    def test_n0_approaches_harmonic_estimate_as_eta_grows(self, fig1_tables, lam):
        # anharmonic Gaussian wells are wider than their harmonic fit, so the
        # exact n0 lies below the harmonic one and converges from below
        ratios = []
        for eta in (8, 10, 12, 14):
            state, ex = reports(fig1_tables, lam, eta)
            ratios.append(ex.n0 / analytic_populations(2e6, eta, 40e-6, lam).n0)
        assert all(r < 1 for r in ratios)
        assert all(a < b for a, b in zip(ratios, ratios[1:]))
        assert ratios[-1] == approx(1.0, rel=0.10)

    def test_harmonic_cloud_matches_closed_form_for_equal_beams(self, fig1_tables):
        cfg, trap, _ = fig1_tables[1.06e-6]
        state = TruncatedThermalState.at_eta(cfg, 2e6, 9, 1.9, trap=trap)
        hc = harmonic_cloud(cfg, trap, 2e6, state.temperature)
        an = analytic_populations(2e6, 9, 40e-6, 1.06e-6)
        # the crossing frequencies include the Rayleigh-range curvature, so
        # the two agree to the small (w0/zR)^2 correction
        assert hc.wing_fraction == approx(an.wing_fraction, rel=0.02)


class TestAnalytic:
    @pytest.mark.parametrize("eta", ETAS)
    def test_wing_ratio_by_hand(self, eta):
        X = 4 * pi * 40e-6 / 1.06e-6 * np.exp(-eta)
        rep = analytic_populations(2e6, eta, 40e-6, 1.06e-6)
        assert rep.wing_fraction == approx(X / (1 + X), rel=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(
        eta=st.floats(3, 20),
        ratio=st.floats(1, 200),
        bump=st.floats(1.01, 3),
    )
    def test_monotone_in_eta_and_size(self, eta, ratio, bump):
        f = lambda e, r: analytic_populations(1e6, e, r * 1e-6, 1e-6).wing_fraction
        assert f(eta * bump, ratio) < f(eta, ratio)
        assert f(eta, ratio * bump) > f(eta, ratio)

    def test_exact_monotone_in_waist_over_wavelength(self):
        out = []
        for w0 in (20e-6, 40e-6, 80e-6):
            cfg = crossed(w0=w0)
            trap = characterize(cfg)
            vt = volume_table(cfg, 1.9, 5 * 10**5, 8, trap=trap, threads=4)
            state = TruncatedThermalState.at_eta(cfg, 2e6, 8, 1.9, trap=trap)
            out.append(exact_populations(state, vt, tolerance=None).wing_fraction)
        assert out[0] < out[1] < out[2]

    def test_invalid_eta(self):
        with pytest.raises(ValueError):
            analytic_populations(1e6, 0.0, 40e-6, 1e-6)
