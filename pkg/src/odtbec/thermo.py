"""Truncated-Boltzmann clouds in finite-depth traps.

A cloud at temperature T whose phase space is cut at total energy
``eps_t = beta * U0`` has the density

    n(r) = n0 exp(-U(r)/kT) P(3/2, (eps_t - U(r))/kT),

with U measured from the trap minimum and P the regularized lower
incomplete gamma function.  Integrating over space with the volume table
V(u) fixes n0 for a given atom number; splitting the integral at u = 1
separates the crossing region of a crossed trap from its wings.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.constants import h, k, pi
from scipy.special import erf, gamma

from .errors import ToleranceNotMet
from .trap import beam_frequencies, characterize, potential_at
from .volume import check_beta, region_weights, sample_integral, trap_regions

_SERIES_BELOW = 0.5


def incomplete_gamma_P32(x):
    """Regularized lower incomplete gamma P(3/2, x).

    Uses erf(sqrt x) - (2/sqrt pi) sqrt(x) exp(-x); below x = 0.5 the power
    series avoids the cancellation between the two terms.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("P(3/2, x) needs x >= 0")
    s = np.sqrt(x)
    closed = erf(s) - 2 / np.sqrt(pi) * s * np.exp(-x)
    # x^a e^-x sum_n x^n / Gamma(a + n + 1), a = 3/2
    term = np.ones_like(x) / gamma(2.5)
    series = term.copy()
    for n in range(1, 30):
        term = term * x / (1.5 + n)
        series = series + term
    series = series * x**1.5 * np.exp(-x)
    out = np.where(x < _SERIES_BELOW, series, closed)
    return out if out.ndim else float(out)


def thermal_wavelength(T, species):
    """de Broglie wavelength h / sqrt(2 pi m k T) [m]."""
    return h / np.sqrt(2 * pi * species.mass * k * T)


def psd(n0, T, species):
    """Peak phase-space density n0 * lambda_dB^3."""
    if np.any(np.asarray(T) <= 0):
        raise ValueError("temperature must be positive")
    return n0 * thermal_wavelength(T, species) ** 3


def mean_speed(T, species):
    return np.sqrt(8 * k * T / (pi * species.mass))


def collision_rate(n0, T, species):
    """Elastic collision rate n0 * sigma * vbar with sigma = 8 pi a^2 [1/s]."""
    return n0 * species.cross_section * mean_speed(T, species)


def thermalization_time(axial_frequency):
    """One axial period of the beam the wing atoms travel along [s].

    Wing atoms move nearly collisionlessly and thermalize when they pass
    back through the dense crossing, so the axial period sets the time.
    """
    return 2 * pi / axial_frequency


def wing_collision_ratio(n0, T, eta, species, axial_frequency):
    """Collision rate at the wing density n0 exp(-eta), in units of the axial frequency."""
    return collision_rate(n0 * np.exp(-eta), T, species) / axial_frequency


@dataclass(frozen=True, eq=False)
class TruncatedThermalState:
    """(N, T, eta, beta) on a given trap; eta = U0 / kT, beta = eps_t / U0."""

    N: float
    temperature: float
    eta: float
    beta: float
    config: object
    trap: object

    def __post_init__(self):
        if self.N < 0:
            raise ValueError("atom number must be non-negative")
        if not (self.temperature > 0 and self.eta > 0 and self.beta > 0):
            raise ValueError("temperature, eta and beta must be positive")
        u0 = self.trap.single_beam_depth_U0
        if not np.isclose(self.eta, u0 / (k * self.temperature), rtol=1e-9):
            raise ValueError("eta must equal U0 / (k T)")

    @classmethod
    def at_eta(cls, config, N, eta, beta, trap=None):
        trap = trap if trap is not None else characterize(config)
        T = trap.single_beam_depth_U0 / (k * eta)
        return cls(N=N, temperature=T, eta=eta, beta=beta, config=config, trap=trap)

    @property
    def species(self):
        return self.config.species

    @property
    def cutoff_energy(self):
        return self.beta * self.trap.single_beam_depth_U0


@dataclass(frozen=True)
class PopulationReport:
    N_c: float
    N_w: float
    wing_fraction: float
    n0: float
    psd: float
    method: str
    n0_err: float = 0.0
    wing_fraction_err: float = 0.0
    extra: dict = field(default_factory=dict, compare=False)

    @property
    def N(self):
        return self.N_c + self.N_w


def _bin_weights(vtable, eta, beta):
    lo, hi = vtable.u_edges[:-1], vtable.u_edges[1:]
    # exact bin average of exp(-eta u) for a flat density inside the bin
    boltz = (np.exp(-eta * lo) - np.exp(-eta * hi)) / (eta * (hi - lo))
    centers = 0.5 * (lo + hi)
    trunc = incomplete_gamma_P32(np.maximum(eta * (beta - centers), 0.0))
    return boltz * trunc


def exact_populations(state, vtable, tolerance=0.005):
    """Centre/wing populations and n0 from the tabulated V(u).

    Raises ToleranceNotMet when the relative Monte Carlo error on the
    normalization integral exceeds ``tolerance`` (None disables the check).
    """
    if vtable.beta < state.beta * (1 - 1e-12):
        raise ValueError(f"volume table covers u <= {vtable.beta}, state needs {state.beta}")
    w = _bin_weights(vtable, state.eta, state.beta)
    lo = vtable.u_edges[:-1]
    centre_share = np.clip((1.0 - lo) / vtable.du, 0.0, 1.0)
    wc, ww = w * centre_share, w * (1 - centre_share)

    total, total_err = vtable.integrate(w)
    i_c, _ = vtable.integrate(wc)
    i_w, _ = vtable.integrate(ww)
    if not total > 0:
        raise ToleranceNotMet("normalization integral is empty; too few samples")
    if tolerance is not None and total_err / total > tolerance:
        raise ToleranceNotMet(
            f"relative MC error {total_err / total:.2e} on the normalization exceeds {tolerance:.2e}"
        )
    f = i_w / total
    var_f = (
        (1 - f) ** 2 * vtable.covariance(ww, ww)
        + f**2 * vtable.covariance(wc, wc)
        - 2 * f * (1 - f) * vtable.covariance(wc, ww)
    ) / total**2
    n0 = state.N / total
    return PopulationReport(
        N_c=state.N * (1 - f),
        N_w=state.N * f,
        wing_fraction=f,
        n0=n0,
        psd=float(psd(n0, state.temperature, state.species)),
        method="exact",
        n0_err=n0 * total_err / total,
        wing_fraction_err=float(np.sqrt(max(var_f, 0.0))),
        extra={"integral": total, "integral_err": total_err},
    )


def density_at(state, r, n0):
    """Truncated-Boltzmann density [1/m^3] at lab positions ``r``."""
    U = potential_at(state.config, r) - state.trap.minimum_potential
    x = (state.cutoff_energy - U) / (k * state.temperature)
    inside = x > 0
    out = np.zeros(np.shape(U))
    out[inside] = (
        n0 * np.exp(-U[inside] / (k * state.temperature)) * incomplete_gamma_P32(x[inside])
    )
    return out if out.ndim else float(out)


def spatial_populations(state, n_samples, seed, threads=1):
    """Populations from direct 3-D Monte Carlo of the density profile.

    An oracle for :func:`exact_populations`: it weights every sample by the
    density instead of histogramming u, and uses its own random stream.
    """
    check_beta(state.config, state.trap, state.beta)
    regions = trap_regions(state.config, state.trap, state.beta)
    u0, umin = state.trap.single_beam_depth_U0, state.trap.minimum_potential

    def f(pts):
        u = (potential_at(state.config, pts) - umin) / u0
        x = np.maximum(state.eta * (state.beta - u), 0.0)
        weight = np.where(u < state.beta, np.exp(-state.eta * u) * incomplete_gamma_P32(x), 0.0)
        return np.stack([weight * (u < 1), weight * (u >= 1)], axis=1)

    (i_c, i_w), cov = sample_integral(f, regions, region_weights(regions), n_samples, seed, threads)
    total = i_c + i_w
    total_err = np.sqrt(cov.sum())
    frac = i_w / total
    var_f = ((1 - frac) ** 2 * cov[1, 1] + frac**2 * cov[0, 0] - 2 * frac * (1 - frac) * cov[0, 1]) / total**2
    n0 = state.N / total
    return PopulationReport(
        N_c=state.N * (1 - frac),
        N_w=state.N * frac,
        wing_fraction=float(frac),
        n0=float(n0),
        psd=float(psd(n0, state.temperature, state.species)),
        method="spatial",
        n0_err=float(n0 * total_err / total),
        wing_fraction_err=float(np.sqrt(max(var_f, 0.0))),
        extra={"integral": float(total), "integral_err": float(total_err)},
    )


def wing_ratio(eta, w0, wavelength):
    """N_w / N_c = (4 pi w0 / lambda) exp(-eta) for two equal crossed beams."""
    return 4 * pi * w0 / wavelength * np.exp(-eta)


def analytic_populations(N, eta, w0, wavelength, temperature=None, species=None):
    """Harmonic estimate for two equal circular beams crossed at their foci."""
    if not np.all(np.asarray(eta) > 0):
        raise ValueError("eta must be positive")
    X = wing_ratio(eta, w0, wavelength)
    n0 = 4 * N / w0**3 * (eta / pi) ** 1.5 / (1 + X)
    phase = float("nan")
    if temperature is not None and species is not None:
        phase = float(psd(n0, temperature, species))
    return PopulationReport(
        N_c=N / (1 + X),
        N_w=N * X / (1 + X),
        wing_fraction=X / (1 + X),
        n0=n0,
        psd=phase,
        method="analytic",
    )


def wing_fraction_half_point(w0, wavelength):
    """eta at which half the atoms sit in the wings: ln(4 pi w0 / lambda)."""
    if not (w0 > 0 and wavelength > 0):
        raise ValueError("w0 and wavelength must be positive")
    return float(np.log(4 * pi * w0 / wavelength))


def harmonic_cloud(config, trap, N, T):
    """Harmonic populations for an arbitrary beam set.

    The crossing is a harmonic well with the trap's mean frequency.  Every
    powered beam, when others are present, adds a wing: its own harmonic
    well (closed-form single-beam frequencies) offset by the energy between
    its bottom and the crossing minimum.  Wings whose bottom lies above the
    trap depth are dropped.  For two equal beams this reduces to the
    closed-form wing ratio (4 pi w0 / lambda) exp(-eta).
    """
    m = config.species.mass
    depths = config.beam_depths
    powered = [i for i, b in enumerate(config.beams) if b.power > 0 and depths[i] > 0]
    X = 0.0
    if len(powered) > 1:
        wbar_c3 = trap.mean_frequency**3
        for i in powered:
            offset = -depths[i] - trap.minimum_potential
            if offset >= trap.depth:
                continue
            wbar_b3 = np.prod(beam_frequencies(config, i))
            X += wbar_c3 / wbar_b3 * np.exp(-max(offset, 0.0) / (k * T))
    n0 = N / (1 + X) * trap.mean_frequency**3 * (m / (2 * pi * k * T)) ** 1.5
    return PopulationReport(
        N_c=N / (1 + X),
        N_w=N * X / (1 + X),
        wing_fraction=X / (1 + X),
        n0=float(n0),
        psd=float(psd(n0, T, config.species)),
        method="harmonic",
    )
