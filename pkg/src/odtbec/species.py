"""Atom species data.

Only the quantities the trap and kinetics models need are kept: mass,
D-line positions and widths, s-wave scattering length and a three-body
loss constant.
"""

from dataclasses import dataclass

import numpy as np
from scipy.constants import atomic_mass, physical_constants, pi

a0 = physical_constants["Bohr radius"][0]


@dataclass(frozen=True)
class AtomSpecies:
    """Alkali atom with two D lines.

    Attributes:
        name               : label
        mass           [kg]
        d1_wavelength   [m]: vacuum wavelength of the D1 line
        d2_wavelength   [m]: vacuum wavelength of the D2 line
        d1_linewidth [rad/s]
        d2_linewidth [rad/s]
        scattering_length [m]
        three_body_K3 [cm^6/s]: loss constant for a thermal cloud
    """

    name: str
    mass: float
    d1_wavelength: float
    d2_wavelength: float
    d1_linewidth: float
    d2_linewidth: float
    scattering_length: float
    three_body_K3: float = 0.0

    def __post_init__(self):
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        for field in ("d1_wavelength", "d2_wavelength", "d1_linewidth", "d2_linewidth"):
            if not getattr(self, field) > 0:
                raise ValueError(f"{field} must be positive")
        if not np.isfinite(self.scattering_length):
            raise ValueError("scattering_length must be finite")
        if self.three_body_K3 < 0:
            raise ValueError("three_body_K3 must be non-negative")

    @property
    def reddest_line(self):
        """Longest D-line wavelength [m]; trapping light must be redder."""
        return max(self.d1_wavelength, self.d2_wavelength)

    @property
    def cross_section(self):
        """Elastic s-wave cross-section for identical bosons [m^2]."""
        return 8 * pi * self.scattering_length**2


# D-line data: D. A. Steck, "Rubidium 87 D Line Data" (rev. 2.2.1).
# a = 100.4 a0 is the |F=1, m=-1> value; K3 is the thermal-cloud value
# for F=1 (Soding et al. 1999), an external input rather than a fit.
RB87 = AtomSpecies(
    name="Rb87",
    mass=86.909180527 * atomic_mass,
    d1_wavelength=794.978851156e-9,
    d2_wavelength=780.241209686e-9,
    d1_linewidth=2 * pi * 5.7500e6,
    d2_linewidth=2 * pi * 6.0666e6,
    scattering_length=100.4 * a0,
    three_body_K3=4.3e-29,
)

SPECIES = {"Rb87": RB87}


def get_species(name):
    try:
        return SPECIES[name]
    except KeyError:
        raise KeyError(f"unknown species {name!r}; known: {sorted(SPECIES)}") from None
