"""Optical dipole traps, truncated-Boltzmann clouds and evaporation to BEC."""

from .errors import (
    BetaTooLarge,
    ConfigError,
    DegenerateHessian,
    NoMinimum,
    OdtError,
    StateCollapse,
    StiffnessFailure,
    ToleranceNotMet,
)
from .evap import (
    EvapModelParams,
    PowerSchedule,
    Segment,
    TrajectoryPoint,
    critical_temperature,
    detect_stagnation,
    evolve,
    trap_timeseries,
)
from .species import RB87, AtomSpecies, get_species
from .thermo import (
    PopulationReport,
    TruncatedThermalState,
    analytic_populations,
    collision_rate,
    density_at,
    exact_populations,
    harmonic_cloud,
    incomplete_gamma_P32,
    psd,
    spatial_populations,
    thermalization_time,
    wing_fraction_half_point,
)
from .trap import (
    GaussianBeam,
    TrapCharacterization,
    TrapConfig,
    characterize,
    dipole_coefficient,
    peak_intensity,
    potential_at,
)
from .volume import VolumeTable, harmonic_volume_table, volume_table

__version__ = "0.1.0"
