"""Optical dipole potentials of focused Gaussian beams.

Positions are lab-frame vectors in metres with z vertical (gravity points
along -z).  Potentials are in joules; a red-detuned beam contributes
``-kappa * I(r)``.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import c, pi
from scipy.optimize import minimize, minimize_scalar

from .errors import DegenerateHessian, NoMinimum
from .species import AtomSpecies

_LAB_AXES = np.eye(3)


def _unit(v, what):
    v = np.asarray(v, dtype=float).reshape(3)
    norm = np.linalg.norm(v)
    if not norm > 0:
        raise ValueError(f"{what} must be a non-zero vector")
    return v / norm


def _perpendicular(axis):
    # lab axis least aligned with `axis`, orthogonalised
    e = _LAB_AXES[np.argmin(np.abs(axis))]
    t = e - np.dot(e, axis) * axis
    return t / np.linalg.norm(t)


@dataclass(frozen=True, eq=False)
class GaussianBeam:
    """Focused elliptical Gaussian beam.

    ``waist_x`` and ``waist_y`` are the 1/e^2 intensity radii at the focus
    along ``transverse_x`` and ``axis x transverse_x``.  Each transverse axis
    has its own Rayleigh range ``pi w^2 / wavelength``.
    """

    power: float
    waist_x: float
    waist_y: float = None
    wavelength: float = 1.064e-6
    axis: np.ndarray = (0.0, 0.0, 1.0)
    transverse_x: np.ndarray = None
    focus: np.ndarray = (0.0, 0.0, 0.0)
    name: str = ""

    def __post_init__(self):
        if self.waist_y is None:
            object.__setattr__(self, "waist_y", self.waist_x)
        if self.power < 0:
            raise ValueError("beam power must be non-negative")
        if not (self.waist_x > 0 and self.waist_y > 0):
            raise ValueError("beam waists must be positive")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")
        axis = _unit(self.axis, "axis")
        if self.transverse_x is None:
            tx = _perpendicular(axis)
        else:
            tx = _unit(self.transverse_x, "transverse_x")
            if abs(np.dot(axis, tx)) > 1e-9:
                raise ValueError("transverse_x must be perpendicular to axis")
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "transverse_x", tx)
        object.__setattr__(self, "focus", np.asarray(self.focus, dtype=float).reshape(3))

    @property
    def transverse_y(self):
        return np.cross(self.axis, self.transverse_x)

    @property
    def rayleigh_x(self):
        return pi * self.waist_x**2 / self.wavelength

    @property
    def rayleigh_y(self):
        return pi * self.waist_y**2 / self.wavelength

    @property
    def min_waist(self):
        return min(self.waist_x, self.waist_y)

    def with_power(self, power):
        return replace(self, power=float(power))

    def _local(self, points):
        d = np.asarray(points, dtype=float) - self.focus
        return d @ self.transverse_x, d @ self.transverse_y, d @ self.axis

    def intensity(self, points):
        """Intensity [W/m^2] at ``points`` (array of shape (..., 3))."""
        xi, ups, zeta = self._local(points)
        qx = 1 + (zeta / self.rayleigh_x) ** 2
        qy = 1 + (zeta / self.rayleigh_y) ** 2
        arg = 2 * xi**2 / (self.waist_x**2 * qx) + 2 * ups**2 / (self.waist_y**2 * qy)
        return peak_intensity(self) / np.sqrt(qx * qy) * np.exp(-arg)

    def intensity_gradient(self, points):
        """Analytic gradient of :meth:`intensity`, shape (..., 3)."""
        xi, ups, zeta = self._local(points)
        zx2, zy2 = self.rayleigh_x**2, self.rayleigh_y**2
        wx2, wy2 = self.waist_x**2, self.waist_y**2
        qx = 1 + zeta**2 / zx2
        qy = 1 + zeta**2 / zy2
        intensity = peak_intensity(self) / np.sqrt(qx * qy) * np.exp(
            -2 * xi**2 / (wx2 * qx) - 2 * ups**2 / (wy2 * qy)
        )
        d_xi = -4 * xi / (wx2 * qx)
        d_ups = -4 * ups / (wy2 * qy)
        d_zeta = (
            -zeta / (zx2 * qx)
            - zeta / (zy2 * qy)
            + 4 * xi**2 * zeta / (wx2 * zx2 * qx**2)
            + 4 * ups**2 * zeta / (wy2 * zy2 * qy**2)
        )
        local = (
            d_xi[..., None] * self.transverse_x
            + d_ups[..., None] * self.transverse_y
            + d_zeta[..., None] * self.axis
        )
        return intensity[..., None] * local


def peak_intensity(beam):
    """On-axis focal intensity 2P / (pi wx wy) [W/m^2]."""
    return 2 * beam.power / (pi * beam.waist_x * beam.waist_y)


def dipole_coefficient(species, wavelength, counter_rotating=False):
    """Light-shift coefficient kappa [J per W/m^2], with depth = kappa * I.

    D1 and D2 contribute with weights 1/3 and 2/3 (scalar light shift of an
    alkali ground state).  The rotating-wave form is the default;
    ``counter_rotating=True`` adds the 1/(omega_0 + omega) terms.
    """
    if not wavelength > species.reddest_line:
        raise ValueError(
            f"wavelength {wavelength:g} m is not red-detuned of both D lines; "
            "the far-detuned dipole model does not apply"
        )
    omega = 2 * pi * c / wavelength
    kappa = 0.0
    lines = (
        (species.d1_wavelength, species.d1_linewidth, 1 / 3),
        (species.d2_wavelength, species.d2_linewidth, 2 / 3),
    )
    for line_wavelength, gamma, weight in lines:
        omega0 = 2 * pi * c / line_wavelength
        detuning_term = 1 / (omega0 - omega)
        if counter_rotating:
            detuning_term += 1 / (omega0 + omega)
        kappa += weight * 3 * pi * c**2 / (2 * omega0**3) * gamma * detuning_term
    return kappa


@dataclass(frozen=True, eq=False)
class TrapConfig:
    """Atom species plus an ordered set of beams.

    ``primary`` indexes the beam whose single-beam depth sets the energy
    scale U0.
    """

    species: AtomSpecies
    beams: tuple
    gravity_enabled: bool = False
    gravity_acceleration: float = 9.80665
    primary: int = 0
    counter_rotating: bool = False

    def __post_init__(self):
        beams = tuple(self.beams)
        object.__setattr__(self, "beams", beams)
        if not beams:
            raise ValueError("a trap needs at least one beam")
        if not 0 <= self.primary < len(beams):
            raise ValueError("primary beam index out of range")
        for beam in beams:
            if not beam.wavelength > self.species.reddest_line:
                raise ValueError(
                    f"beam {beam.name or '?'} at {beam.wavelength:g} m is not red of the D lines"
                )

    @property
    def coefficients(self):
        return np.array(
            [dipole_coefficient(self.species, b.wavelength, self.counter_rotating) for b in self.beams]
        )

    @property
    def beam_depths(self):
        """Single-beam depths kappa * I0 for each beam [J]."""
        return self.coefficients * np.array([peak_intensity(b) for b in self.beams])

    @property
    def primary_depth(self):
        return self.beam_depths[self.primary]

    def with_powers(self, powers):
        powers = list(powers)
        if len(powers) != len(self.beams):
            raise ValueError("need one power per beam")
        return replace(self, beams=tuple(b.with_power(p) for b, p in zip(self.beams, powers)))

    def subset(self, indices):
        """Config holding only the beams in ``indices``; primary becomes the first."""
        return replace(self, beams=tuple(self.beams[i] for i in indices), primary=0)


def potential_at(config, r):
    """Potential energy [J] at lab positions ``r`` (shape (..., 3)).

    Not re-referenced: a lone beam gives -U0 at its focus and zero far away.
    """
    r = np.asarray(r, dtype=float)
    total = np.zeros(r.shape[:-1])
    for kappa, beam in zip(config.coefficients, config.beams):
        if beam.power > 0:
            total -= kappa * beam.intensity(r)
    if config.gravity_enabled:
        total += config.species.mass * config.gravity_acceleration * r[..., 2]
    return total


def potential_gradient(config, r):
    r = np.asarray(r, dtype=float)
    grad = np.zeros(r.shape)
    for kappa, beam in zip(config.coefficients, config.beams):
        if beam.power > 0:
            grad -= kappa * beam.intensity_gradient(r)
    if config.gravity_enabled:
        grad[..., 2] += config.species.mass * config.gravity_acceleration
    return grad


def beam_frequencies(config, index):
    """Closed-form harmonic frequencies (wx, wy, w_axial) of one beam alone [rad/s]."""
    beam = config.beams[index]
    depth = config.beam_depths[index]
    m = config.species.mass
    kx = 4 * depth / beam.waist_x**2
    ky = 4 * depth / beam.waist_y**2
    kz = depth * (1 / beam.rayleigh_x**2 + 1 / beam.rayleigh_y**2)
    return np.sqrt(np.array([kx, ky, kz]) / m)


@dataclass(frozen=True, eq=False)
class TrapCharacterization:
    minimum_position: np.ndarray
    minimum_potential: float
    depth: float
    frequencies: tuple
    mean_frequency: float
    single_beam_depth_U0: float
    beta: float
    beam_depths: tuple = ()
    principal_axes: np.ndarray = field(default=None, repr=False)
    principal_frequencies: np.ndarray = field(default=None, repr=False)


def _hessian(config, x0, h):
    # central differences of the analytic gradient
    steps = h * np.eye(3)
    pts = np.concatenate([x0 + steps, x0 - steps])
    g = potential_gradient(config, pts)
    hess = (g[:3] - g[3:]) / (2 * h)
    return 0.5 * (hess + hess.T)


def _find_minimum(config, scale_length, energy):
    powered = [b for b in config.beams if b.power > 0]
    seeds = np.array([b.focus for b in powered])
    seed = seeds[np.argmin(potential_at(config, seeds))]

    def f(y):
        x = seed + scale_length * y
        return potential_at(config, x) / energy, potential_gradient(config, x) * scale_length / energy

    # unbound traps send the search off to infinity; that is reported later
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(f, np.zeros(3), jac=True, method="BFGS", options={"gtol": 1e-13, "maxiter": 2000})
    x = seed + scale_length * res.x
    # Newton polish; BFGS stalls along the weak axial direction
    h = 1e-3 * scale_length
    for _ in range(4):
        hess = _hessian(config, x, h)
        try:
            step = np.linalg.solve(hess, potential_gradient(config, x))
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)) or np.linalg.norm(step) > 10 * scale_length:
            break
        x = x - step
        if np.linalg.norm(step) < 1e-15 * scale_length:
            break
    return x


def _escape_barrier(config, x0, u_min, length):
    """Lowest barrier met along straight rays leaving ``x0``."""
    dirs = [_LAB_AXES[i] for i in range(3)]
    for b in config.beams:
        if b.power > 0:
            dirs.extend([b.axis, b.transverse_x, b.transverse_y])
    dirs = np.array(dirs)
    dirs = np.concatenate([dirs, -dirs])
    scale = min(b.min_waist for b in config.beams if b.power > 0)
    s = np.concatenate([[0.0], np.geomspace(1e-3 * scale, length, 4096)])
    pts = x0 + s[None, :, None] * dirs[:, None, :]
    u = potential_at(config, pts)
    barriers = []
    for d, row in zip(dirs, u):
        k = int(np.argmax(row))
        best = row[k]
        if 0 < k < len(s) - 1:
            res = minimize_scalar(
                lambda t: -potential_at(config, x0 + t * d),
                bounds=(s[k - 1], s[k + 1]),
                method="bounded",
                options={"xatol": 1e-12 * length},
            )
            best = max(best, -res.fun)
        barriers.append(best)
    return min(barriers) - u_min


def characterize(config, escape_fraction=1e-3):
    """Locate the trap minimum and extract depth and trap frequencies.

    The escape barrier is the lowest potential maximum along straight rays
    from the minimum (lab axes, beam axes and beam transverse axes).  Rays
    run until the on-axis intensity of the longest beam has dropped to
    ``escape_fraction`` of its focal value; a ray with no interior maximum
    contributes the potential at that distance.  A lone beam without
    gravity therefore has depth (1 - escape_fraction) U0, and two equal
    crossed beams give beta just below 2.
    """
    depths = config.beam_depths
    powered = [i for i, b in enumerate(config.beams) if b.power > 0 and depths[i] > 0]
    if not powered:
        raise NoMinimum("no beam carries power")
    energy = float(depths[powered].sum())
    scale = min(config.beams[i].min_waist for i in powered)

    x0 = _find_minimum(config, scale, energy)
    optical = potential_at(replace(config, gravity_enabled=False), x0)
    if not optical < -1e-6 * energy:
        raise NoMinimum("minimisation left the beams; gravity exceeds the optical gradient")
    grad = potential_gradient(config, x0)
    if np.linalg.norm(grad) * scale > 1e-6 * energy:
        raise NoMinimum("no stationary point found")

    hess = _hessian(config, x0, 1e-3 * scale)
    evals, evecs = np.linalg.eigh(hess)
    if not np.all(evals > 0):
        raise DegenerateHessian(f"Hessian eigenvalues {evals} at {x0}")
    principal = np.sqrt(evals / config.species.mass)

    # attach each principal frequency to the lab axis it is most aligned with
    weights = np.abs(evecs)
    freqs = np.empty(3)
    free_axes = [0, 1, 2]
    for j in np.argsort(-weights.max(axis=0)):
        lab = max(free_axes, key=lambda i: weights[i, j])
        freqs[lab] = principal[j]
        free_axes.remove(lab)

    u_min = float(potential_at(config, x0))
    length = max(max(config.beams[i].rayleigh_x, config.beams[i].rayleigh_y) for i in powered)
    length *= np.sqrt(1 / escape_fraction - 1)
    depth = float(_escape_barrier(config, x0, u_min, length))
    if not depth > 0:
        raise NoMinimum("minimum is not bound")

    u0 = float(depths[config.primary])
    return TrapCharacterization(
        minimum_position=x0,
        minimum_potential=u_min,
        depth=depth,
        frequencies=tuple(freqs),
        mean_frequency=float(np.prod(freqs) ** (1 / 3)),
        single_beam_depth_U0=u0,
        beta=depth / u0 if u0 > 0 else float("nan"),
        beam_depths=tuple(float(d) for d in depths),
        principal_axes=evecs,
        principal_frequencies=principal,
    )
