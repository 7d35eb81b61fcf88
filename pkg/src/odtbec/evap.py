"""Power ramps and evaporation kinetics.

The cloud is described by (N, T) in the instantaneous trap.  Rates follow
the truncated-Boltzmann treatment of a harmonic trap:

    dN/dt = -(G_ev + 1/tau_bg + G_3b) N
    dT/dt = -G_ev T (eta + kappa - 3)/3 + T dln(wbar)/dt + G_3b T / 3

with G_ev = G_el (eta - 4) exp(-eta), kappa = (eta - 5)/(eta - 4),
G_3b = K3 n0^2 / sqrt(27) and eta = depth / kT taken from the trap at every
step.  The mean energy per atom is 3kT; evaporated atoms carry
(eta + kappa) kT, three-body losses 2kT, background losses 3kT.
"""

import csv
import io
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import hbar, k
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline
from scipy.special import gammainc, zeta

from .errors import NoMinimum, StateCollapse, StiffnessFailure
from .thermo import collision_rate, psd, thermal_wavelength
from .trap import beam_frequencies, characterize

TC_PREFACTOR = zeta(3) ** (-1 / 3)
KINDS = ("linear", "exponential", "hold")


@dataclass(frozen=True)
class Segment:
    t_start: float
    t_end: float
    kind: str
    p_start: float
    p_end: float = None

    def __post_init__(self):
        if self.p_end is None:
            object.__setattr__(self, "p_end", self.p_start)
        if self.kind not in KINDS:
            raise ValueError(f"segment kind must be one of {KINDS}, got {self.kind!r}")
        if not self.t_end > self.t_start:
            raise ValueError("segment must have t_end > t_start")
        if self.p_start < 0 or self.p_end < 0:
            raise ValueError("powers must be non-negative")
        if self.kind == "hold" and self.p_end != self.p_start:
            raise ValueError("a hold segment keeps its power")
        if self.kind == "exponential" and not (self.p_start > 0 and self.p_end > 0):
            raise ValueError("an exponential segment needs positive end powers")

    def power(self, t):
        x = (t - self.t_start) / (self.t_end - self.t_start)
        if self.kind == "hold":
            return self.p_start
        if self.kind == "linear":
            return self.p_start + (self.p_end - self.p_start) * x
        return self.p_start * (self.p_end / self.p_start) ** x


@dataclass(frozen=True)
class PowerSchedule:
    """Per-beam piecewise power ramps.

    ``segments`` maps a beam index to its contiguous, continuous segments.
    Beams without an entry keep the power of the trap configuration.
    """

    segments: dict

    def __post_init__(self):
        spans = set()
        for beam, segs in self.segments.items():
            segs = tuple(segs)
            if not segs:
                raise ValueError(f"beam {beam} has an empty schedule")
            for a, b in zip(segs, segs[1:]):
                if not np.isclose(a.t_end, b.t_start, rtol=0, atol=1e-12):
                    raise ValueError(f"beam {beam}: segments must be contiguous")
                if not np.isclose(a.p_end, b.p_start, rtol=1e-12, atol=1e-15):
                    raise ValueError(f"beam {beam}: power jumps between segments at t={a.t_end}")
            spans.add((segs[0].t_start, segs[-1].t_end))
        if len(spans) != 1:
            raise ValueError("all scheduled beams must cover the same time span")

    @property
    def t_start(self):
        return next(iter(self.segments.values()))[0].t_start

    @property
    def t_end(self):
        return next(iter(self.segments.values()))[-1].t_end

    @property
    def breakpoints(self):
        times = {s.t_start for segs in self.segments.values() for s in segs}
        times |= {s.t_end for segs in self.segments.values() for s in segs}
        return np.array(sorted(times))

    def power(self, beam, t):
        for seg in self.segments[beam]:
            if seg.t_start <= t <= seg.t_end:
                return seg.power(t)
        raise ValueError(f"t={t} outside the schedule [{self.t_start}, {self.t_end}]")

    def powers(self, config, t):
        return [self.power(i, t) if i in self.segments else b.power for i, b in enumerate(config.beams)]

    def configured(self, config, t):
        return config.with_powers(self.powers(config, t))

    @classmethod
    def hold(cls, config, duration, beams=None):
        beams = range(len(config.beams)) if beams is None else beams
        return cls({i: (Segment(0.0, duration, "hold", config.beams[i].power),) for i in beams})


@dataclass(frozen=True)
class EvapModelParams:
    background_lifetime: float = 6.0
    three_body_K3: float = None
    evaporation_model: str = "truncated_boltzmann_harmonic"
    eta_dynamics: str = "self_consistent"
    ode_rel_tol: float = 1e-6
    ode_abs_tol: float = 1e-9
    output_dt: float = 0.01
    thermalization_collisions: float = 2.7
    eta_floor: float = 5.0
    grid_per_segment: int = 41

    def __post_init__(self):
        if not self.background_lifetime > 0:
            raise ValueError("background_lifetime must be positive (use inf for none)")
        if not (self.ode_rel_tol > 0 and self.ode_abs_tol > 0):
            raise ValueError("ODE tolerances must be positive")
        if self.evaporation_model not in ("truncated_boltzmann_harmonic", "none"):
            raise ValueError(f"unknown evaporation_model {self.evaporation_model!r}")
        if self.eta_dynamics != "self_consistent":
            raise ValueError("only self_consistent eta dynamics is implemented")
        if self.three_body_K3 is not None and self.three_body_K3 < 0:
            raise ValueError("three_body_K3 must be non-negative")


@dataclass(frozen=True)
class TrajectoryPoint:
    t: float
    N: float
    T: float
    eta: float
    depth: float
    mean_frequency: float
    n0: float
    psd: float
    wing_fraction: float
    collision_rate: float = float("nan")
    critical_temperature: float = float("nan")

    @property
    def degenerate(self):
        return self.T <= self.critical_temperature


@dataclass(frozen=True)
class TimeseriesPoint:
    t: float
    depth: float
    auxiliary_depth: float
    mean_frequency: float


def critical_temperature(N, mean_frequency):
    """Ideal-gas condensation temperature in a harmonic trap [K]."""
    if np.any(np.asarray(N) < 1) or np.any(np.asarray(mean_frequency) <= 0):
        raise ValueError("need N >= 1 and a positive mean frequency")
    return TC_PREFACTOR * hbar * mean_frequency * np.cbrt(N) / k


def trap_timeseries(config, schedule, t_grid):
    """Combined depth, auxiliary-only depth and mean frequency over time.

    The auxiliary beams are all beams except the primary; their depth is
    zero whenever they hold no trap on their own.
    """
    out = []
    aux = [i for i in range(len(config.beams)) if i != config.primary]
    for t in np.atleast_1d(t_grid):
        cfg = schedule.configured(config, float(t))
        trap = characterize(cfg)
        aux_depth = 0.0
        if aux:
            try:
                aux_depth = characterize(cfg.subset(aux)).depth
            except NoMinimum:
                aux_depth = 0.0
        out.append(TimeseriesPoint(float(t), trap.depth, aux_depth, trap.mean_frequency))
    return out


class _TrapTrack:
    """Depth, mean frequency and minimum potential interpolated in time.

    The trap is characterized on a grid inside every schedule interval and
    splined there; intervals join at the schedule breakpoints, where the
    ramp slope may jump.
    """

    def __init__(self, config, schedule, per_segment):
        self.config = config
        self.schedule = schedule
        self.kappas = config.coefficients
        self.edges = schedule.breakpoints
        self.splines = []
        for a, b in zip(self.edges[:-1], self.edges[1:]):
            ts = np.linspace(a, b, per_segment)
            chars = [characterize(schedule.configured(config, t)) for t in ts]
            depth = np.array([c.depth for c in chars])
            lnw = np.log([c.mean_frequency for c in chars])
            umin = np.array([c.minimum_potential for c in chars])
            self.splines.append((CubicSpline(ts, depth), CubicSpline(ts, lnw), CubicSpline(ts, umin)))
        # single-beam mean frequency cubed per unit depth^(3/2)
        unit = config.with_powers([1.0] * len(config.beams))
        unit_depths = unit.beam_depths
        self.wbar3_unit = np.array(
            [np.prod(beam_frequencies(unit, i)) / unit_depths[i] ** 1.5 for i in range(len(config.beams))]
        )
        self.depth_per_watt = unit_depths

    def _index(self, t):
        i = int(np.searchsorted(self.edges, t, side="right")) - 1
        return min(max(i, 0), len(self.splines) - 1)

    def at(self, t):
        depth_s, lnw_s, umin_s = self.splines[self._index(t)]
        return float(depth_s(t)), float(np.exp(lnw_s(t))), float(lnw_s(t, 1)), float(umin_s(t))

    def beam_depths(self, t):
        return self.depth_per_watt * np.array(self.schedule.powers(self.config, t))


def _cloud(track, t, N, T):
    """Peak density and wing fraction of the harmonic cloud at time t."""
    depth, wbar, dlnw, umin = track.at(t)
    m = track.config.species.mass
    depths = track.beam_depths(t)
    powered = np.nonzero(depths > 0)[0]
    X = 0.0
    if len(powered) > 1:
        for i in powered:
            offset = max(-depths[i] - umin, 0.0)
            room = depth - offset
            if room <= 0:
                continue
            wbar_b3 = track.wbar3_unit[i] * depths[i] ** 1.5
            X += wbar**3 / wbar_b3 * np.exp(-offset / (k * T)) * gammainc(3, room / (k * T))
        X /= gammainc(3, depth / (k * T))
    n0 = N / (1 + X) * wbar**3 * (m / (2 * np.pi * k * T)) ** 1.5
    return n0, X / (1 + X), depth, wbar, dlnw


def _point(track, species, t, N, T):
    n0, wing, depth, wbar, _ = _cloud(track, t, N, T)
    tc = critical_temperature(max(N, 1.0), wbar)
    return TrajectoryPoint(
        t=float(t),
        N=float(N),
        T=float(T),
        eta=depth / (k * T),
        depth=depth,
        mean_frequency=wbar,
        n0=float(n0),
        psd=float(psd(n0, T, species)),
        wing_fraction=float(wing),
        collision_rate=float(collision_rate(n0, T, species)),
        critical_temperature=float(tc),
    )


def rates(track, params, t, N, T):
    """Loss rates and the temperature derivative at (t, N, T).

    Returns a dict with the evaporation, background and three-body rates
    [1/s], dT/dt [K/s] and its parts.
    """
    species = track.config.species
    n0, _, depth, _, dlnw = _cloud(track, t, N, T)
    eta = depth / (k * T)
    g_el = float(collision_rate(n0, T, species))
    if params.evaporation_model == "none":
        g_ev, kappa = 0.0, 0.0
    else:
        # large-eta asymptotics; frozen below eta_floor
        eta_f = max(eta, params.eta_floor)
        g_ev = g_el * (eta_f - 4) * np.exp(-eta)
        kappa = (eta_f - 5) / (eta_f - 4)
    k3 = species.three_body_K3 if params.three_body_K3 is None else params.three_body_K3
    g_3b = k3 * 1e-12 * n0**2 / np.sqrt(27)
    g_bg = 1 / params.background_lifetime
    limit = g_el / params.thermalization_collisions
    adiabatic = T * float(np.clip(dlnw, -limit, limit))
    evaporative = -g_ev * T * (eta + kappa - 3) / 3
    three_body = g_3b * T / 3
    return {
        "evaporation": g_ev,
        "background": g_bg,
        "three_body": g_3b,
        "collision": g_el,
        "eta": eta,
        "removed_energy": (eta + kappa) * k * T,
        "dT_evaporative": evaporative,
        "dT_adiabatic": adiabatic,
        "dT_three_body": three_body,
        "dTdt": evaporative + adiabatic + three_body,
    }


def evolve(initial, config, schedule, params=None, t_eval=None):
    """Integrate (N, T) through the schedule.

    ``initial`` needs ``N`` and ``temperature`` attributes (a
    TruncatedThermalState works).  Returns TrajectoryPoints at ``t_eval``
    (default: every ``params.output_dt`` plus every breakpoint).
    """
    params = params or EvapModelParams()
    if not (initial.N >= 1 and initial.temperature > 0):
        raise StateCollapse("initial state needs N >= 1 and T > 0")
    track = _TrapTrack(config, schedule, params.grid_per_segment)
    species = config.species
    t0, t1 = schedule.t_start, schedule.t_end
    if t_eval is None:
        n_out = int(round((t1 - t0) / params.output_dt))
        t_eval = np.union1d(np.linspace(t0, t1, n_out + 1), schedule.breakpoints)
    t_eval = np.asarray(t_eval, dtype=float)
    if t_eval.min() < t0 or t_eval.max() > t1:
        raise ValueError("t_eval outside the schedule")

    def rhs(t, y):
        N, T = np.exp(y)
        r = rates(track, params, t, N, T)
        return [-(r["evaporation"] + r["background"] + r["three_body"]), r["dTdt"] / T]

    def below_one_atom(t, y):
        return y[0]

    below_one_atom.terminal = True
    below_one_atom.direction = -1

    y = np.log([initial.N, initial.temperature])
    points = []
    edges = schedule.breakpoints
    for a, b in zip(edges[:-1], edges[1:]):
        inside = t_eval[(t_eval >= a) & (t_eval <= b)]
        if points:
            inside = inside[inside > points[-1].t]
        sol = solve_ivp(
            rhs,
            (a, b),
            y,
            method="RK45",
            t_eval=inside,
            rtol=params.ode_rel_tol,
            atol=params.ode_abs_tol,
            events=below_one_atom,
        )
        for t, (lnN, lnT) in zip(sol.t, sol.y.T):
            points.append(_point(track, species, t, np.exp(lnN), np.exp(lnT)))
        if sol.status == 1:
            raise StateCollapse(f"atom number fell below one at t={sol.t_events[0][0]:.4g} s", points)
        if sol.status < 0:
            raise StiffnessFailure(f"integration failed near t={sol.t[-1] if len(sol.t) else a}: {sol.message}")
        y = sol.y[:, -1] if sol.t.size and sol.t[-1] == b else _final_state(rhs, a, b, y, params)
        if not np.all(np.isfinite(y)):
            raise StateCollapse(f"non-finite state at t={b}", points)
    return points


def _final_state(rhs, a, b, y, params):
    sol = solve_ivp(rhs, (a, b), y, method="RK45", rtol=params.ode_rel_tol, atol=params.ode_abs_tol)
    if sol.status < 0:
        raise StiffnessFailure(sol.message)
    return sol.y[:, -1]


def default_initial_state(config, N=4e6, temperature=None):
    """Cloud right after loading: N atoms at depth / 10 unless T is given."""
    from types import SimpleNamespace

    if temperature is None:
        temperature = characterize(config).depth / (10 * k)
    return SimpleNamespace(N=float(N), temperature=float(temperature))


@dataclass(frozen=True)
class StagnationReport:
    stagnated: bool
    t_stagnation: float
    peak_psd: float
    t_peak: float
    collision_rate_at_peak: float


def detect_stagnation(trajectory, window=5, recovery=0.05):
    """First point where PSD stops rising while atoms are still being lost.

    The running derivative is the PSD slope over ``window`` points.  A dip
    that the trajectory later climbs out of (PSD exceeding the level at the
    dip by more than ``recovery``) is not a stagnation.
    """
    if len(trajectory) < 10:
        raise ValueError("need at least 10 trajectory points")
    psd_ = np.array([p.psd for p in trajectory])
    N = np.array([p.N for p in trajectory])
    later_max = np.maximum.accumulate(psd_[::-1])[::-1]
    w = max(1, min(window, len(psd_) - 1))
    t_stag = float("nan")
    rising = False
    for i in range(len(psd_) - w):
        slope = psd_[i + w] - psd_[i]
        if slope > 0:
            rising = True
        elif rising and N[i + w] < N[i] and later_max[i] <= psd_[i] * (1 + recovery):
            t_stag = trajectory[i].t
            break
    ipk = int(np.argmax(psd_))
    return StagnationReport(
        stagnated=bool(np.isfinite(t_stag)),
        t_stagnation=t_stag,
        peak_psd=float(psd_[ipk]),
        t_peak=trajectory[ipk].t,
        collision_rate_at_peak=trajectory[ipk].collision_rate,
    )


TRAJECTORY_COLUMNS = ["t", "N", "T_K", "eta", "depth_J", "mean_freq_rad_s", "n0_m3", "psd", "wing_fraction"]


def trajectory_to_csv(points, path=None):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRAJECTORY_COLUMNS)
    for p in points:
        writer.writerow(
            [repr(float(v)) for v in (p.t, p.N, p.T, p.eta, p.depth, p.mean_frequency, p.n0, p.psd, p.wing_fraction)]
        )
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", encoding="ascii", newline="") as fh:
            fh.write(text)
    return text


def trajectory_from_csv(path):
    with open(path, encoding="ascii") as fh:
        rows = list(csv.reader(fh))
    if rows[0] != TRAJECTORY_COLUMNS:
        raise ValueError(f"unexpected trajectory header {rows[0]}")
    return [
        TrajectoryPoint(*map(float, row)) for row in rows[1:]
    ]


def crossed_ramp(
    primary=0,
    auxiliary=1,
    duration=3.0,
    aux_on_fraction=1 / 3,
    aux_rise=0.3,
    p_start=15.0,
    p_switch=3.0,
    p_end=0.05,
    aux_max=1.0,
    aux_end=0.1,
):
    """Single-beam evaporation, compression by an auxiliary beam, joint ramp.

    The primary power falls exponentially to ``p_switch`` while the
    auxiliary beam is off; at ``aux_on_fraction * duration`` the auxiliary
    beam is ramped linearly to ``aux_max`` over ``aux_rise`` seconds, after
    which both beams fall exponentially to their end powers.
    """
    t_on = aux_on_fraction * duration
    if not (0 < t_on and t_on + aux_rise < duration):
        raise ValueError("auxiliary switch-on must fall inside the ramp")
    return PowerSchedule(
        {
            primary: (
                Segment(0.0, t_on, "exponential", p_start, p_switch),
                Segment(t_on, duration, "exponential", p_switch, p_end),
            ),
            auxiliary: (
                Segment(0.0, t_on, "hold", 0.0),
                Segment(t_on, t_on + aux_rise, "linear", 0.0, aux_max),
                Segment(t_on + aux_rise, duration, "exponential", aux_max, aux_end),
            ),
        }
    )
