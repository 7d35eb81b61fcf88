"""Monte Carlo equipotential volumes.

The volume enclosed by the surface ``U = U_min + u U0`` is estimated by
uniform sampling over a union of simple regions.  Regions are ordered;
a sample drawn from region k counts only if no earlier region contains it,
so every point of the union is owned by exactly one stratum.

Samples are drawn in fixed-size chunks, each with its own generator
spawned from ``SeedSequence(seed)`` by (region, chunk) index.  Histogram
counts are integers, so the reduction is exact and the result does not
depend on how chunks are spread over threads.
"""

import csv
import io
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import BetaTooLarge
from .trap import characterize, potential_at

log = logging.getLogger(__name__)

CHUNK = 1 << 16
BETA_REFUSE = 1.97
BETA_WARN = 1.95


@dataclass(frozen=True, eq=False)
class Box:
    center: np.ndarray
    half_widths: np.ndarray

    @property
    def volume(self):
        return float(np.prod(2 * np.asarray(self.half_widths)))

    def contains(self, pts):
        return np.all(np.abs(pts - self.center) <= self.half_widths, axis=-1)

    def sample(self, rng, n):
        return self.center + self.half_widths * rng.uniform(-1.0, 1.0, size=(n, 3))


@dataclass(frozen=True, eq=False)
class Cylinder:
    center: np.ndarray
    axis: np.ndarray
    radius: float
    half_length: float

    def _frame(self):
        a = np.asarray(self.axis, dtype=float)
        e = np.eye(3)[np.argmin(np.abs(a))]
        t1 = e - np.dot(e, a) * a
        t1 /= np.linalg.norm(t1)
        return a, t1, np.cross(a, t1)

    @property
    def volume(self):
        return float(np.pi * self.radius**2 * 2 * self.half_length)

    def contains(self, pts):
        d = pts - self.center
        zeta = d @ self.axis
        rho2 = np.sum(d * d, axis=-1) - zeta**2
        return (np.abs(zeta) <= self.half_length) & (rho2 <= self.radius**2)

    def sample(self, rng, n):
        a, t1, t2 = self._frame()
        draws = rng.random((n, 3))
        rho = self.radius * np.sqrt(draws[:, 0])
        phi = 2 * np.pi * draws[:, 1]
        zeta = self.half_length * (2 * draws[:, 2] - 1)
        return (
            self.center
            + zeta[:, None] * a
            + (rho * np.cos(phi))[:, None] * t1
            + (rho * np.sin(phi))[:, None] * t2
        )


def allocate(n_samples, weights):
    """Split ``n_samples`` over strata in proportion to ``weights``."""
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    counts = np.floor(w * n_samples).astype(np.int64)
    counts[-1] += n_samples - counts.sum()
    return counts


def _plan(region_samples):
    tasks = []
    for k, n in enumerate(region_samples):
        for j, start in enumerate(range(0, int(n), CHUNK)):
            tasks.append((k, j, min(CHUNK, int(n) - start)))
    return tasks


def _owned_points(regions, k, rng, m):
    pts = regions[k].sample(rng, m)
    keep = np.ones(m, dtype=bool)
    for earlier in regions[:k]:
        keep &= ~earlier.contains(pts)
    return pts[keep]


def _run(tasks, work, threads):
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(work, tasks))
    return [work(t) for t in tasks]


def sample_histogram(u_of, regions, weights, u_max, n_bins, n_samples, seed, threads=1):
    """Per-stratum histograms of ``u_of(points)`` on ``[0, u_max)``.

    Returns (counts, region_samples) with counts of shape (n_regions, n_bins).
    """
    region_samples = allocate(n_samples, weights)
    du = u_max / n_bins

    def work(task):
        k, j, m = task
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, j)))
        pts = _owned_points(regions, k, rng, m)
        u = np.maximum(u_of(pts), 0.0)
        idx = (u[u < u_max] / du).astype(np.int64)
        return k, np.bincount(np.minimum(idx, n_bins - 1), minlength=n_bins)

    counts = np.zeros((len(regions), n_bins), dtype=np.int64)
    for k, c in _run(_plan(region_samples), work, threads):
        counts[k] += c
    return counts, region_samples


def sample_integral(f, regions, weights, n_samples, seed, threads=1):
    """Stratified estimate of the integral of ``f`` over the union of regions.

    ``f`` maps points (m, 3) to values (m,) or (m, q).  Returns the
    integral(s) and their covariance: a float and a standard error for a
    scalar integrand, arrays of shape (q,) and (q, q) otherwise.
    """
    region_samples = allocate(n_samples, weights)

    def work(task):
        k, j, m = task
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k, j)))
        pts = _owned_points(regions, k, rng, m)
        vals = np.asarray(f(pts), dtype=float)
        vals = vals.reshape(len(pts), vals.shape[1] if vals.ndim == 2 else 1)
        return k, j, vals.sum(axis=0), vals.T @ vals

    results = sorted(_run(_plan(region_samples), work, threads), key=lambda r: r[:2])
    q = results[0][2].shape[0]
    sums = np.zeros((len(regions), q))
    prods = np.zeros((len(regions), q, q))
    for k, _, s, s2 in results:
        sums[k] += s
        prods[k] += s2
    value, cov = np.zeros(q), np.zeros((q, q))
    for k, region in enumerate(regions):
        n = region_samples[k]
        if n == 0:
            continue
        mean = sums[k] / n
        value += region.volume * mean
        cov += region.volume**2 * (prods[k] / n - np.outer(mean, mean)) / n
    if q == 1:
        return float(value[0]), float(np.sqrt(max(cov[0, 0], 0.0)))
    return value, cov


@dataclass(frozen=True, eq=False)
class VolumeTable:
    """Tabulated V(u) on a uniform grid of bin edges.

    ``bin_volume[i]`` is the volume with u in [u_edges[i], u_edges[i+1]);
    ``V`` and ``mc_stderr`` are given at the edges.  When the per-stratum
    counts are present the integration errors are exact multinomial
    variances; tables read back from CSV fall back to a conservative
    bound built from ``mc_stderr``.
    """

    u_edges: np.ndarray
    bin_volume: np.ndarray
    mc_stderr: np.ndarray
    samples: int
    seed: int
    counts: np.ndarray = None
    region_volumes: np.ndarray = None
    region_samples: np.ndarray = None

    @property
    def u_grid(self):
        return self.u_edges

    @property
    def beta(self):
        return float(self.u_edges[-1])

    @property
    def du(self):
        return float(self.u_edges[1] - self.u_edges[0])

    @property
    def u_centers(self):
        return 0.5 * (self.u_edges[1:] + self.u_edges[:-1])

    @property
    def V(self):
        return np.concatenate([[0.0], np.cumsum(self.bin_volume)])

    @property
    def dV_du(self):
        """Mean density of volume in each bin [m^3]."""
        return self.bin_volume / self.du

    def volume_at(self, u):
        return np.interp(u, self.u_edges, self.V)

    @classmethod
    def from_counts(cls, u_max, counts, region_volumes, region_samples, seed):
        counts = np.asarray(counts, dtype=np.int64)
        n_bins = counts.shape[1]
        scale = np.asarray(region_volumes, dtype=float) / np.maximum(region_samples, 1)
        bin_volume = scale @ counts
        cum = np.concatenate([np.zeros((counts.shape[0], 1), dtype=np.int64), np.cumsum(counts, axis=1)], axis=1)
        p = cum / np.maximum(region_samples, 1)[:, None]
        var = np.sum(
            (np.asarray(region_volumes, dtype=float) ** 2 / np.maximum(region_samples, 1))[:, None] * p * (1 - p),
            axis=0,
        )
        return cls(
            u_edges=np.linspace(0.0, u_max, n_bins + 1),
            bin_volume=bin_volume,
            mc_stderr=np.sqrt(var),
            samples=int(np.sum(region_samples)),
            seed=int(seed),
            counts=counts,
            region_volumes=np.asarray(region_volumes, dtype=float),
            region_samples=np.asarray(region_samples),
        )

    def integrate(self, weights):
        """Sum of ``weights[i] * bin_volume[i]`` and its standard error."""
        w = np.asarray(weights, dtype=float)
        value = float(w @ self.bin_volume)
        return value, float(np.sqrt(max(self.covariance(w, w), 0.0)))

    def covariance(self, wa, wb):
        wa = np.asarray(wa, dtype=float)
        wb = np.asarray(wb, dtype=float)
        if self.counts is not None:
            total = 0.0
            for c, vol, n in zip(self.counts, self.region_volumes, self.region_samples):
                if n == 0:
                    continue
                p = c / n
                total += vol**2 / n * (np.sum(wa * wb * p) - np.sum(wa * p) * np.sum(wb * p))
            return float(total)
        # summation by parts with the edge errors: sum w_i (V_{i+1}-V_i)
        # = w_last V_end - sum (w_i - w_{i-1}) V_i; the triangle inequality
        # on that form bounds each standard error.
        def bound(w):
            dw = np.abs(np.diff(w))
            return abs(w[-1]) * self.mc_stderr[-1] + float(np.sum(dw * self.mc_stderr[1:-1]))

        return bound(wa) * bound(wb)

    def to_csv(self, path=None):
        """CSV with columns u, V, dV_du, stderr; one row per bin edge.

        dV_du on row i is the density of the bin ending at u_i (0 on row 0).
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["u", "V_m3", "dV_du_m3", "stderr_m3"])
        dens = np.concatenate([[0.0], self.dV_du])
        for row in zip(self.u_edges, self.V, dens, self.mc_stderr):
            writer.writerow([repr(float(x)) for x in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", encoding="ascii", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, path_or_text, samples=0, seed=0):
        if "\n" in str(path_or_text):
            text = str(path_or_text)
        else:
            with open(path_or_text, encoding="ascii") as fh:
                text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        if [h.split("_")[0] for h in header] != ["u", "V", "dV", "stderr"]:
            raise ValueError(f"unexpected volume table header {header}")
        V = body[:, 1]
        return cls(
            u_edges=body[:, 0],
            bin_volume=np.diff(V),
            mc_stderr=body[:, 3],
            samples=samples,
            seed=seed,
        )


def _first_crossing(f, s_grid, level):
    """Smallest s on the grid where f(s) >= level, refined by bisection."""
    vals = f(s_grid)
    above = np.nonzero(vals >= level)[0]
    if len(above) == 0:
        return None
    i = above[0]
    if i == 0:
        return float(s_grid[0])
    lo, hi = s_grid[i - 1], s_grid[i]
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if f(np.array([mid]))[0] >= level:
            hi = mid
        else:
            lo = mid
    return float(hi)


def check_beta(config, trap, beta):
    n_powered = sum(1 for b in config.beams if b.power > 0)
    if n_powered >= 2 and beta > BETA_REFUSE:
        raise BetaTooLarge(
            f"beta={beta} exceeds {BETA_REFUSE}: the density of states diverges at the top of a crossed trap"
        )
    if not beta * trap.single_beam_depth_U0 < trap.depth:
        raise BetaTooLarge(
            f"beta={beta} reaches the escape level (depth/U0 = {trap.depth / trap.single_beam_depth_U0:.4f})"
        )
    if n_powered >= 2 and beta > BETA_WARN:
        log.warning("beta=%.3f above %.2f; the truncation integrals are sensitive to it", beta, BETA_WARN)


def trap_regions(config, trap, beta, radial_margin=0.1, core_levels=(0.03, 0.15, 0.6)):
    """Nested core boxes plus one cylinder per powered beam, covering ``u <= beta``.

    The cores are lab-aligned boxes around the minimum enclosing the
    harmonic ellipsoids u = level * beta (with 20% margin); they only
    concentrate samples where the low-u volume lives.
    Each cylinder is centred on the beam line at the point nearest the trap
    minimum.  Its half-length is where the on-axis potential reaches the
    cut, and its radius the largest first crossing of the cut along radial
    rays from the axis.  Rays that run into another beam's tube before
    crossing are left to that beam's cylinder.
    """
    x0 = trap.minimum_position
    cut = trap.minimum_potential + beta * trap.single_beam_depth_U0
    powered = [b for b in config.beams if b.power > 0]
    far = max(max(b.rayleigh_x, b.rayleigh_y) for b in powered) * 1e3

    def on_line(d):
        return lambda s: potential_at(config, x0 + np.asarray(s)[:, None] * d)

    m = config.species.mass
    regions = []
    for level in core_levels:
        semi = np.sqrt(2 * level * beta * trap.single_beam_depth_U0 / (m * np.asarray(trap.principal_frequencies) ** 2))
        half = np.sqrt((np.asarray(trap.principal_axes) ** 2) @ semi**2)
        regions.append(Box(center=x0, half_widths=1.2 * half))
    s_grid = np.concatenate([[0.0], np.geomspace(1e-3 * min(b.min_waist for b in powered), far, 8192)])
    for beam in powered:
        reach = []
        for sign in (1.0, -1.0):
            s = _first_crossing(on_line(sign * beam.axis), s_grid, cut)
            if s is None:
                raise BetaTooLarge(f"the u={beta} surface does not close along beam {beam.name or '?'}")
            reach.append(s)
        half_length = 1.01 * max(reach)
        center = beam.focus + np.dot(x0 - beam.focus, beam.axis) * beam.axis

        zetas = np.linspace(-half_length, half_length, 121)
        phis = np.linspace(0, 2 * np.pi, 24, endpoint=False)
        tx, ty = beam.transverse_x, beam.transverse_y
        dirs = np.cos(phis)[:, None] * tx + np.sin(phis)[:, None] * ty
        q = 1 + (zetas / min(beam.rayleigh_x, beam.rayleigh_y)) ** 2
        caps = 4 * max(beam.waist_x, beam.waist_y) * np.sqrt(q)
        rho = np.linspace(0, 1, 401)
        radius = 0.0
        for zeta, cap in zip(zetas, caps):
            pts = center + zeta * beam.axis + (cap * rho)[None, :, None] * dirs[:, None, :]
            above = potential_at(config, pts) >= cut
            hit = above.any(axis=1)
            first = np.argmax(above, axis=1)
            if hit.any():
                radius = max(radius, float(cap * rho[first[hit]].max()))
        if radius == 0.0:
            raise BetaTooLarge(f"could not bound the u={beta} surface around beam {beam.name or '?'}")
        regions.append(
            Cylinder(center=center, axis=beam.axis, radius=radius * (1 + radial_margin), half_length=half_length)
        )
    return regions


def region_weights(regions, core_fraction=0.3):
    """Sample share per stratum: ``core_fraction`` split evenly over the
    boxes, the rest over the cylinders by volume."""
    n_core = sum(isinstance(r, Box) for r in regions)
    vols = np.array([r.volume for r in regions[n_core:]])
    return np.concatenate([np.full(n_core, core_fraction / n_core), (1 - core_fraction) * vols / vols.sum()])


def volume_table(config, beta, n_samples, seed, n_bins=400, threads=1, trap=None, core_fraction=0.3):
    """Monte Carlo V(u) for ``u`` in [0, beta], u = (U - U_min) / U0."""
    trap = trap if trap is not None else characterize(config)
    check_beta(config, trap, beta)
    regions = trap_regions(config, trap, beta)
    u0, umin = trap.single_beam_depth_U0, trap.minimum_potential

    def u_of(pts):
        return (potential_at(config, pts) - umin) / u0

    weights = region_weights(regions, core_fraction)
    counts, region_samples = sample_histogram(u_of, regions, weights, beta, n_bins, n_samples, seed, threads)
    return VolumeTable.from_counts(beta, counts, [r.volume for r in regions], region_samples, seed)


def harmonic_volume_table(radius, beta, n_samples, seed, n_bins=400, threads=1):
    """V(u) for the isotropic test potential u = (r / radius)^2.

    Three nested cubes (1/4, 1/2 and 1 of the outer half-width) share the
    samples equally so that small u is resolved as well as large u.
    """
    half = radius * np.sqrt(beta) * 1.05
    regions = [Box(center=np.zeros(3), half_widths=np.full(3, f * half)) for f in (0.25, 0.5, 1.0)]

    def u_of(pts):
        return np.sum(pts * pts, axis=-1) / radius**2

    weights = [1 / 3] * 3
    counts, region_samples = sample_histogram(u_of, regions, weights, beta, n_bins, n_samples, seed, threads)
    return VolumeTable.from_counts(beta, counts, [r.volume for r in regions], region_samples, seed)
