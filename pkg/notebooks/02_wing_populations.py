# %% [markdown]
# # Centre and wing populations of a crossed trap
#
# Two equal 40 um beams cross at their foci.  Atoms hotter than one beam's
# depth can leave the crossing along either beam, so part of the cloud sits
# in the "wings".  We compare the harmonic estimate with the exact
# truncated-Boltzmann populations computed from the equipotential volume
# table V(u), for a 1.06 um and a 10.6 um trap.

# %%
import numpy as np

from odtbec import TruncatedThermalState, analytic_populations, characterize, exact_populations
from odtbec.config import load
from odtbec.thermo import wing_fraction_half_point
from odtbec.volume import volume_table

SAMPLES = 10**6  # the CLI default is 1e7; 1e6 keeps this script quick

tables = {}
for name in ("fig1_1um", "fig1_10um"):
    run = load(name)
    cfg, th = run.trap, run.thermo
    trap = characterize(cfg)
    lam = cfg.beams[0].wavelength
    tables[lam] = (cfg, th, trap, volume_table(cfg, th.beta, SAMPLES, th.seed, threads=4, trap=trap))
    print(f"{lam * 1e6:5.2f} um: half the atoms in the wings at eta = {wing_fraction_half_point(40e-6, lam):.2f}")

# %% [markdown]
# ## Wing fraction versus eta

# %%
print(" eta   1.06 um exact  analytic   10.6 um exact  analytic")
for eta in range(6, 13):
    cols = []
    for lam, (cfg, th, trap, vt) in tables.items():
        state = TruncatedThermalState.at_eta(cfg, th.N, eta, th.beta, trap=trap)
        ex = exact_populations(state, vt, tolerance=None)
        an = analytic_populations(th.N, eta, 40e-6, lam)
        cols += [ex.wing_fraction, an.wing_fraction]
    print(f"{eta:4d}   {cols[0]:11.4f}  {cols[1]:8.4f}   {cols[2]:13.5f}  {cols[3]:8.5f}")

# %% [markdown]
# ## Peak density
#
# The exact n0 sits below the harmonic one because the Gaussian wells
# open up faster than a parabola; the gap closes slowly as the cloud cools
# deeper into the well (larger eta).

# %%
for lam, (cfg, th, trap, vt) in tables.items():
    for eta in (8, 10, 12, 14, 16):
        state = TruncatedThermalState.at_eta(cfg, th.N, eta, th.beta, trap=trap)
        ex = exact_populations(state, vt, tolerance=None)
        an = analytic_populations(th.N, eta, 40e-6, lam)
        print(f"{lam * 1e6:5.2f} um eta {eta:2d}: n0 exact {ex.n0 * 1e-6:.3e} cm^-3, harmonic {an.n0 * 1e-6:.3e}, ratio {ex.n0 / an.n0:.3f}")
