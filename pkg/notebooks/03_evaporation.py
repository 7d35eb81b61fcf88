# %% [markdown]
# # Evaporation in a single beam and in a crossed trap
#
# The kinetic model tracks (N, T) in the instantaneous trap.  A single
# beam lowered in power loses collision rate because its frequencies drop
# as sqrt(P); phase-space density stalls around 1e-2.  Switching on a
# second, tighter beam halfway through compresses the cloud and carries it
# to degeneracy.

# %%
from types import SimpleNamespace

from scipy.constants import k

from odtbec import characterize, detect_stagnation, evolve
from odtbec.config import load


def run(name):
    cfg = load(name)
    sched = cfg.schedule
    depth0 = characterize(sched.configured(cfg.trap, sched.t_start)).depth
    init = SimpleNamespace(N=cfg.initial["N"], temperature=depth0 / (k * cfg.initial["eta"]))
    return evolve(init, cfg.trap, sched, cfg.evap)


single = run("paper_single_beam")
crossed = run("paper_full_ramp")

# %% [markdown]
# ## Single beam: 15 W to 0.5 W in 3 s, then a hold

# %%
for p in single[::50]:
    print(f"t {p.t:4.2f} s  N {p.N:9.3g}  T {p.T * 1e6:8.2f} uK  eta {p.eta:5.2f}  PSD {p.psd:.2e}  G_el {p.collision_rate:7.0f}/s")
rep = detect_stagnation(single)
print(f"peak PSD {rep.peak_psd:.2e} at {rep.t_peak:.2f} s; stagnation flagged: {rep.stagnated} ({rep.t_stagnation:.2f} s)")

# %% [markdown]
# ## Crossed ramp
#
# The auxiliary beam switches on at 1 s.  The collision rate jumps and the
# ramp reaches T <= Tc with a few 1e5 atoms.

# %%
for p in crossed[::25]:
    flag = " degenerate" if p.degenerate else ""
    print(f"t {p.t:4.2f} s  N {p.N:9.3g}  T {p.T * 1e9:9.1f} nK  Tc {p.critical_temperature * 1e9:7.1f} nK  PSD {p.psd:.2e}  wings {p.wing_fraction:.3f}{flag}")
first = next(p for p in crossed if p.degenerate)
print(f"T <= Tc at {first.t:.2f} s with {first.N:.3g} atoms (Tc = {first.critical_temperature * 1e9:.0f} nK)")
