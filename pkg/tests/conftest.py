import sys

import numpy as np
import pytest
from scipy.constants import k

from odtbec import RB87, GaussianBeam, TrapConfig, characterize
from odtbec.volume import volume_table


def crossed(w0=40e-6, wavelength=1.06e-6, power=5.0, gravity=False):
    return TrapConfig(
        RB87,
        (
            GaussianBeam(power, w0, wavelength=wavelength, axis=(1, 0, 0), name="a"),
            GaussianBeam(power, w0, wavelength=wavelength, axis=(0, 1, 0), name="b"),
        ),
        gravity_enabled=gravity,
    )


def single(power=15.0, w0=25e-6, wavelength=1.064e-6, gravity=False):
    return TrapConfig(RB87, (GaussianBeam(power, w0, wavelength=wavelength, axis=(1, 0, 0)),), gravity_enabled=gravity)


@pytest.fixture(scope="session")
def ref_single():
    cfg = single()
    return cfg, characterize(cfg)


@pytest.fixture(scope="session")
def fig1_tables():
    """Crossed 40 um traps at both wavelengths with 2e6-sample volume tables."""
    out = {}
    for lam in (1.06e-6, 10.6e-6):
        cfg = crossed(wavelength=lam)
        trap = characterize(cfg)
        out[lam] = (cfg, trap, volume_table(cfg, 1.9, 2 * 10**6, 11, trap=trap, threads=4))
    return out


def mK(x):
    return x / k * 1e3


def approx(expected, rel=None, abs=0.0):
    """pytest.approx without the 1e-12 absolute floor, which would swallow SI-sized values."""
    return pytest.approx(expected, rel=1e-6 if rel is None else rel, abs=abs)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance.RESULTS:
        terminalreporter.write_line(line)
