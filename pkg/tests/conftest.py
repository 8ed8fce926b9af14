import functools
import warnings

import numpy as np
import pytest
from scipy.integrate import cumulative_simpson

from branchmax.exit_laws import WindowLaw
from branchmax.levy import catalog
from branchmax.offspring import OffspringLaw, binary
from branchmax.solver import QuadratureTailWarning, solve_u

CATALOG = catalog()
LAWS = {
    "none": OffspringLaw((1.0,)),
    "sub": OffspringLaw((0.75, 0.0, 0.25)),
    "crit": binary(0.5),
}


@functools.lru_cache(maxsize=None)
def window(name):
    return WindowLaw(CATALOG[name])


@functools.lru_cache(maxsize=None)
def solved(name, law):
    """Cached (curve, report) for a catalog model and a key of LAWS."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", QuadratureTailWarning)
        return solve_u(CATALOG[name], LAWS[law], window=window(name))


@pytest.fixture(scope="session")
def models():
    return CATALOG


def convolved_density(wl, z, step=0.005):
    """Density of S_e - D at z, by numerical convolution of the two marginals.

    Written through the tail T(d) = P(D > d) so that singular depth densities
    (stable parts) stay integrable on a uniform grid:
    int_a^inf ph e^{-ph(z+d)} dF_D(d) = ph e^{-ph(z+a)} T(a) - ph^2 int_a^inf e^{-ph(z+d)} T(d) dd.
    """
    ph = wl.phi1
    # the weight e^{-ph d} bounds the range whatever the depth tail does
    d_max = 12.0 + 40.0 / ph
    d = np.arange(0.0, d_max + step, step)
    tail = wl.d_tail(d)
    tail[0] = 1.0 - wl.atom
    g = np.exp(-ph * d) * tail
    # int_{d_i}^inf g
    upper = cumulative_simpson(g[::-1], dx=step, initial=0.0)[::-1]
    out = np.empty_like(z)
    for i, zz in enumerate(z):
        a = max(0.0, -zz)
        k = int(round(a / step))
        jump = wl.atom * ph * np.exp(-ph * zz) if zz >= 0 else 0.0
        out[i] = jump + ph * np.exp(-ph * (zz + d[k])) * tail[k] - ph**2 * np.exp(-ph * zz) * upper[k]
    return out


# one line per acceptance criterion, repeated at the end of the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
