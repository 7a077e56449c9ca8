import numpy as np
import pytest

from clampedbeam.elements import HEX_SIGNS
from clampedbeam.geometry import SectionSpec, VolumeMesh


def unit_hex():
    """Single element occupying [0, 1]^3."""
    nodes = (HEX_SIGNS + 1.0) / 2.0
    return VolumeMesh(nodes, np.arange(8)[None, :], {}, {})


def box_mesh(n=(2, 2, 2), size=(1.0, 1.0, 1.0)):
    """Structured hex mesh of a box with the library's node ordering."""
    xs = [np.linspace(0, s, k + 1) for s, k in zip(size, n)]
    X, Y, Z = np.meshgrid(*xs, indexing="ij")
    nodes = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    idx = np.arange(len(nodes)).reshape(n[0] + 1, n[1] + 1, n[2] + 1)
    hexes = []
    for i in range(n[0]):
        for j in range(n[1]):
            for k in range(n[2]):
                c = [(i + (s[0] > 0), j + (s[1] > 0), k + (s[2] > 0)) for s in HEX_SIGNS]
                hexes.append([idx[a, b, d] for a, b, d in c])
    return VolumeMesh(nodes, np.array(hexes), {}, {})


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


@pytest.fixture(scope="session")
def unit_disc():
    return SectionSpec.disc(1.0)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None) and not _acceptance_ran(terminalreporter):
        return
    terminalreporter.section("acceptance criteria")
    for n, title in mod.TITLES.items():
        ok, detail = mod.RESULTS.get(n, (False, "not evaluated"))
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}")


def _acceptance_ran(reporter):
    return any("test_acceptance" in r.nodeid for key in ("passed", "failed", "error")
               for r in reporter.stats.get(key, []))
