import math
import warnings

import numpy as np
import pytest

from dtntdg.geometry import ProblemConfig, Region, rectangle, rectangle_mesh

TWO_PI = 2 * math.pi


def two_layer_config(eps_minus=1.5, theta=-math.pi / 3, k=5.0, H=3.0, **kw):
    region = Region(rectangle(0, TWO_PI, -H, 0), eps_minus)
    return ProblemConfig(L=TWO_PI, H=H, k=k, theta=theta, eps_minus=eps_minus, regions=(region,), **kw)


@pytest.fixture
def free_config():
    return ProblemConfig(L=TWO_PI, H=1.0, k=5.0, theta=-math.pi / 3)


@pytest.fixture
def lossless_config():
    return two_layer_config()


@pytest.fixture
def lossy_config():
    return two_layer_config(eps_minus=(1.25 + 0.1j) ** 2, theta=-math.pi / 4)


@pytest.fixture
def coarse_mesh(lossless_config):
    return rectangle_mesh(lossless_config, 3.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240521)


@pytest.fixture(autouse=True)
def _quiet_conditioning():
    from dtntdg.errors import IllConditionedWarning

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IllConditionedWarning)
        yield


def jittered_mesh(config, h, rng, amount=0.25, y_fixed=(0.0,)):
    """Structured mesh with free vertices moved randomly by up to ``amount * h``.

    Vertices on the cell boundary, on the listed horizontal lines and on
    obstacle boundaries stay put, so the material layout is unchanged.
    """
    from dtntdg.geometry import build_mesh

    base = rectangle_mesh(config, h)
    v = base.vertices.copy()
    on_obstacle = np.zeros(len(v), dtype=bool)
    for o in config.obstacles:
        lo, hi = o.min(axis=0), o.max(axis=0)
        on_obstacle |= np.all((v >= lo - 1e-12) & (v <= hi + 1e-12), axis=1)
    free = ((v[:, 0] > 0) & (v[:, 0] < config.L) & (np.abs(v[:, 1]) < config.H) & ~on_obstacle)
    for y in y_fixed:
        free &= np.abs(v[:, 1] - y) > 1e-12
    v[free] += rng.uniform(-amount * h, amount * h, size=(free.sum(), 2))
    cents = np.array([v[el].mean(axis=0) for el in base.elements])
    return build_mesh(v, base.elements, config.eps_at(cents), config)


def exact_coefficients(mesh, basis, terms):
    """Coefficient vector for a field given per element as ``{direction: amplitude}``.

    ``terms(e)`` returns a list of ``(unit direction, amplitude)``; each
    direction must belong to the element's direction set.
    """
    c = np.zeros(basis.N, dtype=complex)
    for e in range(mesh.n_elements):
        dirs = basis.spaces[e].directions
        for d, amp in terms(e):
            j = int(np.argmin(np.linalg.norm(dirs - np.asarray(d), axis=1)))
            assert np.linalg.norm(dirs[j] - d) < 1e-12
            c[basis.index(e, j)] += amp
    return c


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
