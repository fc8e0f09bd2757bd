import dataclasses

import numpy as np
import pytest

from raman_lambda.hamiltonian import RamanConfig, default_config
from raman_lambda.hilbert import build_space_layout
from raman_lambda.perturbation import decompose

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    # one line per test: failures in setup or call count, a passing call counts
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        number, title = marker.args
        detail = getattr(item, "acceptance_detail", "")
        _ACCEPTANCE.append((number, title, rep.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        status = "PASS" if passed else "FAIL"
        line = f"[{status}] criterion {number:>2}: {title}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)


@pytest.fixture
def detail(request):
    """Attach a short measured-value note to the acceptance line."""

    def note(text):
        request.node.acceptance_detail = text

    return note


def random_config(rng: np.random.Generator, max_lambda: float = 0.1) -> RamanConfig:
    n_axes = int(rng.integers(1, 3))
    if n_axes == 1:
        cutoffs = [int(rng.integers(4, 11))]
    else:
        cutoffs = [int(rng.integers(4, 8)), int(rng.integers(4, 8))]
    delta = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0))
    g13 = rng.uniform(0.2, 1.0) * np.exp(1j * rng.uniform(0, 2 * np.pi))
    g23 = rng.uniform(0.2, 1.0) * np.exp(1j * rng.uniform(0, 2 * np.pi))
    cfg = RamanConfig(
        omega=tuple(np.sort(rng.uniform(0.0, 5.0, 3))),
        nu=rng.uniform(0.2, 1.0),
        delta=delta,
        g13=g13,
        g23=g23,
        eta13=tuple(rng.uniform(-0.3, 0.3, n_axes)),
        eta23=tuple(rng.uniform(-0.3, 0.3, n_axes)),
        layout=build_space_layout(cutoffs),
    )
    return cfg.with_lambda(float(rng.uniform(0.01, max_lambda)))


@pytest.fixture(scope="session")
def random_configs():
    rng = np.random.default_rng(20240611)
    return [random_config(rng) for _ in range(20)]


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def dec(cfg):
    return decompose(cfg, 2)


@pytest.fixture
def small_cfg():
    return dataclasses.replace(default_config(), layout=build_space_layout([5]))
