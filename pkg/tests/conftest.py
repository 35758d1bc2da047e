import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from skilltransfer.config import load_run_config
from skilltransfer.pipeline import run_pipeline
from skilltransfer.suite import assets_root

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def assets():
    return assets_root()


_RUNS = {}


def demo_run(name: str):
    """Pipeline result for a shipped demo config, computed once per session."""
    if name not in _RUNS:
        _RUNS[name] = run_pipeline(load_run_config(assets_root() / "configs" / f"{name}.json"))
    return _RUNS[name]


@pytest.fixture(scope="session")
def scrape_run():
    return demo_run("scrape_demo")


@pytest.fixture(scope="session")
def scoop_run():
    return demo_run("scoop_demo")


@pytest.fixture(scope="session")
def cut_run():
    return demo_run("cut_demo")


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, line = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {n}. {line}")
