from __future__ import annotations

import numpy as np
import pytest

from sharecascade.topology import Topology

ACCEPTANCE: list[tuple[str, bool, str]] = []


def record(name: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE.append((name, bool(ok), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}".rstrip())


def random_positive_topology(n: int, rng: np.random.Generator, low: float = 0.05) -> Topology:
    """Dense instance: every quality in (low, 1], unit diagonal, d and c in (0, 1]."""
    P = rng.uniform(low, 1.0, size=(n, n))
    np.fill_diagonal(P, 1.0)
    d = 1.0 - rng.random(n)
    c = 1.0 - rng.random(n)
    return Topology(P, d, c)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
