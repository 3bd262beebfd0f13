import functools

import pytest
from hypothesis import settings

from robinlab.geometry import disk, ellipse
from robinlab.mesh import triangulate
from robinlab.solver import assemble

settings.register_profile("repo", max_examples=40, deadline=None, derandomize=True)
settings.load_profile("repo")

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@functools.lru_cache(maxsize=None)
def system_for(name: str, h: float):
    dom = {"disk": disk(1.0), "ellipse": ellipse(1.5, 1.0)}[name]
    return assemble(triangulate(dom, h))


@pytest.fixture(scope="session")
def disk_system():
    return system_for("disk", 0.05)


@pytest.fixture(scope="session")
def ellipse_system():
    return system_for("ellipse", 0.05)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
