import os
import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

from gridopt.grid_model import ieee30  # noqa: E402
from gridopt.pipeline import StudyConfig, run_study  # noqa: E402

# fixed example stream so runs are reproducible; HYPOTHESIS_PROFILE=explore searches afresh
settings.register_profile("default", max_examples=40, deadline=None, derandomize=True)
settings.register_profile("explore", max_examples=200, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# acceptance criteria outcomes, printed at the end of the session
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def net30():
    return ieee30()


@pytest.fixture(scope="session")
def default_study(net30):
    """The full default study; slow (about a minute), so run once per session."""
    return run_study(net30, StudyConfig())


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE, key=lambda s: (int(s.split()[0].rstrip("ab")), s)):
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  criterion {name}: {detail}")
