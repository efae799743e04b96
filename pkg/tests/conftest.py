from pathlib import Path

import pytest

from topnav.harness.config import load_config

ROOT = Path(__file__).resolve().parent.parent
BENCHMARK_CONFIG = ROOT / "configs" / "benchmark.cfg"


@pytest.fixture(scope="session")
def bench_cfg():
    return load_config(BENCHMARK_CONFIG)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
