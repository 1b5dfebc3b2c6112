import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nightvpr import harness, sim  # noqa: E402

GOLDEN = Path(__file__).parent / "golden"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def benchmark_cfg():
    return sim.BenchmarkConfig()


@pytest.fixture(scope="session")
def benchmark(benchmark_cfg):
    """Default synthetic benchmark, preprocessed: (reference map, query set)."""
    return harness.processed_dataset(sim.build_benchmark(benchmark_cfg))


@pytest.fixture(scope="session")
def benchmark_dir(tmp_path_factory, benchmark_cfg):
    root = tmp_path_factory.mktemp("bench")
    return harness.save_dataset(sim.build_benchmark(benchmark_cfg), root)


_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    props = dict(report.user_properties)
    if "criterion" in props:
        _ACCEPTANCE.append((props["criterion"], report.passed, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(_ACCEPTANCE):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}")
