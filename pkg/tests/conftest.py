import numpy as np
import pytest

from yieldcast.ingest import SynthConfig, generate_synthetic

# criterion number -> (passed, detail); filled by test_acceptance, printed at the end
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def small_synth():
    """3 CRDs x 4 counties, 2008-2016: quick to build, big enough for 100 samples."""
    cfg = SynthConfig(n_crds=3, counties_per_crd=4, start_year=2008, end_year=2016)
    return generate_synthetic(cfg, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
