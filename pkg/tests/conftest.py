import numpy as np
import pytest

from icdm_fusion.source_data import BinningConfig, DtRecord, MmrReport


@pytest.fixture
def binning():
    return BinningConfig()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def three_cell_fixture(n_records=20, seed=5):
    """Serving S plus neighbors A and B: 20 MMRs and 20 DT records, all hand-checkable.

    Levels are integers so every CIR is exact and some land on bin edges.
    """
    rng = np.random.default_rng(seed)
    reports, records = [], []
    for _ in range(n_records):
        s = float(rng.integers(-80, -60))
        a = float(rng.integers(-95, -60))
        b = float(rng.integers(-95, -60))
        nbrs = [("A", a), ("B", b)]
        if rng.random() < 0.3:
            nbrs = nbrs[:1]
        reports.append(MmrReport("S", s, tuple(sorted(nbrs, key=lambda t: -t[1]))))
        readings = [("S", s)] + [n for n in nbrs if rng.random() < 0.8]
        records.append(DtRecord(float(rng.integers(0, 100)), 0.0, tuple(readings)))
    return reports, records


# one line per acceptance criterion, printed at the end of the run
ACCEPTANCE_LINES: list[str] = []


def report_criterion(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
