import numpy as np
import pytest

from filmqec.calib import CalibrationSnapshot, ChainSpec, EdgeCalib, GateDurations, QubitCalib, synthetic_snapshot


def line_snapshot(n=5, t1=100.0, t2=80.0, ro=0.01, sq=0.001, tq=0.01, durations=None, snapshot_id="line"):
    """Qubits 0..n-1 on a path, all with the same parameters."""
    qubits = {q: QubitCalib(t1=t1, t2=t2, readout_error=ro, sq_gate_error=sq) for q in range(n)}
    edges = tuple(EdgeCalib(q, q + 1, tq) for q in range(n - 1))
    return CalibrationSnapshot(
        snapshot_id=snapshot_id,
        timestamp=1_700_000_000,
        device_name="line",
        qubits=qubits,
        edges=edges,
        durations=durations or GateDurations(gate1=0.05, gate2=0.1, meas_reset=1.0, idle_round=0.5),
    )


def line_chain(d):
    return ChainSpec.from_path(list(range(2 * d - 1)))


@pytest.fixture
def device():
    return synthetic_snapshot(rows=3, cols=15, seed=3)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ------------------------------------------------------

ACCEPTANCE: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Remember one acceptance outcome; printed together at the end of the run."""
    line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
