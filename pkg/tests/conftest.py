import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from pfgn import data  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    return data.build_dataset(20, seed=7, n_points=128, n_surface=32)


# ------------------------------------------------------------ acceptance summary

CRITERIA = {
    1: "parameter count",
    2: "gradient correctness",
    3: "flow-matching exactness",
    4: "diffusion schedule and identities",
    5: "permutation equivariance",
    6: "end-to-end desk-scale training",
    7: "force quadrature oracles",
    8: "robustness protocol",
    9: "determinism",
}
_outcomes = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion the test belongs to")


def pytest_runtest_logreport(report):
    n = dict(report.user_properties).get("criterion")
    if n is None:
        return
    entry = _outcomes.setdefault(n, {"ok": True, "seen": False, "notes": []})
    if report.when == "call":
        entry["seen"] = True
        entry["notes"] += [f"{k}={v}" for k, v in report.user_properties if k != "criterion"]
    if report.failed or (report.when == "call" and report.skipped):
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n, name in CRITERIA.items():
        entry = _outcomes.get(n)
        if entry is None or not entry["seen"]:
            status = "NOT RUN"
        else:
            status = "PASS" if entry["ok"] else "FAIL"
        tr.write_line(f"criterion {n} ({name}): {status}")
        for note in (entry or {}).get("notes", []):
            tr.write_line(f"    {note}")
