"""Acceptance suite: every criterion at its frozen tolerance.

The full ``accept-all`` run is executed twice, serially and with two worker
processes; criteria 1-9 are read from the serial run and criterion 10 also
compares the two reports byte for byte.
"""

import json

import pytest

from nhrmt.harness import make_config, run_experiment
from nhrmt.harness.acceptance import CRITERIA

SEED = 0


@pytest.fixture(scope="module")
def runs():
    serial = run_experiment(make_config({"experiment": "accept-all", "seed": SEED}))
    pooled = run_experiment(make_config({"experiment": "accept-all", "seed": SEED,
                                         "workers": 2}))
    return serial, pooled


def _report_line(capsys, cid, passed, measured):
    with capsys.disabled():
        verdict = "PASS" if passed else "FAIL"
        print(f"\n[acceptance] criterion {cid:>2} {CRITERIA[cid]:<34} {verdict}  "
              f"{json.dumps(measured, sort_keys=True, default=str)}")


def _criterion(report, cid):
    return next(c for c in report.criteria if c["id"] == cid)


@pytest.mark.parametrize("cid", range(1, 10),
                         ids=[f"{i:02d}_{CRITERIA[i].replace(' ', '_').replace('-', '_')}"
                              for i in range(1, 10)])
def test_criterion(runs, cid, capsys):
    entry = _criterion(runs[0], cid)
    _report_line(capsys, cid, entry["passed"], entry["measured"])
    assert entry["passed"], f"criterion {cid} ({entry['tolerance']}): {entry['measured']}"


def test_criterion_10_determinism(runs, capsys):
    serial, pooled = runs
    internal = _criterion(serial, 10)
    identical = serial.to_json() == pooled.to_json()
    passed = identical and internal["passed"]
    _report_line(capsys, 10, passed, {"full_report_identical_across_workers": identical,
                                      **internal["measured"]})
    assert passed
