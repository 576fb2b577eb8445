"""Acceptance battery: the full suite through the CLI, run twice."""
import json

import pytest

from conftest import ACCEPTANCE_LINES
from ringcap import cli
from ringcap.suite import CRITERIA, PASS

NAMES = list(CRITERIA)


@pytest.fixture(scope="module")
def runs(tmp_path_factory):
    out = []
    for tag in ("first", "second"):
        d = tmp_path_factory.mktemp(tag)
        code = cli.main(["suite", "--out", str(d)])
        doc = json.loads((d / "suite-summary.json").read_text())
        out.append((code, d, doc))
    return out


@pytest.mark.slow
@pytest.mark.parametrize("number, name", list(enumerate(NAMES, 1)), ids=NAMES)
def test_criterion(runs, number, name):
    code, d, doc = runs[0]
    status = doc["criteria"][name]["status"]
    ok = status == PASS
    if name == "reproducibility":
        same = all(r[1].joinpath("suite-summary.json").read_bytes()
                   == runs[0][1].joinpath("suite-summary.json").read_bytes() for r in runs)
        ok = ok and same
    line = f"criterion {number:2d} {name}: {'PASS' if ok else 'FAIL'}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert ok, f"{line} ({status}): {doc['criteria'][name]['details']}"


@pytest.mark.slow
def test_suite_exit_code(runs):
    assert [r[0] for r in runs] == [0, 0]
    assert all((r[1] / "timing.json").exists() for r in runs)
