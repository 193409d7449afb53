"""Acceptance criteria 1-12 at their stated tolerances.

The whole suite runs once per session through :func:`cqedfit.acceptance.reproduce`
(which executes criteria 1-11 twice and judges criterion 12 on the two
reports). One ``[PASS]``/``[FAIL]`` line per criterion is printed in the
terminal summary; running this file directly prints the same lines.
"""

import pytest

from cqedfit.acceptance import CRITERIA, Context, reproduce

from conftest import ACCEPTANCE_LINES


@pytest.fixture(scope="session")
def acceptance(pytestconfig):
    results, doc = reproduce(Context())
    pytestconfig.stash[ACCEPTANCE_LINES].extend(r.line() for r in results)
    return {r.id: r for r in results}, doc


@pytest.mark.slow
@pytest.mark.parametrize("criterion", CRITERIA)
def test_criterion(acceptance, criterion):
    results, _ = acceptance
    r = results[criterion]
    assert r.passed, r.line()


@pytest.mark.slow
def test_report_lists_every_criterion(acceptance):
    _, doc = acceptance
    assert sorted(doc["criteria"], key=int) == [str(i) for i in CRITERIA]
    assert doc["summary"]["failed"] == []
    assert all("runtime" not in c for c in doc["criteria"].values())


if __name__ == "__main__":
    reproduce(Context(), progress=lambda r: print(r.line(), flush=True))
