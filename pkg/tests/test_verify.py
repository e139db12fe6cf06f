import pytest

from facts.cli import main
from facts.verify import run_all


@pytest.fixture(scope="module")
def results():
    return run_all()


def test_all_properties_pass(results):
    failed = [r.line() for r in results if not r.passed]
    assert not failed, "\n".join(failed)


def test_repeatable(results):
    again = run_all()
    assert [(r.name, r.passed, r.worst) for r in again] == [(r.name, r.passed, r.worst) for r in results]


def test_fault_injection_breaks_feature_invariance():
    failed = {r.name for r in run_all(fault=True) if not r.passed}
    assert failed == {"router R.P.I. (64-bit)", "layer R.P.I. per-step (64-bit)"}


def test_cli_exit_codes(capsys):
    assert main(["verify"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "properties passed" in out
    assert main(["verify", "--inject-fault"]) == 1
    assert "FAIL  router R.P.I." in capsys.readouterr().out
