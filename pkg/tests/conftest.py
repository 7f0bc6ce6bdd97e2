import pytest

from chaincheck.fixtures import overlapping_chains, smart_home, smart_home_privacy_labels
from chaincheck.model import parse_model


@pytest.fixture
def home():
    return smart_home()


@pytest.fixture
def home_privacy():
    return smart_home(labels=smart_home_privacy_labels())


@pytest.fixture
def overlap():
    return overlapping_chains()


def build(doc: dict):
    """Parse a model from a dict literal, so tests read like model files."""
    import json

    return parse_model(json.dumps(doc))


def onoff(name, initial="OFF", **extra):
    return {"name": name, "kind": extra.pop("kind", "actuator"),
            "domain": {"enum": ["ON", "OFF"]}, "initial": initial, **extra}


def eq(attr, value):
    return {"op": "=", "attr": attr, "value": value}


# Acceptance results, filled by tests/test_acceptance.py and printed at the end of the run.
ACCEPTANCE: dict[int, tuple[bool, str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, title, detail = ACCEPTANCE[n]
        terminalreporter.write_line(
            f"criterion {n}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{detail}]" if detail else ""))
