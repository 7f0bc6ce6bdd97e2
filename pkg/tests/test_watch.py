import io
import json
import logging
import time

from chaincheck.engine import SECURE
from chaincheck.model import IntRange
from chaincheck.watch import VIOLATION, Watcher, recenter_window, watch


def _run(model, lines, **kw):
    reports = []
    summary = watch(model, iter(lines), reports.append, **kw)
    return reports, summary


def _quiet_home(home):
    # nobody attacks, so a steady feed inside the window stays secure
    return home.with_vulnerable([])


def test_steady_feed_gives_periodic_secure(home):
    def slow_feed():
        for _ in range(3):
            yield json.dumps({"temperature": 25, "location": 3})
            time.sleep(0.15)

    # width-1 windows pin each sensor to its last reading
    reports = []
    summary = watch(_quiet_home(home), slow_feed(), reports.append, interval_ms=50,
                    window_width=1, check_on_start=False)
    assert {r.verdict for r in reports} == {SECURE}
    reasons = [r.extra["watch"]["reason"] for r in reports]
    assert "interval" in reasons and "state-change" in reasons
    assert summary.rechecks == len(reports)


def test_window_violation_rechecks_immediately(home):
    reports, summary = _run(_quiet_home(home), ['{"temperature": 40}'], interval_ms=None)
    assert reports[-1].extra["watch"]["reason"] == VIOLATION
    assert reports[-1].extra["watch"]["state"]["temperature"] == 40
    assert summary.window_violations == 1


def test_unknown_attribute_skipped(home, caplog):
    with caplog.at_level(logging.WARNING):
        reports, summary = _run(home, ['{"colour": "red"}', "not json", "[1]"], interval_ms=None)
    assert summary.skipped == 1
    assert "unknown attribute" in caplog.text
    assert summary.rechecks == 1  # only the start check


def test_reports_carry_snapshot(home):
    reports, summary = _run(home, ['{"occupancy": "TRUE"}'], interval_ms=None)
    info = reports[-1].extra["watch"]
    assert info["state"]["occupancy"] == "TRUE"
    assert info["timestamp"] and info["sequence"] == 2
    assert summary.to_json()["summary"]["last_verdict"] == reports[-1].verdict


def test_recenter_window_clamps(home):
    temp = home.attribute("temperature")
    assert recenter_window(temp, 50, 5) == IntRange(48, 52)
    assert recenter_window(temp, 1, 5) == IntRange(0, 4)
    assert recenter_window(temp, 100, 5) == IntRange(96, 100)


def test_window_width_recenters(home):
    w = Watcher(home, window_width=3)
    changed, violated = w.apply({"temperature": 60})
    assert changed and violated
    assert w.model.attribute("temperature").window == IntRange(59, 61)


def test_widening_without_width(home):
    w = Watcher(home)
    w.apply({"temperature": 40})
    assert w.model.attribute("temperature").window == IntRange(23, 40)
