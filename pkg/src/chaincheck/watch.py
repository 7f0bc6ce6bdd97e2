"""Continuous re-verification against a live state feed.

A reader thread parses line-delimited JSON updates (``{"attr": value}``)
into a queue.  The main loop re-checks the model, with the latest observed
values as its initial state, whenever the interval elapses or an update
arrives.  An observed sensor value outside its window triggers an immediate
re-check with reason ``window-violation`` and re-predicts the window.
Pending triggers are coalesced so at most one re-check runs at a time.
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Callable, Iterable

from .model import EnumDomain, IntRange, ModelSpec, _typed
from .pipeline import ESCALATION, PipelineOptions, RunReport, run_check

log = logging.getLogger(__name__)

TICK = "interval"
UPDATE = "state-change"
VIOLATION = "window-violation"
_EOF = object()


@dataclass
class WatchSummary:
    rechecks: int = 0
    updates: int = 0
    skipped: int = 0
    window_violations: int = 0
    verdicts: dict = field(default_factory=dict)
    last_verdict: str | None = None

    def to_json(self) -> dict:
        return {"summary": {
            "rechecks": self.rechecks, "updates": self.updates, "skipped": self.skipped,
            "window_violations": self.window_violations, "verdicts": dict(self.verdicts),
            "last_verdict": self.last_verdict}}


def _reader(lines: Iterable[str], q: queue.Queue) -> None:
    try:
        for line in lines:
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                log.warning("skipping malformed feed line: %s", exc)
                q.put(("bad", None))
                continue
            if not isinstance(obj, dict):
                log.warning("skipping feed line that is not an object")
                q.put(("bad", None))
                continue
            q.put(("update", obj))
    finally:
        q.put((_EOF, None))


def recenter_window(attr, value, width: int):
    """Integer window of ``width`` values centred on ``value`` and clamped to the domain."""
    dom = attr.domain
    if not isinstance(dom, IntRange):
        return attr.window
    width = max(1, min(width, dom.hi - dom.lo + 1))
    lo = value - (width - 1) // 2
    lo = max(dom.lo, min(lo, dom.hi - width + 1))
    return IntRange(lo, lo + width - 1)


def _widen(attr, value):
    win = attr.window
    if isinstance(win, IntRange) and isinstance(attr.domain, IntRange):
        return IntRange(min(win.lo, value), max(win.hi, value))
    values = list(win.values) + [value]
    order = {_typed(v): i for i, v in enumerate(attr.domain.values)}
    return EnumDomain(tuple(sorted(set(values), key=lambda v: order[_typed(v)])))


class Watcher:
    """Holds the current model and applies feed updates to it."""

    def __init__(self, model: ModelSpec, mode: str = ESCALATION,
                 options: PipelineOptions = PipelineOptions(), window_width: int | None = None):
        self.model = model
        self.mode = mode
        self.options = options
        self.window_width = window_width
        self.summary = WatchSummary()
        self.sequence = 0

    def apply(self, update: dict) -> tuple[bool, bool]:
        """Fold one update into the model; returns (anything applied, window violated)."""
        violated = False
        by_name = self.model.by_name
        values, attrs = {}, {}
        for name, value in update.items():
            attr = by_name.get(name)
            if attr is None:
                log.warning("unknown attribute %r in feed; update skipped", name)
                self.summary.skipped += 1
                continue
            if value not in attr.domain:
                log.warning("value %r outside the domain of %s; update skipped", value, name)
                self.summary.skipped += 1
                continue
            values[name] = value
            if attr.is_sensor and attr.window is not None:
                outside = value not in attr.window
                if outside:
                    violated = True
                    self.summary.window_violations += 1
                if self.window_width and isinstance(attr.domain, IntRange):
                    new = recenter_window(attr, value, self.window_width)
                elif outside:
                    new = _widen(attr, value)
                else:
                    new = attr.window
                if new != attr.window:
                    attrs[name] = new
        if values:
            self.summary.updates += 1
            model = self.model.with_initial(values)
            if attrs:
                model = model.replace(attributes=tuple(
                    replace(a, window=attrs[a.name]) if a.name in attrs else a
                    for a in model.attributes))
            self.model = model
        return bool(values), violated

    def recheck(self, reason: str) -> RunReport:
        self.sequence += 1
        snapshot = self.model.initial_state().as_dict()
        stamp = datetime.now(timezone.utc).isoformat(timespec="milliseconds")
        report = run_check(self.model, self.mode, options=self.options)
        report.extra["watch"] = {"sequence": self.sequence, "reason": reason,
                                 "timestamp": stamp, "state": snapshot}
        s = self.summary
        s.rechecks += 1
        s.verdicts[report.verdict] = s.verdicts.get(report.verdict, 0) + 1
        s.last_verdict = report.verdict
        return report


def watch(model: ModelSpec, feed: Iterable[str], emit: Callable[[RunReport], None], *,
          mode: str = ESCALATION, interval_ms: int | None = 1000,
          window_width: int | None = None, options: PipelineOptions = PipelineOptions(),
          check_on_start: bool = True) -> WatchSummary:
    """Run the watch loop until the feed closes; returns the summary."""
    w = Watcher(model, mode, options, window_width)
    q: queue.Queue = queue.Queue()
    threading.Thread(target=_reader, args=(feed, q), daemon=True).start()
    interval = interval_ms / 1000 if interval_ms else None

    if check_on_start:
        emit(w.recheck("start"))
    deadline = time.monotonic() + interval if interval else None
    done = False
    while not done:
        timeout = None if deadline is None else max(0.0, deadline - time.monotonic())
        try:
            events = [q.get(timeout=timeout)]
        except queue.Empty:
            events = []
        # coalesce everything already waiting
        while True:
            try:
                events.append(q.get_nowait())
            except queue.Empty:
                break

        reason = None
        for kind, payload in events:
            if kind is _EOF:
                done = True
            elif kind == "update":
                applied, violated = w.apply(payload)
                if violated:
                    reason = VIOLATION
                elif applied and reason is None:
                    reason = UPDATE
        if not events:
            reason = TICK
        if reason is not None:
            emit(w.recheck(reason))
            if interval:
                deadline = time.monotonic() + interval
        elif deadline is not None and time.monotonic() >= deadline:
            emit(w.recheck(TICK))
            deadline = time.monotonic() + interval
    return w.summary

