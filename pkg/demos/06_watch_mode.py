"""Re-check as sensor readings arrive.

A simulated feed reports the room temperature.  Readings inside the
predicted window trigger ordinary re-checks; a reading outside it forces an
immediate re-check with a re-predicted window.
"""

import json
import time

from chaincheck.fixtures import smart_home
from chaincheck.watch import watch

model = smart_home().with_vulnerable([])


def feed():
    for temp, loc in [(25, 3), (26, 3), (40, 3), (41, 0)]:
        yield json.dumps({"temperature": temp, "location": loc})
        time.sleep(0.3)


def show(report):
    w = report.extra["watch"]
    print(f"#{w['sequence']:<2} {w['reason']:17s} temperature={w['state']['temperature']:<3} "
          f"location={w['state']['location']:<3} -> {report.verdict}")


summary = watch(model, feed(), show, interval_ms=200, window_width=3)
print(json.dumps(summary.to_json()))
