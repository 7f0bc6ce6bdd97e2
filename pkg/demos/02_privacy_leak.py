"""Show how a TV rule leaks whether anyone is home through a public light.

`occupancy` is private; the porch light `light2` can be seen from the
street.  Occupancy switches the TV, and the TV switches the light, so an
observer who watches the light learns whether the house is occupied.
"""

from chaincheck import PRIVACY, run_check
from chaincheck.fixtures import smart_home, smart_home_privacy_labels
from chaincheck.pruning import prune_for_privacy

model = smart_home(labels=smart_home_privacy_labels())
pruned = prune_for_privacy(model)
print("attributes that matter for the leak:", ", ".join(pruned.kept_attributes))

report = run_check(model, PRIVACY)
print(report.to_text())

left, right = report.trace.pairs[-1]
print(f"\nsame inputs, different occupancy: light2 is {left['light2']} "
      f"in one run and {right['light2']} in the other")
