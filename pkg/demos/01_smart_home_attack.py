"""Walk through the smart-home attack: a spoofed car location unlocks the door.

The attacker controls the car's GPS reading (`location`) and one smart
bulb (`light1`).  The user's policy says the door must never be unlocked
while the camera is off.  Run with:  python3 demos/01_smart_home_attack.py
"""

from chaincheck import run_check
from chaincheck.fixtures import smart_home
from chaincheck.pipeline import PipelineOptions

model = smart_home()
print(f"{len(model.attributes)} attributes, {len(model.rules)} rules")
for rule in model.rules:
    print("  ", rule)

report = run_check(model)
print()
print(report.to_text())

# The same question without any state-space reduction gives the same answer,
# only with far more states to explore.
bare = run_check(model, options=PipelineOptions(group=False, prune=False))
print()
print(f"without grouping or pruning: {bare.verdict}, "
      f"{bare.stats['states']['checked']:,} nominal states "
      f"(vs {report.stats['states']['checked']:,} after reduction)")
