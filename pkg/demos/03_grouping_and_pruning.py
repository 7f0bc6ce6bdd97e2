"""What the two reductions do to the smart-home model before checking."""

from chaincheck.fixtures import smart_home
from chaincheck.grouping import group_model
from chaincheck.model import format_expr
from chaincheck.pruning import build_dependency_graph, prune_for_escalation

model = smart_home()
policy = model.policies[0]

# Values that satisfy the same trigger constraints behave identically and
# can be merged.  Attacker-controlled attributes keep their whole domain.
grouped = group_model(model, policy)
print("meta-values per attribute:")
for name, dom in grouped.domains.items():
    print(f"  {name:12s} {' | '.join(dom.labels)}")
print("\nrewritten temperature rules:")
for rid in ("R10", "R11", "R12"):
    r = grouped.model.rule(rid)
    acts = ", ".join(f"{a} <- {v}" for a, v in r.action)
    print(f"  {rid}: IF {format_expr(r.trigger)} THEN {acts}")

# Only attributes with a rule path into the policy can affect it.
graph = build_dependency_graph(model)
print("\ndependency edges into the policy attributes:")
for (u, v), rules in sorted(graph.edges.items()):
    if v in ("lock", "camera", "light1"):
        print(f"  {u} -> {v}  via {', '.join(sorted(rules))}")
pruned = prune_for_escalation(model, policy)
print("\nkept:", ", ".join(pruned.kept_attributes), "|", ", ".join(pruned.kept_rules))
print("dropped:", ", ".join(pruned.dropped_attributes))
print(f"grouped state count {grouped.state_count():,}")
