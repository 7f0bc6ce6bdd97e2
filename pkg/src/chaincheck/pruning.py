"""Attribute dependency graph and policy-directed pruning.

An edge ``u -> v`` labelled ``r`` means rule ``r`` reads ``u`` in its
trigger and writes ``v`` in its action.  Anything that cannot reach the
attributes a policy looks at is irrelevant to that policy and is dropped.
Implicit physical couplings (a heater warming a thermometer) produce no
edges; only explicit rules do.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .model import (
    PRIVATE, PUBLIC, Escalation, ModelError, ModelSpec, Privacy, Rule,
    expr_attributes,
)


@dataclass
class DependencyGraph:
    nodes: list[str]
    edges: dict[tuple[str, str], set[str]] = field(default_factory=dict)

    def successors(self, node: str) -> list[str]:
        return [v for (u, v) in self.edges if u == node]

    def predecessors(self, node: str) -> list[str]:
        return [u for (u, v) in self.edges if v == node]

    def _adjacency(self, reverse: bool) -> dict[str, list[tuple[str, set[str]]]]:
        adj: dict[str, list] = {n: [] for n in self.nodes}
        for (u, v), rules in self.edges.items():
            if reverse:
                adj[v].append((u, rules))
            else:
                adj[u].append((v, rules))
        return adj

    def forward_reach(self, sources) -> set[str]:
        adj = self._adjacency(reverse=False)
        seen = set(sources)
        todo = deque(seen)
        while todo:
            u = todo.popleft()
            for v, _ in adj[u]:
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
        return seen


def build_dependency_graph(model: ModelSpec) -> DependencyGraph:
    graph = DependencyGraph(list(model.names))
    for r in model.rules:
        reads = expr_attributes(r.trigger)
        for u in reads:
            for v, _ in r.action:
                graph.edges.setdefault((u, v), set()).add(r.id)
    return graph


def backtrace(graph: DependencyGraph, seeds) -> tuple[set[str], set[str]]:
    """Attributes with a path into ``seeds`` and the rule labels on those paths."""
    seeds = set(seeds)
    unknown = seeds - set(graph.nodes)
    if unknown:
        raise ModelError(f"unknown seed attributes {sorted(unknown)}")
    adj = graph._adjacency(reverse=True)
    related: set[str] = set()
    rules: set[str] = set()
    todo = deque(seeds)
    while todo:
        a = todo.popleft()
        if a in related:
            continue
        related.add(a)
        for u, labels in adj[a]:
            rules |= labels
            if u not in related:
                todo.append(u)
    return related, rules


@dataclass(frozen=True)
class PruneResult:
    model: ModelSpec | None
    kept_attributes: tuple[str, ...] = ()
    kept_rules: tuple[str, ...] = ()
    dropped_attributes: tuple[str, ...] = ()
    dropped_rules: tuple[str, ...] = ()
    trivially_secure: bool = False


def restrict(model: ModelSpec, keep: set[str], policies) -> tuple[ModelSpec, list[str]]:
    """Sub-model over ``keep``; rules keep only their actions on kept attributes."""
    rules: list[Rule] = []
    for r in model.rules:
        action = tuple((a, v) for a, v in r.action if a in keep)
        if not action:
            continue
        if not set(expr_attributes(r.trigger)) <= keep:
            raise ModelError(f"rule {r.id!r} reads attributes outside the kept set")
        rules.append(Rule(r.id, r.trigger, action, priority=r.priority))
    attrs = tuple(a for a in model.attributes if a.name in keep)
    return ModelSpec(attrs, tuple(rules), tuple(policies)), [r.id for r in rules]


def _result(model: ModelSpec, keep: set[str], policies) -> PruneResult:
    reduced, kept_rules = restrict(model, keep, policies)
    return PruneResult(
        model=reduced,
        kept_attributes=tuple(reduced.names),
        kept_rules=tuple(kept_rules),
        dropped_attributes=tuple(n for n in model.names if n not in keep),
        dropped_rules=tuple(r.id for r in model.rules if r.id not in set(kept_rules)),
    )


def prune_for_escalation(model: ModelSpec, policy: Escalation,
                         graph: DependencyGraph | None = None) -> PruneResult:
    graph = graph or build_dependency_graph(model)
    seeds = set(expr_attributes(policy.forbidden))
    if not seeds:
        # constant predicate: keep one attribute so the model stays well-formed
        seeds = {model.names[0]}
    keep, _ = backtrace(graph, seeds)
    return _result(model, keep, [policy])


def prune_for_privacy(model: ModelSpec, labels=None,
                      graph: DependencyGraph | None = None) -> PruneResult:
    """Drop everything PRIVATE data cannot influence on its way to PUBLIC attributes.

    If no PUBLIC attribute is reachable from any PRIVATE one the result is
    marked ``trivially_secure`` and carries no model.
    """
    if labels is not None:
        model = model.with_labels(labels)
    labels = model.labels
    private = [n for n in model.names if labels.get(n) == PRIVATE]
    public = {n for n in model.names if labels.get(n) == PUBLIC}
    if not private or not public:
        raise ModelError("privacy check needs at least one private and one public attribute")
    graph = graph or build_dependency_graph(model)
    reached = graph.forward_reach(private) & public
    if not reached:
        return PruneResult(model=None, dropped_attributes=tuple(model.names),
                           dropped_rules=tuple(r.id for r in model.rules),
                           trivially_secure=True)
    keep, _ = backtrace(graph, reached)
    return _result(model, keep, [Privacy()])
