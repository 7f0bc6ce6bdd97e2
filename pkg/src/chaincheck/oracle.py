"""Brute-force reference checker.

Plain breadth-first search over concrete value tuples using the
value-by-value transition relation in :mod:`chaincheck.semantics`.  No
grouping, pruning, packing or cylinder factoring.  Slow by design; it
exists to be obviously correct.
"""

from __future__ import annotations

import time
from collections import deque

from .engine import ATTACK, SECURE, UNKNOWN, ConfigError, Verdict
from .model import PRIVATE, PUBLIC, Escalation, ModelSpec, eval_trigger
from .semantics import (
    EngineConfig, _deterministic_next, choice_sets, fired_rule_ids,
    iter_product_successors, iter_successors,
)
from .trace import Step, Trace

DEFAULT_CAP = 1 << 24


def _budget_exceeded(seen: int, cap: int, deadline) -> str | None:
    if seen > cap:
        return f"oracle exploration cap of {cap} states exceeded"
    if deadline is not None and time.perf_counter() > deadline:
        return "time budget exhausted"
    return None


def _annotate(model: ModelSpec, prev: dict, cur: dict, config: EngineConfig):
    det = _deterministic_next(prev, model)
    choices = choice_sets(model, config)
    injected, env = [], []
    for a in model.attributes:
        if a.name not in choices:
            continue
        if a.vulnerable and config.attacker_enabled:
            if cur[a.name] != det[a.name]:
                injected.append((a.name, cur[a.name]))
        elif cur[a.name] != prev[a.name]:
            env.append((a.name, cur[a.name]))
    return fired_rule_ids(prev, model), injected, env


def _path(parent: dict, last):
    path = [last]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    path.reverse()
    return path


def brute_check_escalation(model: ModelSpec, policy: Escalation | None = None,
                           config: EngineConfig = EngineConfig(), cap: int = DEFAULT_CAP
                           ) -> Verdict:
    if policy is None:
        if not model.escalation_policies:
            raise ConfigError("model has no escalation policy")
        policy = model.escalation_policies[0]
    names = model.names
    start = time.perf_counter()
    deadline = start + config.time_budget if config.time_budget else None
    init = tuple(model.initial_state().values)
    parent = {init: None}
    queue = deque([init])
    found = init if eval_trigger(policy.forbidden, dict(zip(names, init))) else None
    # states are tested when first discovered, which keeps BFS depth minimal
    while queue and found is None:
        s = queue.popleft()
        sd = dict(zip(names, s))
        for t in iter_successors(sd, model, config):
            if t not in parent:
                parent[t] = s
                if eval_trigger(policy.forbidden, dict(zip(names, t))):
                    found = t
                    break
                queue.append(t)
        reason = _budget_exceeded(len(parent), cap, deadline)
        if reason:
            return Verdict(UNKNOWN, reason=reason, stats={"states": len(parent)})
    stats = {"states": len(parent), "seconds": time.perf_counter() - start}
    if found is None:
        return Verdict(SECURE, stats=stats)
    steps = []
    path = [dict(zip(names, s)) for s in _path(parent, found)]
    for i, st in enumerate(path):
        if i == 0:
            steps.append(Step(st))
        else:
            fired, inj, env = _annotate(model, path[i - 1], st, config)
            steps.append(Step(st, fired, inj, env))
    return Verdict(ATTACK, trace=Trace(steps, "escalation"), stats=stats)


def initial_pairs(model: ModelSpec) -> list[tuple[tuple, tuple]]:
    """Left copy at the initial state; right copy over every PRIVATE combination."""
    labels = model.labels
    private = [a for a in model.attributes if labels.get(a.name) == PRIVATE]
    public = [a for a in model.attributes if labels.get(a.name) == PUBLIC]
    if not private or not public:
        raise ConfigError("privacy check needs at least one private and one public attribute")
    init = model.initial_state().as_dict()
    rights = [dict(init)]
    for a in private:
        rights = [{**r, a.name: v} for r in rights for v in a.domain.values]
    left = tuple(init[n] for n in model.names)
    return [(left, tuple(r[n] for n in model.names)) for r in rights]


def brute_check_privacy(model: ModelSpec, labels=None, config: EngineConfig = EngineConfig(),
                        cap: int = DEFAULT_CAP) -> Verdict:
    if labels is not None:
        model = model.with_labels(labels)
    names = model.names
    public = [n for n in names if model.labels.get(n) == PUBLIC]
    pub_idx = [names.index(n) for n in public]
    start = time.perf_counter()
    deadline = start + config.time_budget if config.time_budget else None
    inits = initial_pairs(model)
    parent: dict = {}
    queue = deque()
    for p in inits:
        if p not in parent:
            parent[p] = None
            queue.append(p)
    def leaks(pair):
        return any(pair[0][i] != pair[1][i] for i in pub_idx)

    found = next((p for p in queue if leaks(p)), None)
    while queue and found is None:
        pair = queue.popleft()
        ld, rd = dict(zip(names, pair[0])), dict(zip(names, pair[1]))
        for nxt in iter_product_successors(ld, rd, model, config):
            if nxt not in parent:
                parent[nxt] = pair
                if leaks(nxt):
                    found = nxt
                    break
                queue.append(nxt)
        reason = _budget_exceeded(len(parent), cap, deadline)
        if reason:
            return Verdict(UNKNOWN, reason=reason, stats={"states": len(parent)})
    stats = {"states": len(parent), "seconds": time.perf_counter() - start,
             "initial_pairs": len(inits)}
    if found is None:
        return Verdict(SECURE, stats=stats)
    steps = []
    path = _path(parent, found)
    for i, (l, r) in enumerate(path):
        ld, rd = dict(zip(names, l)), dict(zip(names, r))
        if i == 0:
            steps.append(Step(ld, right=rd, fired_right=[]))
            continue
        pl, pr = (dict(zip(names, x)) for x in path[i - 1])
        fired, inj, env = _annotate(model, pl, ld, config)
        steps.append(Step(ld, fired, inj, env, right=rd, fired_right=fired_rule_ids(pr, model)))
    return Verdict(ATTACK, trace=Trace(steps, "privacy"), stats=stats)
