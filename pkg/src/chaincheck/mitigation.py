"""Watchlist construction.

Attacks are enumerated by repeatedly checking the model with some rules
disabled.  Every counterexample contributes the set of rules it fired,
shrunk to a minimal subset that still admits an attack when it is the only
rule set present; each rule of that set is then disabled in turn to look
for attacks that avoid it.  A small hitting set of the collected rule sets is the watchlist.
Because disabling rules can open new behaviour as well as close it, the
watchlist is re-verified and extended until the residual model is secure.
"""

from __future__ import annotations

import itertools
import logging
from collections import deque
from dataclasses import dataclass, field, replace

from .engine import ATTACK, SECURE, UNKNOWN
from .model import ModelError, ModelSpec
from .pipeline import ESCALATION, PipelineOptions, run_check
from .trace import Trace

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Attack:
    rules: frozenset[str]
    trace: Trace | None = field(default=None, compare=False)
    fired: frozenset[str] = field(default=frozenset(), compare=False)


@dataclass
class AttackEnumeration:
    attacks: list[Attack]
    complete: bool
    checks: int = 0

    @property
    def rule_sets(self) -> list[frozenset[str]]:
        return [a.rules for a in self.attacks]


@dataclass
class Watchlist:
    rules: tuple[str, ...]
    blocks: dict[str, list[int]]
    attacks: list[Attack]
    residual: str = UNKNOWN
    complete: bool = True
    rounds: int = 1
    mitigable: bool = True

    def to_json(self) -> dict:
        return {
            "watchlist": list(self.rules),
            "residual_verdict": self.residual,
            "complete": self.complete,
            "mitigable": self.mitigable,
            "rounds": self.rounds,
            "attacks": [
                {"rules": sorted(a.rules), "fired": sorted(a.fired or a.rules),
                 "trace": a.trace.to_json() if a.trace is not None else None}
                for a in self.attacks],
            "justification": {r: idx for r, idx in self.blocks.items()},
        }

    def to_text(self) -> str:
        lines = [f"watchlist: {', '.join(self.rules) or '(empty)'}",
                 f"residual verdict after gating: {self.residual.upper()}"]
        if not self.mitigable:
            lines.append("some attack fires no rule; gating rules cannot stop it")
        if not self.complete:
            lines.append("attack enumeration hit its limit; list may be partial")
        for r in self.rules:
            ids = ", ".join(f"#{i}" for i in self.blocks.get(r, []))
            lines.append(f"  {r} blocks attacks {ids}")
        for i, a in enumerate(self.attacks):
            lines.append(f"attack #{i}: rules {{{', '.join(sorted(a.rules))}}}")
        return "\n".join(lines)


def _check(model: ModelSpec, mode: str, options: PipelineOptions):
    return run_check(model, mode, options=replace(options, lift=False))


def _only(model: ModelSpec, keep) -> ModelSpec:
    return model.without_rules([r.id for r in model.rules if r.id not in keep])


def shrink_attack(model: ModelSpec, trace: Trace, mode: str = ESCALATION,
                  options: PipelineOptions = PipelineOptions()) -> Attack:
    """Drop incidental rules from an attack's fired set.

    A rule is dropped when the model restricted to the remaining rules still
    has an attack.  The result is minimal: removing any one of its rules
    from the restricted model makes it secure (or Unknown, in which case the
    rule is kept).
    """
    fired = frozenset(trace.fired_set())
    core, best = set(fired), trace
    for r in sorted(fired, key=_priority_key(model), reverse=True):
        if r not in core:
            continue
        rep = _check(_only(model, core - {r}), mode, options)
        if rep.verdict == ATTACK:
            core = set(rep.trace.fired_set()) & (core - {r})
            best = rep.trace
    return Attack(frozenset(core), best, fired)


def enumerate_attacks(model: ModelSpec, limit: int = 32, *, mode: str = ESCALATION,
                      options: PipelineOptions = PipelineOptions(),
                      max_checks: int | None = None) -> AttackEnumeration:
    """Collect distinct attack rule-sets by counterexample-guided rule blocking.

    Each entry is the minimal core of the rules fired along one
    counterexample (see :func:`shrink_attack`).  The
    search stops after ``limit`` distinct sets (or ``max_checks`` model
    checks); the result is flagged incomplete in that case or when a check
    came back Unknown.
    """
    if limit < 1:
        raise ValueError("limit must be at least 1")
    max_checks = max_checks if max_checks is not None else 16 * limit
    queue = deque([frozenset()])
    tried: set[frozenset] = set()
    attacks: list[Attack] = []
    seen_sets: set[frozenset] = set()
    complete = True
    checks = 0
    while queue:
        disabled = queue.popleft()
        if disabled in tried:
            continue
        tried.add(disabled)
        if len(attacks) >= limit or checks >= max_checks:
            complete = False
            break
        checks += 1
        report = _check(model.without_rules(disabled), mode, options)
        if report.verdict == UNKNOWN:
            complete = False
            continue
        if report.verdict == SECURE:
            continue
        attack = shrink_attack(model.without_rules(disabled), report.trace, mode, options)
        if attack.rules not in seen_sets:
            seen_sets.add(attack.rules)
            attacks.append(attack)
        for r in sorted(attack.rules, key=_priority_key(model)):
            nxt = disabled | {r}
            if nxt not in tried:
                queue.append(nxt)
    return AttackEnumeration(attacks, complete, checks)


def _priority_key(model: ModelSpec | None):
    if model is None:
        return lambda r: (0, r)
    order = {r.id: (r.priority, i) for i, r in enumerate(model.rules)}
    return lambda r: order.get(r, (float("inf"), 0))


def greedy_watchlist(rule_sets, model: ModelSpec | None = None) -> list[str]:
    """Greedy hitting set; ties go to the rule with the lowest priority index."""
    sets = [frozenset(s) for s in rule_sets]
    if any(not s for s in sets):
        raise ValueError("cannot hit an empty rule set")
    key = _priority_key(model)
    remaining = list(range(len(sets)))
    chosen: list[str] = []
    while remaining:
        counts: dict[str, int] = {}
        for i in remaining:
            for r in sets[i]:
                counts[r] = counts.get(r, 0) + 1
        best = min(counts, key=lambda r: (-counts[r], key(r)))
        chosen.append(best)
        remaining = [i for i in remaining if best not in sets[i]]
    return chosen


def exact_hitting_set(rule_sets, max_universe: int = 24) -> list[str]:
    """A minimum hitting set by exhaustive search in order of size."""
    sets = [frozenset(s) for s in rule_sets]
    if any(not s for s in sets):
        raise ValueError("cannot hit an empty rule set")
    universe = sorted(set().union(*sets)) if sets else []
    if len(universe) > max_universe:
        raise ValueError(f"universe of {len(universe)} rules is too large for exact search")
    for k in range(len(universe) + 1):
        for combo in itertools.combinations(universe, k):
            pick = set(combo)
            if all(s & pick for s in sets):
                return list(combo)
    raise AssertionError("unreachable: the full universe hits every set")


def mitigate(model: ModelSpec, *, mode: str = ESCALATION, limit: int = 32,
             options: PipelineOptions = PipelineOptions(), max_rounds: int = 16) -> Watchlist:
    """Build a watchlist and verify that gating it leaves the model secure."""
    enum = enumerate_attacks(model, limit, mode=mode, options=options)
    attacks = list(enum.attacks)
    complete = enum.complete
    if not attacks:
        residual = SECURE if complete else UNKNOWN
        return Watchlist((), {}, [], residual, complete, rounds=0)

    rounds = 0
    while True:
        rounds += 1
        if any(not a.rules for a in attacks):
            return Watchlist((), {}, attacks, ATTACK, complete, rounds, mitigable=False)
        chosen = greedy_watchlist([a.rules for a in attacks], model)
        report = _check(model.without_rules(chosen), mode, options)
        if report.verdict != ATTACK or rounds >= max_rounds:
            break
        extra = shrink_attack(model.without_rules(chosen), report.trace, mode, options)
        log.info("watchlist %s still admits an attack via %s", chosen, sorted(extra.rules))
        attacks.append(extra)

    blocks = {r: [i for i, a in enumerate(attacks) if r in a.rules] for r in chosen}
    order = _priority_key(model)
    return Watchlist(tuple(sorted(chosen, key=order)), blocks, attacks, report.verdict,
                     complete, rounds)


def apply_watchlist(model: ModelSpec, watchlist: Watchlist | list[str]) -> ModelSpec:
    """The model with every watchlisted rule gated off."""
    rules = watchlist.rules if isinstance(watchlist, Watchlist) else watchlist
    missing = set(rules) - {r.id for r in model.rules}
    if missing:
        raise ModelError(f"unknown rules in watchlist: {sorted(missing)}")
    return model.without_rules(rules)
