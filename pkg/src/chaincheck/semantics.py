"""Reference transition relation over concrete states.

These functions spell out one synchronous polling round value by value.
They are deliberately simple; the brute-force oracle and trace replay are
built on them, while :mod:`chaincheck.engine` re-implements the same
relation on packed arrays.

Per attribute, the next value is decided by the first case that applies:

1. attacker-controlled (vulnerable, attacker enabled): any domain value;
2. sensor: any value in its window;
3. assigned by a satisfied rule: the assignment of the highest-priority
   such rule;
4. otherwise unchanged.

All triggers read the state at the start of the round.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Mapping

from .model import ModelSpec, PUBLIC, State, _typed, eval_trigger

PASSIVE = object()


@dataclass(frozen=True)
class EngineConfig:
    attacker_enabled: bool = True
    max_states: int = 2_000_000
    time_budget: float | None = None
    mode: str = "escalation"

    def __post_init__(self):
        if self.max_states < 1:
            raise ValueError("max_states must be positive")
        if self.mode not in ("escalation", "privacy"):
            raise ValueError(f"unknown mode {self.mode!r}")


def _as_dict(state, model: ModelSpec) -> dict:
    if isinstance(state, State):
        return state.as_dict()
    if isinstance(state, Mapping):
        return dict(state)
    return dict(zip(model.names, state))


def _ordered_rules(model: ModelSpec):
    return sorted(enumerate(model.rules), key=lambda ir: (ir[1].priority, ir[0]))


def fired_rule_ids(state, model: ModelSpec) -> list[str]:
    """Ids of every rule whose trigger holds in ``state`` (priority order)."""
    s = _as_dict(state, model)
    return [r.id for _, r in _ordered_rules(model) if eval_trigger(r.trigger, s)]


def fired_rules(state, model: ModelSpec) -> dict:
    """Merged assignments of all satisfied rules; the lowest priority index wins conflicts."""
    s = _as_dict(state, model)
    out: dict = {}
    for _, r in _ordered_rules(model):
        if eval_trigger(r.trigger, s):
            for name, value in r.action:
                out.setdefault(name, value)
    return out


def _deterministic_next(s: dict, model: ModelSpec) -> dict:
    nxt = dict(s)
    nxt.update(fired_rules(s, model))
    return nxt


def _attacked(model: ModelSpec, config: EngineConfig) -> set[str]:
    return model.vulnerable if config.attacker_enabled else set()


def choice_sets(model: ModelSpec, config: EngineConfig) -> dict[str, tuple]:
    """Attributes re-chosen every round regardless of rules, with their options."""
    attacked = _attacked(model, config)
    out = {}
    for a in model.attributes:
        if a.name in attacked:
            out[a.name] = a.domain.values
        elif a.is_sensor:
            out[a.name] = a.window_values
    return out


def iter_successors(state, model: ModelSpec, config: EngineConfig = EngineConfig()
                    ) -> Iterator[tuple]:
    """Successor value tuples of ``state``; may repeat, order is deterministic."""
    s = _as_dict(state, model)
    base = _deterministic_next(s, model)
    choices = choice_sets(model, config)
    pools = [choices.get(n, (base[n],)) for n in model.names]
    yield from itertools.product(*pools)


def successors(state, model: ModelSpec, config: EngineConfig = EngineConfig()) -> set[State]:
    return {State(model, t) for t in iter_successors(state, model, config)}


def _product_choices(model: ModelSpec, config: EngineConfig):
    attacked = _attacked(model, config)
    shared, optional = {}, {}
    for a in model.attributes:
        if a.is_sensor:
            shared[a.name] = a.domain.values if a.name in attacked else a.window_values
        elif a.name in attacked:
            optional[a.name] = a.domain.values + (PASSIVE,)
    return shared, optional


def iter_product_successors(left, right, model: ModelSpec,
                            config: EngineConfig = EngineConfig()) -> Iterator[tuple]:
    """Synchronised successor pairs of a product state.

    Sensors receive the same reading in both copies.  An attacker-controlled
    actuator is either injected with the same value in both copies or left
    alone, in which case each copy applies its own rules.
    """
    lbase = _deterministic_next(_as_dict(left, model), model)
    rbase = _deterministic_next(_as_dict(right, model), model)
    shared, optional = _product_choices(model, config)
    names = list(shared) + list(optional)
    pools = [shared[n] for n in shared] + [optional[n] for n in optional]
    for combo in itertools.product(*pools):
        lnext, rnext = dict(lbase), dict(rbase)
        for n, v in zip(names, combo):
            if v is PASSIVE:
                continue
            lnext[n] = v
            rnext[n] = v
        yield (tuple(lnext[n] for n in model.names),
               tuple(rnext[n] for n in model.names))


def product_successors(left, right, model: ModelSpec,
                       config: EngineConfig = EngineConfig()) -> set[tuple]:
    return set(iter_product_successors(left, right, model, config))


def _same(a, b) -> bool:
    return _typed(a) == _typed(b)


def is_successor(s, t, model: ModelSpec, config: EngineConfig = EngineConfig()) -> bool:
    """Whether ``t`` is one round after ``s``, checked attribute by attribute."""
    s, t = _as_dict(s, model), _as_dict(t, model)
    det = _deterministic_next(s, model)
    choices = choice_sets(model, config)
    for name in model.names:
        if name in choices:
            if _typed(t[name]) not in {_typed(v) for v in choices[name]}:
                return False
        elif not _same(t[name], det[name]):
            return False
    return True


def is_product_successor(pair, nxt, model: ModelSpec,
                         config: EngineConfig = EngineConfig()) -> bool:
    (l, r), (l2, r2) = pair, nxt
    l, r = _as_dict(l, model), _as_dict(r, model)
    l2, r2 = _as_dict(l2, model), _as_dict(r2, model)
    if not (is_successor(l, l2, model, config) and is_successor(r, r2, model, config)):
        return False
    ldet, rdet = _deterministic_next(l, model), _deterministic_next(r, model)
    shared, optional = _product_choices(model, config)
    for name in shared:
        if not _same(l2[name], r2[name]):
            return False
    for name in optional:
        injected = _same(l2[name], r2[name])
        passive = _same(l2[name], ldet[name]) and _same(r2[name], rdet[name])
        if not (injected or passive):
            return False
    return True


def public_differs(left, right, model: ModelSpec, labels=None) -> bool:
    labels = model.labels if labels is None else labels
    l, r = _as_dict(left, model), _as_dict(right, model)
    return any(labels.get(n) == PUBLIC and not _same(l[n], r[n]) for n in model.names)
