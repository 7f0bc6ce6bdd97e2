"""Value grouping: collapse attribute values that no trigger or policy can tell apart.

Two values of an attribute are interchangeable when they satisfy exactly
the same atomic constraints collected from every rule trigger and from
the policy.  Each class becomes one *meta-value*, and rules are rewritten
so that a trigger atom turns into a disjunction of meta-value equalities
and an action literal turns into the meta-value that contains it.

The rewritten model is an ordinary :class:`~chaincheck.model.ModelSpec`
whose domains are enums of meta-value labels, so every downstream stage
works on it unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    FALSE, PRIVATE, PUBLIC, And, Atom, AttributeDecl, Const, EnumDomain,
    Escalation, Expr, IntRange, ModelError, ModelSpec, Not, Or, Policy,
    Privacy, Rule, _replace_attr, _typed, atoms,
)

ESCALATION = "escalation"
PRIVACY = "privacy"


@dataclass(frozen=True)
class MetaValue:
    id: int
    label: str
    members: tuple


@dataclass(frozen=True)
class GroupedDomain:
    attribute: str
    meta_values: tuple[MetaValue, ...]
    to_meta: dict

    def meta_of(self, value) -> MetaValue:
        return self.meta_values[self.to_meta[_typed(value)]]

    def by_label(self, label: str) -> MetaValue:
        for m in self.meta_values:
            if m.label == label:
                return m
        raise KeyError(label)

    @property
    def labels(self) -> list[str]:
        return [m.label for m in self.meta_values]

    @property
    def partition(self) -> list[tuple]:
        return [m.members for m in self.meta_values]


@dataclass(frozen=True)
class GroupedModel:
    domains: dict[str, GroupedDomain]
    model: ModelSpec
    source: ModelSpec
    policy: Policy

    @property
    def rules(self) -> tuple[Rule, ...]:
        return self.model.rules

    def members(self, attr: str, label: str) -> tuple:
        return self.domains[attr].by_label(label).members

    def state_count(self) -> int:
        n = 1
        for d in self.domains.values():
            n *= len(d.meta_values)
        return n


def policy_mode(policy: Policy) -> str:
    return PRIVACY if isinstance(policy, Privacy) else ESCALATION


def effective_domain(attr: AttributeDecl, mode: str = ESCALATION,
                     attacker_enabled: bool = True) -> tuple:
    """Values an attribute can hold in any state the checker will visit.

    Secure sensors are confined to their window (plus the current reading);
    attacker-controlled attributes and the PRIVATE inputs of the privacy
    product range over the whole domain.
    """
    full = attr.domain.values
    if not attr.is_sensor or attr.window is None:
        return full
    if attr.vulnerable and attacker_enabled:
        return full
    if mode == PRIVACY and attr.label == PRIVATE:
        return full
    keep = {_typed(v) for v in attr.window.values}
    keep.add(_typed(attr.initial))
    return tuple(v for v in full if _typed(v) in keep)


def collect_constraints(rules, policy: Policy | None) -> dict[str, list[Atom]]:
    """Every atom from every trigger and from the escalation predicate, keyed by attribute.

    Attributes that only ever appear in actions get no entry; callers should
    treat a missing key as an empty list.
    """
    constraints: dict[str, list[Atom]] = {}
    for r in rules:
        for a in atoms(r.trigger):
            constraints.setdefault(a.attr, []).append(a)
    if isinstance(policy, Escalation):
        for a in atoms(policy.forbidden):
            constraints.setdefault(a.attr, []).append(a)
    return constraints


def _runs(values: list[int]) -> str:
    parts = []
    start = prev = values[0]
    for v in values[1:]:
        if v == prev + 1:
            prev = v
            continue
        parts.append(str(start) if start == prev else f"{start}..{prev}")
        start = prev = v
    parts.append(str(start) if start == prev else f"{start}..{prev}")
    return ",".join(parts)


def _label(members: tuple, attr: AttributeDecl, n_groups: int) -> str:
    if n_groups == 1 and len(members) > 1:
        return "ALL"
    if len(members) == 1:
        return str(members[0])
    if isinstance(attr.domain, IntRange):
        return _runs(sorted(members))
    return "OTHERS"


def group_attribute(attr: AttributeDecl, constraints, *, effective=None,
                    identity: bool = False) -> GroupedDomain:
    """Partition ``attr``'s effective domain by satisfied-constraint signature.

    ``identity`` keeps every value in its own class (used for attributes the
    attacker observes directly).
    """
    values = tuple(effective if effective is not None else attr.domain.values)
    unique: list[Atom] = []
    for c in constraints:
        if c.attr != attr.name:
            raise ModelError(f"constraint {c} does not reference {attr.name!r}")
        if c not in unique:
            unique.append(c)

    classes: dict[tuple, list] = {}
    for i, v in enumerate(values):
        key = (i,) if identity else tuple(c.holds(v) for c in unique)
        classes.setdefault(key, []).append(v)

    groups = list(classes.values())
    labels = [_label(tuple(g), attr, len(groups)) for g in groups]
    taken: set[str] = set()
    for i, lab in enumerate(labels):
        while lab in taken:
            lab += "'"
        labels[i] = lab
        taken.add(lab)

    metas = tuple(MetaValue(i, labels[i], tuple(g)) for i, g in enumerate(groups))
    to_meta = {_typed(v): m.id for m in metas for v in m.members}
    return GroupedDomain(attr.name, metas, to_meta)


def rewrite_expr(expr: Expr, domains: dict[str, GroupedDomain]) -> Expr:
    if isinstance(expr, Atom):
        dom = domains[expr.attr]
        hits = []
        for m in dom.meta_values:
            verdicts = {expr.holds(v) for v in m.members}
            if len(verdicts) != 1:
                raise ModelError(f"meta-value {m.label} of {expr.attr!r} splits on {expr}")
            if verdicts.pop():
                hits.append(Atom(expr.attr, "=", m.label))
        if not hits:
            return FALSE
        return hits[0] if len(hits) == 1 else Or(tuple(hits))
    if isinstance(expr, And):
        return And(tuple(rewrite_expr(a, domains) for a in expr.args))
    if isinstance(expr, Or):
        return Or(tuple(rewrite_expr(a, domains) for a in expr.args))
    if isinstance(expr, Not):
        return Not(rewrite_expr(expr.arg, domains))
    if isinstance(expr, Const):
        return expr
    raise TypeError(f"not an expression: {expr!r}")


def rewrite_rules(rules, domains: dict[str, GroupedDomain]) -> list[Rule]:
    out = []
    for r in rules:
        action = []
        for name, value in r.action:
            dom = domains[name]
            if _typed(value) not in dom.to_meta:
                raise ModelError(
                    f"rule {r.id!r}: {name} <- {value!r} lies outside the grouped domain")
            action.append((name, dom.meta_of(value).label))
        out.append(Rule(r.id, rewrite_expr(r.trigger, domains), tuple(action),
                        priority=r.priority))
    return out


def _grouped_attribute(attr: AttributeDecl, dom: GroupedDomain) -> AttributeDecl:
    window = None
    if attr.is_sensor and attr.window is not None:
        win = {_typed(v) for v in attr.window.values}
        window = EnumDomain(tuple(m.label for m in dom.meta_values
                                  if any(_typed(v) in win for v in m.members)))
    return _replace_attr(attr, domain=EnumDomain(tuple(dom.labels)), window=window,
                         initial=dom.meta_of(attr.initial).label)


def group_model(model: ModelSpec, policy: Policy | None = None,
                attacker_enabled: bool = True) -> GroupedModel:
    """Group every attribute and rewrite rules and policy over the meta-values.

    ``policy`` defaults to the model's first policy.  Under a privacy policy
    PUBLIC attributes keep one class per value, because the check compares
    their exact values across the two copies.
    """
    if policy is None:
        policy = model.policies[0] if model.policies else Escalation(FALSE)
    mode = policy_mode(policy)
    constraints = collect_constraints(model.rules, policy)
    domains: dict[str, GroupedDomain] = {}
    for attr in model.attributes:
        identity = mode == PRIVACY and attr.label == PUBLIC
        domains[attr.name] = group_attribute(
            attr, constraints.get(attr.name, []),
            effective=effective_domain(attr, mode, attacker_enabled),
            identity=identity)

    rules = rewrite_rules(model.rules, domains)
    if isinstance(policy, Escalation):
        new_policy: Policy = Escalation(rewrite_expr(policy.forbidden, domains))
    else:
        new_policy = policy
    attrs = [_grouped_attribute(a, domains[a.name]) for a in model.attributes]
    grouped = ModelSpec(tuple(attrs), tuple(rules), (new_policy,))
    return GroupedModel(domains, grouped, model, new_policy)


def ground_state(grouped: GroupedModel, state: dict) -> dict:
    """Meta-value image of a concrete state."""
    return {name: grouped.domains[name].meta_of(v).label for name, v in state.items()}
