"""Smart-space model: devices, trigger-action rules and security policies.

Models are read from a JSON document::

    {
      "attributes": [
        {"name": "lock", "kind": "actuator",
         "domain": {"enum": ["LOCKED", "UNLOCKED"]}, "initial": "LOCKED"},
        {"name": "temperature", "kind": "sensor",
         "domain": {"range": [0, 100]}, "window": {"range": [23, 33]},
         "initial": 25}
      ],
      "rules": [
        {"id": "R12", "if": {"op": "<=", "attr": "temperature", "value": 25},
         "then": {"fan": "OFF"}}
      ],
      "policies": [
        {"type": "escalation",
         "never": {"op": "and", "args": [...]}}
      ]
    }

Everything here is immutable once built.  Parsing validates every
cross-reference, so the evaluators never have to.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence, Union

Value = Union[str, int]

SENSOR = "sensor"
ACTUATOR = "actuator"

PRIVATE = "private"
PUBLIC = "public"
OTHER = "other"

KINDS = (SENSOR, ACTUATOR)
LABELS = (PRIVATE, PUBLIC, OTHER)

COMPARISONS = ("=", "!=", "<", "<=", ">", ">=")
ORDER_OPS = ("<", "<=", ">", ">=")


class ModelError(ValueError):
    """Raised when a model document is malformed or inconsistent."""


# ---------------------------------------------------------------------------
# Domains


@dataclass(frozen=True)
class EnumDomain:
    values: tuple[Value, ...]

    def __post_init__(self):
        if not self.values:
            raise ModelError("enum domain must not be empty")
        for v in self.values:
            if isinstance(v, bool) or not isinstance(v, (str, int)):
                raise ModelError(f"enum value {v!r} must be a string or integer")
        if len(set(_typed(v) for v in self.values)) != len(self.values):
            raise ModelError(f"enum domain has duplicate values: {list(self.values)}")

    def __contains__(self, value) -> bool:
        return _typed(value) in {_typed(v) for v in self.values}

    def __iter__(self):
        return iter(self.values)

    def __len__(self):
        return len(self.values)

    @property
    def ordered(self) -> bool:
        return False

    def to_json(self) -> dict:
        return {"enum": list(self.values)}


@dataclass(frozen=True)
class IntRange:
    lo: int
    hi: int

    def __post_init__(self):
        for b in (self.lo, self.hi):
            if isinstance(b, bool) or not isinstance(b, int):
                raise ModelError(f"range bound {b!r} must be an integer")
        if self.lo > self.hi:
            raise ModelError(f"empty range [{self.lo}, {self.hi}]")

    def __contains__(self, value) -> bool:
        return (not isinstance(value, bool) and isinstance(value, int)
                and self.lo <= value <= self.hi)

    def __iter__(self):
        return iter(range(self.lo, self.hi + 1))

    def __len__(self):
        return self.hi - self.lo + 1

    @property
    def values(self) -> tuple[int, ...]:
        return tuple(range(self.lo, self.hi + 1))

    @property
    def ordered(self) -> bool:
        return True

    def to_json(self) -> dict:
        return {"range": [self.lo, self.hi]}


Domain = Union[EnumDomain, IntRange]


def _typed(v):
    # keeps 1 and "1" apart while hashing
    return (type(v).__name__, v)


def domain_index(domain: Domain) -> dict:
    """Map each value (type-tagged) to its position in the domain."""
    return {_typed(v): i for i, v in enumerate(domain.values)}


def index_of(domain: Domain, value) -> int:
    if isinstance(domain, IntRange):
        return value - domain.lo
    return domain_index(domain)[_typed(value)]


# ---------------------------------------------------------------------------
# Expressions


@dataclass(frozen=True)
class Atom:
    """``attr OP value`` with a literal right-hand side."""

    attr: str
    op: str
    value: Value

    def holds(self, v) -> bool:
        op = self.op
        if op == "=":
            return _typed(v) == _typed(self.value)
        if op == "!=":
            return _typed(v) != _typed(self.value)
        if op == "<":
            return v < self.value
        if op == "<=":
            return v <= self.value
        if op == ">":
            return v > self.value
        return v >= self.value


@dataclass(frozen=True)
class And:
    args: tuple


@dataclass(frozen=True)
class Or:
    args: tuple


@dataclass(frozen=True)
class Not:
    arg: Any


@dataclass(frozen=True)
class Const:
    value: bool


Expr = Union[Atom, And, Or, Not, Const]

TRUE = Const(True)
FALSE = Const(False)


def atoms(expr: Expr) -> list[Atom]:
    """All atoms of ``expr`` in left-to-right order (duplicates kept)."""
    out: list[Atom] = []
    stack = [expr]
    while stack:
        e = stack.pop()
        if isinstance(e, Atom):
            out.append(e)
        elif isinstance(e, (And, Or)):
            stack.extend(reversed(e.args))
        elif isinstance(e, Not):
            stack.append(e.arg)
    return out


def expr_attributes(expr: Expr) -> list[str]:
    seen: dict[str, None] = {}
    for a in atoms(expr):
        seen.setdefault(a.attr, None)
    return list(seen)


def eval_trigger(expr: Expr, state: Mapping[str, Value]) -> bool:
    """Evaluate a trigger or policy predicate against a concrete state.

    ``state`` maps attribute names to values; a :class:`State` works too.
    """
    if isinstance(expr, Atom):
        return expr.holds(state[expr.attr])
    if isinstance(expr, And):
        return all(eval_trigger(a, state) for a in expr.args)
    if isinstance(expr, Or):
        return any(eval_trigger(a, state) for a in expr.args)
    if isinstance(expr, Not):
        return not eval_trigger(expr.arg, state)
    if isinstance(expr, Const):
        return expr.value
    raise TypeError(f"not an expression: {expr!r}")


_SYMBOLS = {"=": "=", "!=": "≠", "<": "<", "<=": "≤", ">": ">", ">=": "≥"}


def format_expr(expr: Expr, ascii: bool = False) -> str:
    if isinstance(expr, Atom):
        op = expr.op if ascii else _SYMBOLS[expr.op]
        return f"{expr.attr} {op} {expr.value}"
    if isinstance(expr, Const):
        return "TRUE" if expr.value else "FALSE"
    if isinstance(expr, Not):
        return f"NOT ({format_expr(expr.arg, ascii)})"
    joiner = " AND " if isinstance(expr, And) else " OR "
    parts = []
    for a in expr.args:
        s = format_expr(a, ascii)
        parts.append(f"({s})" if isinstance(a, (And, Or)) else s)
    return joiner.join(parts)


# ---------------------------------------------------------------------------
# Model entities


@dataclass(frozen=True)
class AttributeDecl:
    name: str
    domain: Domain
    kind: str = ACTUATOR
    vulnerable: bool = False
    label: str = OTHER
    window: Domain | None = None
    initial: Value | None = None

    @property
    def is_sensor(self) -> bool:
        return self.kind == SENSOR

    @property
    def window_values(self) -> tuple:
        """Values a secure sensor may take next round (the domain otherwise)."""
        if self.window is None:
            return self.domain.values
        return self.window.values


@dataclass(frozen=True)
class Rule:
    id: str
    trigger: Expr
    action: tuple[tuple[str, Value], ...]
    priority: int = 0

    @property
    def assignments(self) -> dict[str, Value]:
        return dict(self.action)

    def __str__(self):
        acts = ", ".join(f"{a} ← {v}" for a, v in self.action)
        return f"{self.id}: IF {format_expr(self.trigger)} THEN {acts}"


@dataclass(frozen=True)
class Escalation:
    """A state predicate that must never hold."""

    forbidden: Expr


@dataclass(frozen=True)
class Privacy:
    """Noninterference from PRIVATE to PUBLIC attributes (uses the labels)."""


Policy = Union[Escalation, Privacy]


@dataclass(frozen=True)
class ModelSpec:
    attributes: tuple[AttributeDecl, ...]
    rules: tuple[Rule, ...] = ()
    policies: tuple = ()

    def __post_init__(self):
        validate(self)

    @property
    def names(self) -> list[str]:
        return [a.name for a in self.attributes]

    def attribute(self, name: str) -> AttributeDecl:
        for a in self.attributes:
            if a.name == name:
                return a
        raise KeyError(name)

    @property
    def by_name(self) -> dict[str, AttributeDecl]:
        return {a.name: a for a in self.attributes}

    def rule(self, rule_id: str) -> Rule:
        for r in self.rules:
            if r.id == rule_id:
                return r
        raise KeyError(rule_id)

    @property
    def escalation_policies(self) -> list[Escalation]:
        return [p for p in self.policies if isinstance(p, Escalation)]

    @property
    def labels(self) -> dict[str, str]:
        return {a.name: a.label for a in self.attributes}

    @property
    def vulnerable(self) -> set[str]:
        return {a.name for a in self.attributes if a.vulnerable}

    def initial_state(self) -> "State":
        return State(self, tuple(a.initial for a in self.attributes))

    def replace(self, **changes) -> "ModelSpec":
        fields = {"attributes": self.attributes, "rules": self.rules,
                  "policies": self.policies}
        fields.update(changes)
        return ModelSpec(tuple(fields["attributes"]), tuple(fields["rules"]),
                         tuple(fields["policies"]))

    def with_vulnerable(self, names: Iterable[str]) -> "ModelSpec":
        names = set(names)
        _check_known(self, names)
        attrs = [_replace_attr(a, vulnerable=a.name in names) for a in self.attributes]
        return self.replace(attributes=attrs)

    def with_labels(self, labels: Mapping[str, str]) -> "ModelSpec":
        _check_known(self, labels)
        attrs = [_replace_attr(a, label=labels.get(a.name, a.label))
                 for a in self.attributes]
        return self.replace(attributes=attrs)

    def with_initial(self, values: Mapping[str, Value]) -> "ModelSpec":
        _check_known(self, values)
        attrs = [_replace_attr(a, initial=values.get(a.name, a.initial))
                 for a in self.attributes]
        return self.replace(attributes=attrs)

    def without_rules(self, rule_ids: Iterable[str]) -> "ModelSpec":
        drop = set(rule_ids)
        return self.replace(rules=[r for r in self.rules if r.id not in drop])


def _replace_attr(a: AttributeDecl, **changes) -> AttributeDecl:
    d = dict(name=a.name, domain=a.domain, kind=a.kind, vulnerable=a.vulnerable,
             label=a.label, window=a.window, initial=a.initial)
    d.update(changes)
    return AttributeDecl(**d)


def _check_known(model: ModelSpec, names) -> None:
    known = set(model.names)
    for n in names:
        if n not in known:
            raise ModelError(f"unknown attribute {n!r}")


@dataclass(frozen=True)
class State:
    """One value per attribute, in declaration order."""

    model: ModelSpec = field(repr=False, compare=False)
    values: tuple

    def __getitem__(self, name: str):
        return self.values[self.model.names.index(name)]

    def as_dict(self) -> dict[str, Value]:
        return dict(zip(self.model.names, self.values))


# ---------------------------------------------------------------------------
# Validation


def _check_expr(expr: Expr, attrs: Mapping[str, AttributeDecl], where: str) -> None:
    if isinstance(expr, Atom):
        decl = attrs.get(expr.attr)
        if decl is None:
            raise ModelError(f"{where}: unknown attribute {expr.attr!r}")
        if expr.op not in COMPARISONS:
            raise ModelError(f"{where}: unknown comparison {expr.op!r}")
        if expr.op in ORDER_OPS and not decl.domain.ordered:
            raise ModelError(
                f"{where}: order comparison {expr.op!r} on non-integer attribute {expr.attr!r}")
        if expr.value not in decl.domain:
            raise ModelError(
                f"{where}: literal {expr.value!r} outside domain of {expr.attr!r}")
    elif isinstance(expr, (And, Or)):
        if not expr.args:
            raise ModelError(f"{where}: empty {type(expr).__name__.lower()}")
        for a in expr.args:
            _check_expr(a, attrs, where)
    elif isinstance(expr, Not):
        _check_expr(expr.arg, attrs, where)
    elif not isinstance(expr, Const):
        raise ModelError(f"{where}: not an expression: {expr!r}")


def validate(model: ModelSpec) -> None:
    if not model.attributes:
        raise ModelError("model must declare at least one attribute")
    attrs: dict[str, AttributeDecl] = {}
    for a in model.attributes:
        where = f"attribute {a.name!r}"
        if not isinstance(a.name, str) or not a.name:
            raise ModelError(f"attribute name {a.name!r} must be a non-empty string")
        if a.name in attrs:
            raise ModelError(f"{where}: duplicate name")
        if a.kind not in KINDS:
            raise ModelError(f"{where}: kind must be one of {KINDS}")
        if a.label not in LABELS:
            raise ModelError(f"{where}: label must be one of {LABELS}")
        if a.window is not None:
            if a.kind != SENSOR:
                raise ModelError(f"{where}: only sensors have windows")
            for v in a.window.values:
                if v not in a.domain:
                    raise ModelError(f"{where}: window not a subset of the domain ({v!r})")
        if a.initial is None or a.initial not in a.domain:
            raise ModelError(f"{where}: initial value {a.initial!r} outside domain")
        attrs[a.name] = a

    seen_rules: set[str] = set()
    for r in model.rules:
        where = f"rule {r.id!r}"
        if r.id in seen_rules:
            raise ModelError(f"{where}: duplicate rule id")
        seen_rules.add(r.id)
        _check_expr(r.trigger, attrs, where)
        if not r.action:
            raise ModelError(f"{where}: empty action")
        targets = set()
        for name, value in r.action:
            decl = attrs.get(name)
            if decl is None:
                raise ModelError(f"{where}: unknown attribute {name!r}")
            if decl.kind != ACTUATOR:
                raise ModelError(f"{where}: cannot assign sensor {name!r}")
            if value not in decl.domain:
                raise ModelError(
                    f"{where}: literal {value!r} outside domain of {name!r}")
            if name in targets:
                raise ModelError(f"{where}: assigns {name!r} twice")
            targets.add(name)

    for i, p in enumerate(model.policies):
        if isinstance(p, Escalation):
            _check_expr(p.forbidden, attrs, f"policy #{i}")
        elif not isinstance(p, Privacy):
            raise ModelError(f"policy #{i}: unknown policy {p!r}")


# ---------------------------------------------------------------------------
# JSON reading / writing


def _parse_domain(obj, where: str) -> Domain:
    if not isinstance(obj, dict) or len(obj) != 1:
        raise ModelError(f"{where}: domain must be {{'enum': [...]}} or {{'range': [lo, hi]}}")
    if "enum" in obj:
        vals = obj["enum"]
        if not isinstance(vals, list):
            raise ModelError(f"{where}: enum must be a list")
        try:
            return EnumDomain(tuple(vals))
        except ModelError as exc:
            raise ModelError(f"{where}: {exc}") from None
    if "range" in obj:
        rng = obj["range"]
        if not isinstance(rng, list) or len(rng) != 2:
            raise ModelError(f"{where}: range must be [lo, hi]")
        try:
            return IntRange(rng[0], rng[1])
        except ModelError as exc:
            raise ModelError(f"{where}: {exc}") from None
    raise ModelError(f"{where}: unknown domain shape {sorted(obj)}")


def parse_expr(obj, where: str = "expression") -> Expr:
    if not isinstance(obj, dict) or "op" not in obj:
        raise ModelError(f"{where}: expression must be an object with 'op'")
    op = obj["op"]
    if op in ("and", "or"):
        args = obj.get("args")
        if not isinstance(args, list) or not args:
            raise ModelError(f"{where}: '{op}' needs a non-empty 'args' list")
        parsed = tuple(parse_expr(a, where) for a in args)
        return And(parsed) if op == "and" else Or(parsed)
    if op == "not":
        args = obj.get("args")
        if not isinstance(args, list) or len(args) != 1:
            raise ModelError(f"{where}: 'not' takes exactly one argument")
        return Not(parse_expr(args[0], where))
    if op in ("true", "false"):
        return Const(op == "true")
    if op in COMPARISONS:
        if "attr" not in obj or "value" not in obj:
            raise ModelError(f"{where}: comparison needs 'attr' and 'value'")
        value = obj["value"]
        if isinstance(value, dict) or "attr2" in obj:
            raise ModelError(
                f"{where}: attribute-vs-attribute comparisons are not supported")
        if isinstance(value, bool) or not isinstance(value, (str, int)):
            raise ModelError(f"{where}: literal {value!r} must be a string or integer")
        return Atom(obj["attr"], op, value)
    raise ModelError(f"{where}: unknown operator {op!r}")


def expr_to_json(expr: Expr) -> dict:
    if isinstance(expr, Atom):
        return {"op": expr.op, "attr": expr.attr, "value": expr.value}
    if isinstance(expr, And):
        return {"op": "and", "args": [expr_to_json(a) for a in expr.args]}
    if isinstance(expr, Or):
        return {"op": "or", "args": [expr_to_json(a) for a in expr.args]}
    if isinstance(expr, Not):
        return {"op": "not", "args": [expr_to_json(expr.arg)]}
    return {"op": "true" if expr.value else "false"}


def model_from_dict(doc) -> ModelSpec:
    if not isinstance(doc, dict):
        raise ModelError("model document must be a JSON object")
    raw_attrs = doc.get("attributes")
    if not isinstance(raw_attrs, list):
        raise ModelError("'attributes' must be a list")
    attrs = []
    for i, a in enumerate(raw_attrs):
        if not isinstance(a, dict) or "name" not in a:
            raise ModelError(f"attribute #{i}: missing 'name'")
        where = f"attribute {a['name']!r}"
        domain = _parse_domain(a.get("domain"), where)
        window = a.get("window")
        vulnerable = a.get("vulnerable", False)
        if not isinstance(vulnerable, bool):
            raise ModelError(f"{where}: 'vulnerable' must be a boolean")
        attrs.append(AttributeDecl(
            name=a["name"],
            domain=domain,
            kind=a.get("kind", ACTUATOR),
            vulnerable=vulnerable,
            label=a.get("label", OTHER),
            window=None if window is None else _parse_domain(window, where + " window"),
            initial=a.get("initial"),
        ))

    rules = []
    for i, r in enumerate(doc.get("rules", [])):
        if not isinstance(r, dict) or "id" not in r:
            raise ModelError(f"rule #{i}: missing 'id'")
        where = f"rule {r['id']!r}"
        if "if" not in r or "then" not in r:
            raise ModelError(f"{where}: needs 'if' and 'then'")
        then = r["then"]
        if not isinstance(then, dict):
            raise ModelError(f"{where}: 'then' must map attributes to values")
        rules.append(Rule(str(r["id"]), parse_expr(r["if"], where),
                          tuple(then.items()), priority=i))

    policies = []
    for i, p in enumerate(doc.get("policies", [])):
        kind = p.get("type") if isinstance(p, dict) else None
        if kind == "escalation":
            if "never" not in p:
                raise ModelError(f"policy #{i}: escalation needs 'never'")
            policies.append(Escalation(parse_expr(p["never"], f"policy #{i}")))
        elif kind == "privacy":
            policies.append(Privacy())
        else:
            raise ModelError(f"policy #{i}: unknown policy type {kind!r}")

    return ModelSpec(tuple(attrs), tuple(rules), tuple(policies))


def parse_model(text: str | bytes) -> ModelSpec:
    """Parse and validate a JSON model document."""
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(
            f"syntax error at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return model_from_dict(doc)


def model_to_dict(model: ModelSpec) -> dict:
    attrs = []
    for a in model.attributes:
        d = {"name": a.name, "kind": a.kind, "domain": a.domain.to_json(),
             "vulnerable": a.vulnerable, "label": a.label, "initial": a.initial}
        if a.window is not None:
            d["window"] = a.window.to_json()
        attrs.append(d)
    rules = [{"id": r.id, "if": expr_to_json(r.trigger), "then": dict(r.action)}
             for r in sorted(model.rules, key=lambda r: r.priority)]
    policies = []
    for p in model.policies:
        if isinstance(p, Escalation):
            policies.append({"type": "escalation", "never": expr_to_json(p.forbidden)})
        else:
            policies.append({"type": "privacy"})
    return {"attributes": attrs, "rules": rules, "policies": policies}


def serialize_model(model: ModelSpec, indent: int | None = 2) -> str:
    return json.dumps(model_to_dict(model), indent=indent, ensure_ascii=False) + "\n"


def load_model(path) -> ModelSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_model(fh.read())


# ---------------------------------------------------------------------------
# Static checks


def detect_conflicts(rules: Sequence[Rule]) -> list[tuple[str, str, str]]:
    """Every unordered rule pair that assigns different literals to one attribute.

    Pairs are reported as ``(first, second, attribute)`` with the
    higher-priority rule first; trigger satisfiability is ignored.
    """
    ordered = sorted(rules, key=lambda r: (r.priority, r.id))
    out = []
    for i, a in enumerate(ordered):
        acts = a.assignments
        for b in ordered[i + 1:]:
            for name, v in b.action:
                if name in acts and _typed(acts[name]) != _typed(v):
                    out.append((a.id, b.id, name))
    return out
