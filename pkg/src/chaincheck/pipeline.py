"""Group, prune and check a model, then translate the result back.

The checker runs on a reduced model: pruned to the attributes that can
influence the property and with values collapsed into meta-values.  Any
counterexample it returns is lifted onto the original model: each
meta-value is replaced by a concrete member and dropped attributes are
filled in by running the original rules, so the reported trace replays on
the model the user wrote.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

from .engine import (
    ATTACK, SECURE, UNKNOWN, ConfigError, Verdict, check_escalation, check_privacy,
)
from .grouping import GroupedModel, group_model
from .model import (
    PRIVATE, PUBLIC, Escalation, ModelError, ModelSpec, Privacy, _typed,
    detect_conflicts, eval_trigger, format_expr,
)
from .oracle import brute_check_escalation, brute_check_privacy
from .pruning import prune_for_escalation, prune_for_privacy
from .semantics import EngineConfig, _deterministic_next, choice_sets, fired_rule_ids
from .trace import Step, Trace

log = logging.getLogger(__name__)

ESCALATION = "escalation"
PRIVACY = "privacy"
ORDERS = ("group-prune", "prune-group")
ENGINES = ("fast", "oracle")
EXIT_CODES = {SECURE: 0, ATTACK: 2, UNKNOWN: 3}


@dataclass
class RunReport:
    verdict: str
    mode: str
    trace: Trace | None = None
    reason: str | None = None
    policy: str | None = None
    stats: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    dropped: dict = field(default_factory=lambda: {"attributes": [], "rules": []})
    extra: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.verdict]

    def to_json(self) -> dict:
        out = {
            "verdict": self.verdict,
            "mode": self.mode,
            "policy": self.policy,
            "reason": self.reason,
            "trace": self.trace.to_json() if self.trace is not None else None,
            "stats": self.stats,
            "timings_ms": {k: round(v * 1000, 3) for k, v in self.timings.items()},
            "warnings": list(self.warnings),
            "dropped": self.dropped,
        }
        out.update(self.extra)
        return out

    def to_text(self) -> str:
        lines = [f"verdict: {self.verdict.upper()} ({self.mode})"]
        if self.policy:
            lines.append(f"policy: {self.policy}")
        if self.reason:
            lines.append(f"reason: {self.reason}")
        s = self.stats
        if "attributes" in s:
            a, r = s["attributes"], s["rules"]
            lines.append(f"attributes: {a['input']} -> {a['checked']}   "
                         f"rules: {r['input']} -> {r['checked']}")
        if self.timings:
            lines.append("timings: " + "  ".join(
                f"{k}={v * 1000:.1f}ms" for k, v in self.timings.items()))
        for w in self.warnings:
            lines.append(f"warning: {w}")
        if self.trace is not None:
            lines.append(f"trace ({self.trace.transitions} transitions):")
            lines.append(self.trace.to_text())
        for k, v in self.extra.items():
            lines.append(f"{k}: {v}")
        return "\n".join(lines)


@dataclass(frozen=True)
class PipelineOptions:
    group: bool = True
    prune: bool = True
    order: str = "group-prune"
    engine: str = "fast"
    config: EngineConfig = EngineConfig()
    lift: bool = True

    def __post_init__(self):
        if self.order not in ORDERS:
            raise ValueError(f"unknown order {self.order!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")


@dataclass
class _Reduced:
    model: ModelSpec | None
    grouped: GroupedModel | None
    dropped_attributes: tuple = ()
    dropped_rules: tuple = ()
    trivially_secure: bool = False


def _reduce(model: ModelSpec, policy, opts: PipelineOptions, timings: dict) -> _Reduced:
    attacker = opts.config.attacker_enabled

    def prune(m: ModelSpec):
        t0 = time.perf_counter()
        if isinstance(policy, Privacy):
            res = prune_for_privacy(m)
        else:
            res = prune_for_escalation(m, m.policies[0])
        timings["pruning"] = timings.get("pruning", 0.0) + time.perf_counter() - t0
        return res

    def group(m: ModelSpec, pol):
        t0 = time.perf_counter()
        g = group_model(m, pol, attacker_enabled=attacker)
        timings["grouping"] = timings.get("grouping", 0.0) + time.perf_counter() - t0
        return g

    current = model.replace(policies=(policy,))
    grouped = None
    dropped_a, dropped_r = (), ()
    steps = ["group", "prune"] if opts.order == "group-prune" else ["prune", "group"]
    for step in steps:
        if step == "group" and opts.group:
            pol = current.policies[0]
            grouped = group(current, pol)
            current = grouped.model
        elif step == "prune" and opts.prune:
            res = prune(current)
            dropped_a, dropped_r = res.dropped_attributes, res.dropped_rules
            if res.trivially_secure:
                return _Reduced(None, grouped, dropped_a, dropped_r, True)
            current = res.model
    return _Reduced(current, grouped, dropped_a, dropped_r)


def _space(model: ModelSpec) -> int:
    n = 1
    for a in model.attributes:
        n *= len(a.domain.values)
    return n


def run_check(model: ModelSpec, mode: str = ESCALATION, *, labels=None,
              options: PipelineOptions = PipelineOptions()) -> RunReport:
    """Check every escalation policy (or the privacy property) of ``model``."""
    if labels is not None:
        model = model.with_labels(labels)
    start = time.perf_counter()
    warnings = [f"conflicting rules {a} and {b} on {attr}; {a} takes precedence"
                for a, b, attr in detect_conflicts(model.rules)]
    warnings.append("environment dependencies not modeled: only explicit rules link attributes")

    if mode == PRIVACY:
        policies = [Privacy()]
    elif mode == ESCALATION:
        policies = list(model.escalation_policies)
        if not policies:
            raise ConfigError("model has no escalation policy")
    else:
        raise ValueError(f"unknown mode {mode!r}")

    reports = []
    for policy in policies:
        rep = _check_one(model, policy, options)
        reports.append(rep)
        if rep.verdict == ATTACK:
            break

    final = next((r for r in reports if r.verdict == ATTACK), None) \
        or next((r for r in reports if r.verdict == UNKNOWN), None) \
        or reports[-1]
    final.warnings = warnings + final.warnings
    if len(policies) > 1:
        final.stats["policies_checked"] = len(reports)
    for r in reports:
        for k, v in r.timings.items():
            if r is not final:
                final.timings[k] = final.timings.get(k, 0.0) + v
    final.timings["total"] = time.perf_counter() - start
    return final


def _check_one(model: ModelSpec, policy, opts: PipelineOptions) -> RunReport:
    timings: dict = {}
    mode = PRIVACY if isinstance(policy, Privacy) else ESCALATION
    policy_text = ("privacy (noninterference)" if mode == PRIVACY
                   else "never " + format_expr(policy.forbidden))
    if mode == PRIVACY:
        labels = model.labels
        if not any(v == PRIVATE for v in labels.values()) or \
                not any(v == PUBLIC for v in labels.values()):
            raise ConfigError("privacy check needs at least one private and one public attribute")

    red = _reduce(model, policy, opts, timings)
    stats = {
        "attributes": {"input": len(model.attributes),
                       "checked": 0 if red.model is None else len(red.model.attributes)},
        "rules": {"input": len(model.rules),
                  "checked": 0 if red.model is None else len(red.model.rules)},
        "states": {"input": _space(model)},
    }
    if red.grouped is not None:
        stats["states"]["grouped"] = red.grouped.state_count()
    dropped = {"attributes": list(red.dropped_attributes), "rules": list(red.dropped_rules)}
    warnings = []
    if red.dropped_attributes:
        warnings.append(f"pruned {len(red.dropped_attributes)} attributes and "
                        f"{len(red.dropped_rules)} rules irrelevant to the policy")

    if red.trivially_secure:
        timings.setdefault("checking", 0.0)
        return RunReport(SECURE, mode, reason="no public attribute depends on private data",
                         policy=policy_text, stats=stats, timings=timings,
                         warnings=warnings, dropped=dropped)

    reduced = red.model
    stats["states"]["checked"] = _space(reduced)
    t0 = time.perf_counter()
    verdict = _run_engine(reduced, mode, opts)
    timings["checking"] = time.perf_counter() - t0
    stats["engine"] = {k: v for k, v in verdict.stats.items() if k != "seconds"}

    trace = verdict.trace
    if verdict.status == ATTACK and opts.lift:
        try:
            trace = lift_trace(verdict.trace, model, red.grouped, reduced, policy, opts.config)
        except ModelError as exc:
            warnings.append(f"trace shown over the reduced model: {exc}")
    return RunReport(verdict.status, mode, trace=trace, reason=verdict.reason,
                     policy=policy_text, stats=stats, timings=timings,
                     warnings=warnings, dropped=dropped)


def _run_engine(model: ModelSpec, mode: str, opts: PipelineOptions) -> Verdict:
    cfg = opts.config
    if opts.engine == "oracle":
        if mode == PRIVACY:
            return brute_check_privacy(model, config=cfg)
        return brute_check_escalation(model, config=cfg)
    if mode == PRIVACY:
        return check_privacy(model, config=cfg)
    return check_escalation(model, config=cfg)


# ---------------------------------------------------------------------------
# Lifting reduced traces onto the original model


def _members(grouped: GroupedModel | None, reduced: ModelSpec, name: str, value) -> list:
    """Concrete values represented by ``value`` of a kept attribute."""
    if grouped is None:
        return [value]
    return list(grouped.members(name, value))


def _pick(cands: list, allowed, prefer) -> object:
    ok = [v for v in cands if _typed(v) in allowed]
    if not ok:
        raise ModelError("no concrete value fits the abstract step")
    for p in prefer:
        if any(_typed(p) == _typed(v) for v in ok):
            return p
    return ok[0]


def lift_trace(trace: Trace, model: ModelSpec, grouped: GroupedModel | None,
               reduced: ModelSpec, policy, config: EngineConfig = EngineConfig()) -> Trace:
    """Concrete trace on ``model`` that follows the abstract ``trace`` step by step."""
    if trace.kind == "privacy":
        return _lift_privacy(trace, model, grouped, reduced, config)
    return _lift_escalation(trace, model, grouped, reduced, policy, config)


def _options(model: ModelSpec, config: EngineConfig) -> dict[str, set]:
    return {n: {_typed(v) for v in vals} for n, vals in choice_sets(model, config).items()}


def _annotate(model: ModelSpec, prev: dict, cur: dict, config: EngineConfig, det: dict):
    choices = choice_sets(model, config)
    injected, env = [], []
    for a in model.attributes:
        if a.name not in choices:
            continue
        if a.vulnerable and config.attacker_enabled:
            if _typed(cur[a.name]) != _typed(det[a.name]):
                injected.append((a.name, cur[a.name]))
        elif _typed(cur[a.name]) != _typed(prev[a.name]):
            env.append((a.name, cur[a.name]))
    return fired_rule_ids(prev, model), injected, env


def _lift_escalation(trace, model, grouped, reduced, policy, config) -> Trace:
    kept = set(reduced.names)
    opts = _options(model, config)
    cur = model.initial_state().as_dict()
    steps = [Step(dict(cur))]
    for abstract in trace.steps[1:]:
        det = _deterministic_next(cur, model)
        nxt = {}
        for name in model.names:
            if name in opts:
                cands = (_members(grouped, reduced, name, abstract.state[name]) if name in kept
                         else list(model.attribute(name).domain.values))
                nxt[name] = _pick(cands, opts[name], [cur[name], det[name]])
            else:
                nxt[name] = det[name]
                if name in kept:
                    want = _members(grouped, reduced, name, abstract.state[name])
                    if not any(_typed(v) == _typed(det[name]) for v in want):
                        raise ModelError(f"lifted value of {name} left the abstract trace")
        fired, inj, env = _annotate(model, cur, nxt, config, det)
        steps.append(Step(dict(nxt), fired, inj, env))
        cur = nxt
    if not eval_trigger(policy.forbidden, cur):
        raise ModelError("lifted trace does not end in a forbidden state")
    return Trace(steps, "escalation")


def _lift_privacy(trace, model, grouped, reduced, config) -> Trace:
    kept = set(reduced.names)
    labels = model.labels
    attacked = model.vulnerable if config.attacker_enabled else set()
    sensors = {a.name for a in model.attributes if a.is_sensor}
    opts = _options(model, config)

    left = model.initial_state().as_dict()
    right = dict(left)
    first = trace.steps[0]
    for name in model.names:
        if labels.get(name) == PRIVATE and name in kept:
            cands = _members(grouped, reduced, name, first.right[name])
            right[name] = _pick(cands, {_typed(v) for v in cands}, [left[name]])
    steps = [Step(dict(left), right=dict(right), fired_right=[])]

    for abstract in trace.steps[1:]:
        ldet = _deterministic_next(left, model)
        rdet = _deterministic_next(right, model)
        lnext, rnext = {}, {}
        for name in model.names:
            if name in sensors:
                cands = (_members(grouped, reduced, name, abstract.state[name]) if name in kept
                         else list(model.attribute(name).domain.values))
                v = _pick(cands, opts[name], [left[name], right[name]])
                lnext[name] = rnext[name] = v
            elif name in attacked:
                if name not in kept:
                    lnext[name], rnext[name] = ldet[name], rdet[name]
                    continue
                lwant = _members(grouped, reduced, name, abstract.state[name])
                rwant = _members(grouped, reduced, name, abstract.right[name])
                lt, rt = {_typed(v) for v in lwant}, {_typed(v) for v in rwant}
                if _typed(ldet[name]) in lt and _typed(rdet[name]) in rt:
                    lnext[name], rnext[name] = ldet[name], rdet[name]
                else:
                    both = [v for v in lwant if _typed(v) in rt]
                    v = _pick(both, {_typed(x) for x in both}, [ldet[name], rdet[name]])
                    lnext[name] = rnext[name] = v
            else:
                lnext[name], rnext[name] = ldet[name], rdet[name]
                if name in kept:
                    for side, val in ((abstract.state, ldet), (abstract.right, rdet)):
                        want = _members(grouped, reduced, name, side[name])
                        if not any(_typed(v) == _typed(val[name]) for v in want):
                            raise ModelError(f"lifted value of {name} left the abstract trace")
        lf, inj, env = _annotate(model, left, lnext, config, ldet)
        steps.append(Step(dict(lnext), lf, inj, env, right=dict(rnext),
                          fired_right=fired_rule_ids(right, model)))
        left, right = lnext, rnext
    public = [n for n in model.names if labels.get(n) == PUBLIC]
    if not any(_typed(left[n]) != _typed(right[n]) for n in public):
        raise ModelError("lifted trace does not separate the public attributes")
    return Trace(steps, "privacy")
