"""Synthetic models with known ground truth, and a timing harness.

Chain instances hide one attack chain ``R_1 .. R_l`` among random
distractor rules.  Rule ``R_1`` is triggered by ``a_0 = X_0`` and each
``R_i`` sets ``a_i <- X_i``, which triggers ``R_{i+1}``.  The policy
forbids ``a_l = X_l``.  In the negative variant every trigger asks for a
value ``Y_i != X_i`` that nothing ever produces, so the chain is broken.

Distractors read arbitrary attributes but only write actuators outside the
chain, so the last chain attribute can change only through the chain.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import ATTACK, SECURE, UNKNOWN
from .model import (
    ACTUATOR, OTHER, PRIVATE, PUBLIC, SENSOR, And, Atom, AttributeDecl, EnumDomain,
    Escalation, IntRange, ModelError, ModelSpec, Not, Or, Privacy, Rule,
    expr_attributes, model_to_dict, parse_model, serialize_model,
)
from .pipeline import ESCALATION, PRIVACY, PipelineOptions, run_check
from .semantics import EngineConfig

MIN_CHAIN, MAX_CHAIN = 2, 8


@dataclass(frozen=True)
class GenSpec:
    chain_length: int = 3
    distractors: int = 50
    negative: bool = False
    seed: int = 0
    pool_size: int = 40
    domain_size: int = 4

    def __post_init__(self):
        if not MIN_CHAIN <= self.chain_length <= MAX_CHAIN:
            raise ValueError(f"chain length must lie in [{MIN_CHAIN}, {MAX_CHAIN}]")
        if self.distractors < 0:
            raise ValueError("distractors must be non-negative")
        if self.domain_size < 2:
            raise ValueError("domain_size must be at least 2")


@dataclass
class Instance:
    model: ModelSpec
    expected: str
    mode: str
    chain: list[str]
    spec: GenSpec | None = None
    labels: dict | None = None

    def to_document(self) -> str:
        doc = model_to_dict(self.model)
        doc["meta"] = {"expected": self.expected, "mode": self.mode, "chain": self.chain}
        if self.spec is not None:
            s = self.spec
            doc["meta"]["generator"] = {
                "chain_length": s.chain_length, "distractors": s.distractors,
                "negative": s.negative, "seed": s.seed, "pool_size": s.pool_size,
                "domain_size": s.domain_size}
        return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


def _rng(seed) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed))


def spawn_seeds(master: int, n: int) -> list[int]:
    """Independent 64-bit child seeds derived from one master seed."""
    children = np.random.SeedSequence(master).spawn(n)
    return [int(c.generate_state(1, dtype=np.uint64)[0]) for c in children]


def _random_domain(rng, size: int):
    if rng.random() < 0.5:
        return EnumDomain(tuple(f"v{i}" for i in range(size)))
    lo = int(rng.integers(0, 10))
    return IntRange(lo, lo + size - 1)


def _random_atom(rng, attr: AttributeDecl) -> Atom:
    values = attr.domain.values
    v = values[int(rng.integers(len(values)))]
    if isinstance(attr.domain, IntRange):
        op = ("=", "!=", "<", "<=", ">", ">=")[int(rng.integers(6))]
    else:
        op = ("=", "!=")[int(rng.integers(2))]
    return Atom(attr.name, op, v)


def _other(rng, values, *avoid):
    pool = [v for v in values if v not in avoid]
    if not pool:
        raise ModelError("domain too small for the requested chain")
    return pool[int(rng.integers(len(pool)))]


def _build_chain(spec: GenSpec, privacy: bool) -> Instance:
    rng = _rng(spec.seed)
    l = spec.chain_length
    n_extra = spec.pool_size - (l + 1)
    if n_extra < 1 and spec.distractors:
        raise ModelError("attribute pool too small: distractors need an actuator outside the chain")
    if spec.negative and spec.domain_size < 3:
        raise ModelError("negative chains need domains of at least 3 values")

    attrs: list[AttributeDecl] = []
    targets, triggers = [], []
    for i in range(l + 1):
        dom = _random_domain(rng, spec.domain_size)
        vals = dom.values
        x = vals[int(rng.integers(len(vals)))]
        y = _other(rng, vals, x) if spec.negative else x
        init = _other(rng, vals, x, y)
        targets.append(x)
        triggers.append(y)
        label = OTHER
        if privacy:
            label = PRIVATE if i == 0 else PUBLIC if i == l else OTHER
        attrs.append(AttributeDecl(f"a{i}", dom, ACTUATOR,
                                   vulnerable=(i == 0 and not privacy),
                                   label=label, initial=init))

    extra_actuators = []
    for j in range(max(n_extra, 0)):
        dom = _random_domain(rng, spec.domain_size)
        kind = SENSOR if rng.random() < 0.4 else ACTUATOR
        init = dom.values[int(rng.integers(len(dom.values)))]
        a = AttributeDecl(f"d{j}", dom, kind, initial=init)
        attrs.append(a)
        if kind == ACTUATOR:
            extra_actuators.append(a)
    if spec.distractors and not extra_actuators:
        attrs[l + 1] = replace(attrs[l + 1], kind=ACTUATOR)
        extra_actuators.append(attrs[l + 1])

    rules: list[tuple[str, object, tuple]] = []
    for i in range(1, l + 1):
        trig = Atom(f"a{i - 1}", "=", triggers[i - 1])
        rules.append(("chain", trig, ((f"a{i}", targets[i]),)))

    if not spec.negative:
        for _ in range(spec.distractors):
            k = 1 if rng.random() < 0.7 else 2
            picks = rng.choice(len(attrs), size=k, replace=False)
            ats = [_random_atom(rng, attrs[int(p)]) for p in picks]
            trig = ats[0] if k == 1 else (And(tuple(ats)) if rng.random() < 0.5 else Or(tuple(ats)))
            if rng.random() < 0.1:
                trig = Not(trig)
            m = 1 if rng.random() < 0.8 or len(extra_actuators) < 2 else 2
            outs = rng.choice(len(extra_actuators), size=m, replace=False)
            action = []
            for o in outs:
                t = extra_actuators[int(o)]
                action.append((t.name, t.domain.values[int(rng.integers(len(t.domain.values)))]))
            rules.append(("distractor", trig, tuple(action)))

    order = rng.permutation(len(rules))
    final_rules, chain_ids = [], [""] * l
    for new_pos, old in enumerate(order):
        kind, trig, action = rules[int(old)]
        rid = f"r{new_pos:03d}"
        final_rules.append(Rule(rid, trig, action, priority=new_pos))
        if kind == "chain":
            chain_ids[int(old)] = rid

    if privacy:
        policies: tuple = (Privacy(),)
    else:
        policies = (Escalation(Atom(f"a{l}", "=", targets[l])),)
    model = ModelSpec(tuple(attrs), tuple(final_rules), policies)
    expected = SECURE if spec.negative else ATTACK
    labels = model.labels if privacy else None
    return Instance(model, expected, PRIVACY if privacy else ESCALATION, chain_ids, spec, labels)


def gen_chain(spec: GenSpec) -> Instance:
    """Escalation instance with a planted (or, if negative, broken) attack chain."""
    return _build_chain(spec, privacy=False)


def gen_privacy_chain(spec: GenSpec) -> Instance:
    """Privacy instance: the chain carries a PRIVATE value to a PUBLIC attribute."""
    return _build_chain(spec, privacy=True)


def random_spec(rng: np.random.Generator, negative: bool, **overrides) -> GenSpec:
    l = int(rng.integers(MIN_CHAIN, MAX_CHAIN + 1))
    seed = int(rng.integers(0, 2**63 - 1))
    kw = dict(chain_length=l, negative=negative, seed=seed,
              distractors=0 if negative else 50)
    kw.update(overrides)
    return GenSpec(**kw)


def accuracy_instances(n: int, *, mode: str = ESCALATION, negative: bool = False,
                       seed: int = 0):
    """The ``n`` instances an accuracy run with these arguments checks, in order."""
    rng = _rng(seed)
    gen = gen_privacy_chain if mode == PRIVACY else gen_chain
    for _ in range(n):
        yield gen(random_spec(rng, negative))


def run_accuracy(n: int, *, mode: str = ESCALATION, negative: bool = False, seed: int = 0,
                 options: PipelineOptions = PipelineOptions()) -> dict:
    """Generate ``n`` instances and count verdicts against the planted ground truth."""
    counts = {"total": 0, "correct": 0, ATTACK: 0, SECURE: 0, UNKNOWN: 0}
    failures = []
    for inst in accuracy_instances(n, mode=mode, negative=negative, seed=seed):
        rep = run_check(inst.model, mode, options=options)
        counts["total"] += 1
        counts[rep.verdict] += 1
        if rep.verdict == inst.expected:
            counts["correct"] += 1
        else:
            failures.append(inst.spec)
    counts["failures"] = failures
    return counts


# ---------------------------------------------------------------------------
# Random small models for differential testing


def random_model(rng: np.random.Generator, *, max_attributes: int = 8, max_domain: int = 6,
                 max_rules: int = 15, privacy: bool = False) -> ModelSpec:
    """A small random model whose reachable space stays enumerable by brute force.

    Sensors get narrow windows and at most two attributes are vulnerable,
    so the explicit oracle can finish.
    """
    n = int(rng.integers(2, max_attributes + 1))
    attrs = []
    n_vuln = 0
    for i in range(n):
        size = int(rng.integers(2, max_domain + 1))
        dom = _random_domain(rng, size)
        vals = dom.values
        sensor = rng.random() < 0.3
        init = vals[int(rng.integers(size))]
        window = None
        if sensor:
            w = int(rng.integers(1, min(3, size) + 1))
            start = int(rng.integers(0, size - w + 1))
            win_vals = vals[start:start + w]
            window = (IntRange(win_vals[0], win_vals[-1]) if isinstance(dom, IntRange)
                      else EnumDomain(tuple(win_vals)))
        vulnerable = n_vuln < 2 and rng.random() < 0.2
        if vulnerable:
            n_vuln += 1
        attrs.append(AttributeDecl(f"x{i}", dom, SENSOR if sensor else ACTUATOR,
                                   vulnerable=bool(vulnerable), window=window, initial=init))
    if all(a.kind == SENSOR for a in attrs):
        attrs[0] = replace(attrs[0], kind=ACTUATOR, window=None)
    actuators = [a for a in attrs if a.kind == ACTUATOR]

    rules = []
    for j in range(int(rng.integers(0, max_rules + 1))):
        k = 1 if rng.random() < 0.6 else 2
        picks = rng.choice(n, size=k, replace=False)
        ats = [_random_atom(rng, attrs[int(p)]) for p in picks]
        trig = ats[0] if k == 1 else (And(tuple(ats)) if rng.random() < 0.6 else Or(tuple(ats)))
        if rng.random() < 0.1:
            trig = Not(trig)
        m = 1 if rng.random() < 0.8 or len(actuators) < 2 else 2
        outs = rng.choice(len(actuators), size=m, replace=False)
        action = tuple((actuators[int(o)].name,
                        actuators[int(o)].domain.values[
                            int(rng.integers(len(actuators[int(o)].domain.values)))])
                       for o in outs)
        rules.append(Rule(f"q{j}", trig, action, priority=j))

    if privacy:
        idx = rng.permutation(n)
        labels = {a.name: OTHER for a in attrs}
        labels[attrs[int(idx[0])].name] = PRIVATE
        for p in idx[1:1 + int(rng.integers(1, 3))]:
            labels[attrs[int(p)].name] = PUBLIC
        attrs = [replace(a, label=labels[a.name]) for a in attrs]
        policies: tuple = (Privacy(),)
    else:
        k = 1 if rng.random() < 0.5 else 2
        picks = rng.choice(n, size=min(k, n), replace=False)
        ats = [_random_atom(rng, attrs[int(p)]) for p in picks]
        forbidden = ats[0] if len(ats) == 1 else And(tuple(ats))
        policies = (Escalation(forbidden),)
    return ModelSpec(tuple(attrs), tuple(rules), policies)


# ---------------------------------------------------------------------------
# Rule pool and corpus sampling for timing runs


def gen_pool(seed: int = 0, n_attributes: int = 190, n_rules: int = 1000,
             sensor_fraction: float = 0.55, actuator_trigger_rate: float = 0.08) -> ModelSpec:
    """A large synthetic rule pool shaped like a home-automation corpus.

    Most triggers watch sensors and most actions drive actuators.  Every
    attribute is referenced by at least one rule.  Windows equal domains.
    """
    rng = _rng(seed)
    attrs = []
    n_sensors = int(round(n_attributes * sensor_fraction))
    for i in range(n_attributes):
        sensor = i < n_sensors
        r = rng.random()
        if r < 0.45:
            dom = EnumDomain(("ON", "OFF"))
        elif r < 0.75:
            size = int(rng.integers(3, 6))
            dom = EnumDomain(tuple(f"m{j}" for j in range(size)))
        else:
            hi = int(rng.choice([10, 20, 50, 100]))
            dom = IntRange(0, hi)
        init = dom.values[int(rng.integers(len(dom.values)))]
        prefix = "s" if sensor else "d"
        attrs.append(AttributeDecl(f"{prefix}{i:03d}", dom, SENSOR if sensor else ACTUATOR,
                                   initial=init))
    sensors = [a for a in attrs if a.kind == SENSOR]
    actuators = [a for a in attrs if a.kind == ACTUATOR]

    def pick(pool):
        return pool[int(rng.integers(len(pool)))]

    rules = []
    unused = list(attrs)
    rng.shuffle(unused)
    for j in range(n_rules):
        forced = unused.pop() if unused else None
        k = 1 if rng.random() < 0.7 else 2
        ats = []
        for t in range(k):
            if forced is not None and t == 0 and forced.kind == SENSOR:
                a = forced
            else:
                a = pick(actuators) if rng.random() < actuator_trigger_rate else pick(sensors)
            ats.append(_random_atom(rng, a))
        trig = ats[0] if len(ats) == 1 else And(tuple(ats))
        outs = [forced] if forced is not None and forced.kind == ACTUATOR else [pick(actuators)]
        if rng.random() < 0.2:
            extra = pick(actuators)
            if extra.name != outs[0].name:
                outs.append(extra)
        action = tuple((o.name, o.domain.values[int(rng.integers(len(o.domain.values)))])
                       for o in outs)
        rules.append(Rule(f"p{j:04d}", trig, action, priority=j))
    return ModelSpec(tuple(attrs), tuple(rules), ())


def sample_corpus(pool: ModelSpec, n: int, seed: int = 0) -> ModelSpec:
    """``n`` pool rules plus the attributes they mention and an always-true property.

    The attached escalation policy forbids ``NOT (a = v OR a != v)`` for a
    random attribute ``a``; it never holds, so checking it explores every
    reachable state that matters to ``a``.  One random attribute is marked
    vulnerable.
    """
    if n < 0 or n > len(pool.rules):
        raise ValueError(f"cannot sample {n} rules from a pool of {len(pool.rules)}")
    rng = _rng(seed)
    if n == len(pool.rules):
        chosen = list(pool.rules)
    else:
        idx = np.sort(rng.choice(len(pool.rules), size=n, replace=False))
        chosen = [pool.rules[int(i)] for i in idx]
    used = set()
    for r in chosen:
        used.update(expr_attributes(r.trigger))
        used.update(a for a, _ in r.action)
    attrs = [a for a in pool.attributes if a.name in used]
    if not attrs:
        attrs = [pool.attributes[int(rng.integers(len(pool.attributes)))]]
    target = attrs[int(rng.integers(len(attrs)))]
    v = target.domain.values[int(rng.integers(len(target.domain.values)))]
    forbidden = Not(Or((Atom(target.name, "=", v), Atom(target.name, "!=", v))))
    vuln = attrs[int(rng.integers(len(attrs)))].name
    attrs = [replace(a, vulnerable=(a.name == vuln)) for a in attrs]
    return ModelSpec(tuple(attrs), tuple(chosen), (Escalation(forbidden),))


# ---------------------------------------------------------------------------
# Timing harness

PHASES = ("parsing", "grouping", "pruning", "checking", "total")
ENGINE_OPTIONS = {
    "optimized": PipelineOptions(),
    "baseline": PipelineOptions(group=False, prune=False),
}
CSV_COLUMNS = ("size", "trial", "engine", "phase", "millis", "verdict")


@dataclass
class BenchRow:
    size: int
    trial: int
    engine: str
    phase: str
    millis: float
    verdict: str


def run_benchmark(sizes, trials: int = 3, engines=("optimized", "baseline"), *,
                  seed: int = 0, pool: ModelSpec | None = None, timeout: float = 30.0,
                  max_states: int = 2_000_000) -> list[BenchRow]:
    """Time each engine on sampled corpora; a run that hits its budget is ``censored``."""
    pool = pool if pool is not None else gen_pool(seed)
    rows: list[BenchRow] = []
    seeds = spawn_seeds(seed, len(sizes) * trials)
    for si, size in enumerate(sizes):
        for t in range(trials):
            model = sample_corpus(pool, size, seeds[si * trials + t])
            text = serialize_model(model)
            for engine in engines:
                base = ENGINE_OPTIONS[engine]
                cfg = EngineConfig(max_states=max_states, time_budget=timeout)
                opts = replace(base, config=cfg, lift=False)
                t0 = time.perf_counter()
                parsed = parse_model(text)
                parse_s = time.perf_counter() - t0
                rep = run_check(parsed, ESCALATION, options=opts)
                verdict = "censored" if rep.verdict == UNKNOWN else rep.verdict
                times = dict(rep.timings)
                times["parsing"] = parse_s
                times["total"] = times.get("total", 0.0) + parse_s
                for phase in PHASES:
                    rows.append(BenchRow(size, t, engine, phase,
                                         round(times.get(phase, 0.0) * 1000, 3), verdict))
    return rows


def rows_to_csv(rows: list[BenchRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([r.size, r.trial, r.engine, r.phase, f"{r.millis:.3f}", r.verdict])
    return buf.getvalue()


def summarize(rows: list[BenchRow]) -> list[dict]:
    """Per size and engine: mean and percentiles of total time, plus speedup over baseline.

    When any baseline run was censored the reported speedup is a lower bound
    and ``speedup_is_lower_bound`` is set.
    """
    out = []
    sizes = sorted({r.size for r in rows})
    for size in sizes:
        per: dict[str, list[BenchRow]] = {}
        for r in rows:
            if r.size == size and r.phase == "total":
                per.setdefault(r.engine, []).append(r)
        entry = {"size": size}
        for engine, rs in per.items():
            ms = np.array([r.millis for r in rs])
            entry[engine] = {
                "mean_ms": float(ms.mean()),
                "p50_ms": float(np.percentile(ms, 50)),
                "p90_ms": float(np.percentile(ms, 90)),
                "censored": sum(r.verdict == "censored" for r in rs),
                "runs": len(rs),
            }
        if "optimized" in entry and "baseline" in entry:
            opt, base = entry["optimized"], entry["baseline"]
            entry["speedup"] = base["mean_ms"] / max(opt["mean_ms"], 1e-6)
            entry["speedup_is_lower_bound"] = base["censored"] > 0
        out.append(entry)
    return out
