"""Explicit-state checker for escalation and privacy properties.

Attribute values are stored as small integers (their index in the
domain) and whole frontiers are expanded at once with numpy.

Sensors and attacker-controlled attributes are re-chosen every round
independently of the current state.  Every state reached after round 0
is therefore one point of a *cylinder*: a fixed assignment to the
remaining, state-determined attributes crossed with every combination of
free choices.  The search stores one node per cylinder and only
enumerates the free attributes that some trigger (or the policy) actually
reads.  Levels are expanded in order, so the first violating level gives
a shortest counterexample.
"""

from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .model import (
    PRIVATE, PUBLIC, And, Atom, Const, Escalation, ModelError, ModelSpec,
    Not, Or, Privacy, expr_attributes, index_of,
)
from .semantics import EngineConfig
from .trace import Step, Trace

log = logging.getLogger(__name__)

CHUNK_ROWS = 1 << 16
# cap on int64 cells in one intermediate array (about 256 MB)
MAX_CELLS = 1 << 25
PASSIVE_IDX = -1

SECURE = "secure"
ATTACK = "attack"
UNKNOWN = "unknown"


class ConfigError(ModelError):
    """The requested check does not apply to this model."""


@dataclass
class Verdict:
    status: str
    trace: Trace | None = None
    reason: str | None = None
    stats: dict = field(default_factory=dict)

    @property
    def secure(self) -> bool:
        return self.status == SECURE

    @property
    def attack(self) -> bool:
        return self.status == ATTACK

    @property
    def unknown(self) -> bool:
        return self.status == UNKNOWN

    def __repr__(self):
        extra = f", reason={self.reason!r}" if self.reason else ""
        n = f", trace_len={len(self.trace) - 1}" if self.trace is not None else ""
        return f"Verdict({self.status}{n}{extra})"


# ---------------------------------------------------------------------------
# Compilation


def compile_expr(expr, index: dict[str, int], domains) -> tuple:
    if isinstance(expr, Atom):
        i = index[expr.attr]
        mask = np.array([expr.holds(v) for v in domains[i]], dtype=bool)
        return ("atom", i, mask)
    if isinstance(expr, And):
        return ("and", [compile_expr(a, index, domains) for a in expr.args])
    if isinstance(expr, Or):
        return ("or", [compile_expr(a, index, domains) for a in expr.args])
    if isinstance(expr, Not):
        return ("not", compile_expr(expr.arg, index, domains))
    if isinstance(expr, Const):
        return ("const", bool(expr.value))
    raise TypeError(f"not an expression: {expr!r}")


def eval_batch(cexpr: tuple, X: np.ndarray) -> np.ndarray:
    """Evaluate a compiled expression on every row of ``X`` (shape ``(..., n)``)."""
    tag = cexpr[0]
    if tag == "atom":
        return cexpr[2][X[..., cexpr[1]]]
    if tag == "and":
        out = eval_batch(cexpr[1][0], X)
        for c in cexpr[1][1:]:
            out = out & eval_batch(c, X)
        return out
    if tag == "or":
        out = eval_batch(cexpr[1][0], X)
        for c in cexpr[1][1:]:
            out = out | eval_batch(c, X)
        return out
    if tag == "not":
        return ~eval_batch(cexpr[1], X)
    return np.full(X.shape[:-1], cexpr[1], dtype=bool)


@dataclass(frozen=True)
class CompiledRule:
    id: str
    trigger: tuple
    targets: np.ndarray
    values: np.ndarray
    reads: tuple[int, ...]


class CompiledModel:
    """Integer-indexed form of a :class:`ModelSpec` for one attacker setting."""

    def __init__(self, spec: ModelSpec, attacker_enabled: bool = True):
        self.spec = spec
        self.names = spec.names
        self.n = len(self.names)
        self.index = {name: i for i, name in enumerate(self.names)}
        self.domains = [a.domain.values for a in spec.attributes]
        self.sizes = np.array([len(d) for d in self.domains], dtype=np.int64)
        self.initial = np.array([index_of(a.domain, a.initial) for a in spec.attributes],
                                dtype=np.int64)
        self.sensor = np.array([a.is_sensor for a in spec.attributes], dtype=bool)
        self.attacked = np.array([a.vulnerable and attacker_enabled for a in spec.attributes],
                                 dtype=bool)
        self.labels = [a.label for a in spec.attributes]
        self.windows = []
        for a in spec.attributes:
            if a.is_sensor:
                self.windows.append(np.array([index_of(a.domain, v) for v in a.window_values],
                                             dtype=np.int64))
            else:
                self.windows.append(None)

        ordered = sorted(enumerate(spec.rules), key=lambda ir: (ir[1].priority, ir[0]))
        self.rules: list[CompiledRule] = []
        for _, r in ordered:
            targets = np.array([self.index[a] for a, _ in r.action], dtype=np.int64)
            values = np.array([index_of(spec.attribute(a).domain, v) for a, v in r.action],
                              dtype=np.int64)
            reads = tuple(self.index[a] for a in expr_attributes(r.trigger))
            self.rules.append(CompiledRule(
                r.id, compile_expr(r.trigger, self.index, self.domains), targets, values, reads))

    def compile(self, expr) -> tuple:
        return compile_expr(expr, self.index, self.domains)

    def apply_rules(self, X: np.ndarray) -> np.ndarray:
        """Rule and frame outcome for every row of ``X`` (shape ``(K, n)``)."""
        out = X.copy()
        # lowest priority first so higher-priority writes land last
        for rule in reversed(self.rules):
            fired = eval_batch(rule.trigger, X)
            rows = np.flatnonzero(fired)
            if rows.size:
                out[np.ix_(rows, rule.targets)] = rule.values
        return out

    def fired(self, X: np.ndarray) -> np.ndarray:
        """Boolean matrix ``(K, rules)`` of satisfied triggers, rules in priority order."""
        if not self.rules:
            return np.zeros((X.shape[0], 0), dtype=bool)
        return np.stack([eval_batch(r.trigger, X) for r in self.rules], axis=1)

    def values_of(self, row) -> dict:
        return {name: self.domains[i][int(row[i])] for i, name in enumerate(self.names)}

    def state_space(self) -> int:
        return int(np.prod([int(s) for s in self.sizes], dtype=object))


# ---------------------------------------------------------------------------
# Search


class _Budget(Exception):
    pass


def _cartesian(arrays: list[np.ndarray]) -> np.ndarray:
    if not arrays:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.meshgrid(*arrays, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1).astype(np.int64)


def _combo_chunks(dims: list[np.ndarray], limit: int):
    """Yield the cartesian product of ``dims`` in row blocks of at most ``limit`` (roughly)."""
    split = len(dims)
    size = 1
    while split > 0 and size * len(dims[split - 1]) <= limit:
        split -= 1
        size *= len(dims[split])
    if split == len(dims) and dims:
        split -= 1
    low = _cartesian(dims[split:])
    if split == 0:
        yield low
        return
    for high in itertools.product(*dims[:split]):
        block = np.empty((low.shape[0], len(dims)), dtype=np.int64)
        block[:, :split] = high
        block[:, split:] = low
        yield block


def _unique_first(rows: np.ndarray) -> np.ndarray:
    """Index of the first occurrence of each distinct row, in key order.

    Same result as ``np.unique(rows, axis=0, return_index=True)[1]``, but
    columns are first packed into as few int64 words as their value spans
    allow, which makes the sort much cheaper than comparing raw row bytes.
    """
    n = rows.shape[0]
    if n <= 1 or rows.shape[1] == 0:
        return np.arange(min(n, 1))
    lo = rows.min(axis=0)
    span = (rows.max(axis=0) - lo + 1).tolist()
    words, cols, size = [], [], 1
    for j, r in enumerate(span):
        if cols and size * r >= (1 << 62):
            words.append(cols)
            cols, size = [], 1
        cols.append(j)
        size *= r
    words.append(cols)
    packed = np.empty((n, len(words)), dtype=np.int64)
    for w, cols in enumerate(words):
        acc = np.zeros(n, dtype=np.int64)
        for j in cols:
            acc = acc * span[j] + (rows[:, j] - lo[j])
        packed[:, w] = acc
    if len(words) == 1:
        return np.unique(packed[:, 0], return_index=True)[1]
    order = np.lexsort(packed.T[::-1])
    ordered = packed[order]
    head = np.ones(n, dtype=bool)
    head[1:] = (ordered[1:] != ordered[:-1]).any(axis=1)
    return order[head]


class _KeySpace:
    """Hashable keys for state-determined parts; int64 when they fit."""

    def __init__(self, radices: np.ndarray):
        total = 1
        for r in radices:
            total *= int(r)
        self.packed = total < (1 << 62)
        if self.packed:
            mult = np.ones(len(radices), dtype=np.int64)
            for i in range(len(radices) - 2, -1, -1):
                mult[i] = mult[i + 1] * int(radices[i + 1])
            self.mult = mult
            self.visited = np.zeros(0, dtype=np.int64)
        else:
            self.visited_set: set[bytes] = set()

    def encode(self, rows: np.ndarray):
        if self.packed:
            return rows @ self.mult
        return [r.tobytes() for r in np.ascontiguousarray(rows, dtype=np.int64)]

    def fresh_first(self, keys) -> np.ndarray:
        """Row indices of first occurrences of keys not yet visited (sorted by key)."""
        if self.packed:
            uniq, first = np.unique(keys, return_index=True)
            if self.visited.size:
                pos = np.searchsorted(self.visited, uniq)
                pos = np.minimum(pos, self.visited.size - 1)
                new = self.visited[pos] != uniq
                first = first[new]
            return first
        seen: dict[bytes, int] = {}
        for i, k in enumerate(keys):
            if k not in self.visited_set and k not in seen:
                seen[k] = i
        return np.array([seen[k] for k in sorted(seen)], dtype=np.int64)

    def add(self, keys) -> None:
        if self.packed:
            self.visited = np.union1d(self.visited, keys)
        else:
            self.visited_set.update(keys)

    def __len__(self):
        return self.visited.size if self.packed else len(self.visited_set)


@dataclass
class _Component:
    rules: list               # (CompiledRule, target positions, values), priority order
    free: np.ndarray          # free attributes read by these rules
    inj: np.ndarray           # injectable attributes written here
    inj_cols: np.ndarray
    inj_tpos: np.ndarray
    targets: np.ndarray       # state-determined attributes written here
    t_d: np.ndarray           # positions of targets within D
    free_cols: np.ndarray = None
    values: np.ndarray = None     # (rules + 1, |T|) value written per rank, -1 if none
    clusters: list = None         # (rule ranks, free attributes) sharing inputs


@dataclass
class _Level:
    d: np.ndarray             # (K, copies, |D|) state-determined part
    parent: np.ndarray        # (K,) index into previous level
    p: np.ndarray             # (K, |Prel|) free values of the parent state used
    n: np.ndarray             # (K, |N|) injection choices (PASSIVE_IDX = passive)


class _Search:
    def __init__(self, cm: CompiledModel, copies: int, init: np.ndarray,
                 config: EngineConfig, forbidden: tuple | None, public: list[int]):
        self.cm = cm
        self.copies = copies
        self.init = init                      # (m0, copies, n)
        self.config = config
        self.forbidden = forbidden
        self.public = np.array(public, dtype=np.int64)
        self.deadline = (time.perf_counter() + config.time_budget
                         if config.time_budget else None)

        n = cm.n
        attacked = cm.attacked
        self.options: dict[int, np.ndarray] = {}
        self.inject: dict[int, np.ndarray] = {}
        for i in range(n):
            full = np.arange(cm.sizes[i], dtype=np.int64)
            if cm.sensor[i]:
                self.options[i] = full if attacked[i] else cm.windows[i]
            elif attacked[i]:
                if copies == 1:
                    self.options[i] = full
                else:
                    self.inject[i] = np.append(full, PASSIVE_IDX)
        self.P = np.array(sorted(self.options), dtype=np.int64)
        self.D = np.array([i for i in range(n) if i not in self.options], dtype=np.int64)
        self.N = np.array(sorted(self.inject), dtype=np.int64)
        self.n_pos = np.searchsorted(self.D, self.N)

        self.components = self._components()
        self.P_trig = np.array(sorted({int(i) for c in self.components for i in c.free}),
                               dtype=np.int64)
        for c in self.components:
            c.free_cols = np.searchsorted(self.P_trig, c.free)
        if forbidden is not None:
            pol = set(_compiled_reads(forbidden))
            self.P_pol = np.array([i for i in self.P if i in pol], dtype=np.int64)
        else:
            self.P_pol = np.zeros(0, dtype=np.int64)
        self.default_p = np.array([self.options[i][0] for i in self.P], dtype=np.int64)

        self.width = copies * self.D.size
        radices = np.tile(cm.sizes[self.D], copies)
        self.keys = _KeySpace(radices)
        self.levels: list[_Level] = []
        self.nodes = 0

    # -- transition partitioning -------------------------------------------
    def _components(self) -> list["_Component"]:
        """Split rules into groups that share no free input and no written attribute.

        Groups evolve independently within one round, so the successors of
        a node are the product of each group's distinct outcomes.
        """
        parent: dict = {}

        def find(x):
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(a, b):
            parent[find(a)] = find(b)

        free = set(self.options)
        for ri, rule in enumerate(self.cm.rules):
            find(("r", ri))
            for i in rule.reads:
                if i in free:
                    union(("r", ri), ("p", i))
            for t in rule.targets:
                if int(t) not in free:
                    union(("r", ri), ("t", int(t)))
        for i in self.N:
            union(("n", int(i)), ("t", int(i)))

        groups: dict = {}
        for key in list(parent):
            groups.setdefault(find(key), []).append(key)
        comps = []
        for members in groups.values():
            targets = np.array(sorted(k[1] for k in members if k[0] == "t"), dtype=np.int64)
            if targets.size == 0:
                continue
            rules = []
            for ri in sorted(k[1] for k in members if k[0] == "r"):
                rule = self.cm.rules[ri]
                keep = [j for j, t in enumerate(rule.targets) if int(t) not in free]
                tpos = np.searchsorted(targets, rule.targets[keep])
                rules.append((rule, tpos, rule.values[keep]))
            inj = np.array(sorted(k[1] for k in members if k[0] == "n"), dtype=np.int64)
            comp = _Component(
                rules=rules,
                free=np.array(sorted(k[1] for k in members if k[0] == "p"), dtype=np.int64),
                inj=inj,
                inj_cols=np.searchsorted(self.N, inj),
                inj_tpos=np.searchsorted(targets, inj),
                targets=targets,
                t_d=np.searchsorted(self.D, targets),
            )
            R = len(rules)
            comp.values = np.full((R + 1, targets.size), -1, dtype=np.int64)
            for rank, (_, tpos, vals) in enumerate(rules):
                comp.values[rank, tpos] = vals
            comp.clusters = self._clusters(comp)
            comps.append(comp)
        comps.sort(key=lambda c: int(c.targets[0]))
        return comps

    def _clusters(self, comp: "_Component") -> list[tuple[np.ndarray, np.ndarray]]:
        """Rules of ``comp`` grouped by shared free inputs: (rule ranks, free attributes)."""
        free = set(self.options)
        parent = list(range(len(comp.rules)))

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        reader: dict[int, int] = {}
        for rank, (rule, _, _) in enumerate(comp.rules):
            for i in rule.reads:
                if i in free:
                    if i in reader:
                        parent[find(rank)] = find(reader[i])
                    else:
                        reader[i] = rank
        groups: dict[int, list[int]] = {}
        for rank in range(len(comp.rules)):
            groups.setdefault(find(rank), []).append(rank)
        out = []
        for ranks in groups.values():
            attrs = sorted(i for i, r in reader.items() if find(r) == find(ranks[0]))
            out.append((np.array(ranks, dtype=np.int64), np.array(attrs, dtype=np.int64)))
        return out

    def _outcomes(self, comp: "_Component", d: np.ndarray):
        """Distinct next values of ``comp``'s targets for each node in ``d``.

        Clusters are folded in one at a time.  Partial results only keep,
        per target and copy, the best-ranked rule that fired so far, and are
        de-duplicated after each cluster.  Returns node indices, target
        values ``(U, copies, |T|)`` and the free/injection choices behind
        each outcome (columns follow ``comp.free`` then ``comp.inj``).
        """
        K, c = d.shape[0], self.copies
        R, nT = len(comp.rules), comp.targets.size
        f = comp.free.size
        node = np.arange(K)
        best = np.full((K, c, nT), R, dtype=np.int64)
        rep = np.tile(np.array([self.options[i][0] for i in comp.free], dtype=np.int64), (K, 1))
        for ranks, attrs in comp.clusters:
            self._tick()
            vnode, vfired, vrep = self._firing_vectors(comp, ranks, attrs, d)
            writes = comp.values[ranks] >= 0
            # best rank per target contributed by each firing vector
            cand = np.where(vfired[:, :, :, None] & writes[None, None],
                            ranks[None, None, :, None], R).min(axis=2)
            counts = np.bincount(vnode, minlength=K)
            starts = np.cumsum(counts) - counts
            per_row = counts[node]
            total = int(per_row.sum())
            self._guard_rows(total, c * nT + f + 1)
            src = np.repeat(np.arange(node.size), per_row)
            offset = np.arange(total) - np.repeat(np.cumsum(per_row) - per_row, per_row)
            pick = starts[node[src]] + offset
            node = node[src]
            best = np.minimum(best[src], cand[pick])
            rep = rep[src]
            if attrs.size:
                rep[:, np.searchsorted(comp.free, attrs)] = vrep[pick]
            key = np.concatenate([node[:, None], best.reshape(best.shape[0], -1)], axis=1)
            first = _unique_first(key)
            first.sort()
            node, best, rep = node[first], best[first], rep[first]

        T = comp.values[best, np.arange(nT)]
        T = np.where(best == R, d[node][:, :, comp.t_d], T)

        if comp.inj.size:
            combos = _cartesian([self.inject[i] for i in comp.inj])
            m = combos.shape[0]
            U = node.size
            T = np.repeat(T, m, axis=0)
            node = np.repeat(node, m)
            rep = np.concatenate([np.repeat(rep, m, axis=0), np.tile(combos, (U, 1))], axis=1)
            for j, tpos in enumerate(comp.inj_tpos):
                rows = rep[:, f + j] != PASSIVE_IDX
                T[rows, :, tpos] = rep[rows, f + j][:, None]
        key = np.concatenate([node[:, None], T.reshape(T.shape[0], -1)], axis=1)
        first = _unique_first(key)
        return node[first], T[first], rep[first]

    def _firing_vectors(self, comp: "_Component", ranks: np.ndarray, attrs: np.ndarray,
                        d: np.ndarray):
        """Distinct (node, fired rules) outcomes of one cluster over its free inputs."""
        K = d.shape[0]
        dims = [self.options[i] for i in attrs]
        rules = [comp.rules[int(r)][0] for r in ranks]
        nodes, fired, reps = [], [], []
        for combos in _combo_chunks(dims, CHUNK_ROWS):
            m = combos.shape[0]
            step = max(1, CHUNK_ROWS // m)
            for s in range(0, K, step):
                self._tick()
                dd = d[s:s + step]
                k = dd.shape[0]
                allc = np.tile(combos, (k, 1))
                X = self._fill(np.repeat(dd, m, axis=0), attrs, allc)
                Xf = X.reshape(-1, self.cm.n)
                F = np.stack([eval_batch(r.trigger, Xf) for r in rules], axis=1)
                F = F.reshape(k * m, self.copies, len(rules))
                nd = np.repeat(np.arange(s, s + k), m)
                key = np.concatenate([nd[:, None], F.reshape(F.shape[0], -1)], axis=1)
                first = _unique_first(key)
                nodes.append(nd[first])
                fired.append(F[first])
                reps.append(allc[first])
        nd = np.concatenate(nodes)
        F = np.concatenate(fired)
        rp = np.concatenate(reps)
        key = np.concatenate([nd[:, None], F.reshape(F.shape[0], -1)], axis=1)
        first = _unique_first(key)
        return nd[first], F[first], rp[first]

    # -- helpers -----------------------------------------------------------
    def _guard_rows(self, rows: int, width: int) -> None:
        if rows > 8 * self.config.max_states or rows * max(1, width) > MAX_CELLS:
            raise _Budget(f"state budget of {self.config.max_states} nodes exhausted")

    def _tick(self):
        if self.deadline is not None and time.perf_counter() > self.deadline:
            raise _Budget("time budget exhausted")

    def _violates(self, X: np.ndarray) -> np.ndarray:
        """X: (K, copies, n) full states."""
        if self.forbidden is not None:
            return eval_batch(self.forbidden, X[:, 0, :])
        if self.public.size == 0:
            return np.zeros(X.shape[0], dtype=bool)
        diff = X[:, 0, self.public] != X[:, 1, self.public]
        return diff.any(axis=1)

    def _fill(self, d: np.ndarray, p_idx: np.ndarray, p_vals: np.ndarray) -> np.ndarray:
        """Full states from d-parts (K, c, |D|) and free values for columns p_idx (K, len)."""
        K = d.shape[0]
        X = np.empty((K, self.copies, self.cm.n), dtype=np.int64)
        X[:, :, self.D] = d
        if self.P.size:
            X[:, :, self.P] = self.default_p
        if p_idx.size:
            X[:, :, p_idx] = p_vals[:, None, :]
        return X

    def _step(self, X: np.ndarray, nchoice: np.ndarray) -> np.ndarray:
        """Next d-parts for full states X (K, c, n) under injection choices (K, |N|)."""
        K, c, n = X.shape
        out = self.cm.apply_rules(X.reshape(K * c, n)).reshape(K, c, n)
        d = out[:, :, self.D]
        if self.N.size:
            inj = nchoice != PASSIVE_IDX
            for j, pos in enumerate(self.n_pos):
                rows = inj[:, j]
                d[rows, :, pos] = nchoice[rows, j][:, None]
        return d

    # -- main loop ----------------------------------------------------------
    def run(self) -> Verdict:
        start = time.perf_counter()
        try:
            verdict = self._run()
        except _Budget as exc:
            verdict = Verdict(UNKNOWN, reason=str(exc))
        verdict.stats.update(nodes=self.nodes, levels=len(self.levels),
                             seconds=time.perf_counter() - start,
                             free_attributes=int(self.P.size),
                             enumerated_free=int(self.P_trig.size),
                             components=len(self.components))
        return verdict

    def _run(self) -> Verdict:
        X0 = self.init
        bad = self._violates(X0)
        if bad.any():
            return Verdict(ATTACK, trace=self._trace0(int(np.flatnonzero(bad)[0])))
        self.nodes = X0.shape[0]
        if not self.P.size:
            # with nothing free an initial state is its own cylinder
            self.keys.add(self.keys.encode(X0[:, :, self.D].reshape(X0.shape[0], self.width)))

        # level 1 from the explicit initial states
        n_dims = [self.inject[i] for i in self.N]
        cand = []
        for combos in _combo_chunks(n_dims, CHUNK_ROWS):
            self._tick()
            m = combos.shape[0]
            for s in range(0, X0.shape[0], max(1, CHUNK_ROWS // m)):
                Xs = X0[s:s + max(1, CHUNK_ROWS // m)]
                K = Xs.shape[0]
                rows = np.repeat(Xs, m, axis=0)
                nch = np.tile(combos, (K, 1))
                d = self._step(rows, nch)
                parent = np.repeat(np.arange(s, s + K), m)
                cand.append((d, parent, np.zeros((K * m, 0), dtype=np.int64), nch))
                self._absorb(cand)
        level = self._close_level(cand)

        while level is not None and level.d.shape[0]:
            self.levels.append(level)
            found = self._check_level(level)
            if found is not None:
                return Verdict(ATTACK, trace=self._trace(*found))
            level = self._expand(level)
        return Verdict(SECURE)

    def _absorb(self, cand):
        total = sum(c[0].shape[0] for c in cand)
        if total > 4 * CHUNK_ROWS:
            merged = self._merge(cand)
            cand.clear()
            cand.append(merged)
            if len(self.keys) + merged[0].shape[0] > self.config.max_states:
                raise _Budget(f"state budget of {self.config.max_states} nodes exhausted")

    def _merge(self, cand):
        d = np.concatenate([c[0] for c in cand])
        parent = np.concatenate([c[1] for c in cand])
        p = np.concatenate([c[2] for c in cand])
        nch = np.concatenate([c[3] for c in cand])
        keys = self.keys.encode(d.reshape(d.shape[0], self.width))
        first = self.keys.fresh_first(keys)
        first.sort()
        return d[first], parent[first], p[first], nch[first]

    def _close_level(self, cand) -> _Level | None:
        if not cand:
            return None
        d, parent, p, nch = self._merge(cand)
        if len(self.keys) + d.shape[0] > self.config.max_states:
            raise _Budget(f"state budget of {self.config.max_states} nodes exhausted")
        self.keys.add(self.keys.encode(d.reshape(d.shape[0], self.width)))
        self.nodes += d.shape[0]
        return _Level(d, parent, p, nch)

    def _check_level(self, level: _Level):
        dims = [self.options[i] for i in self.P_pol]
        for combos in _combo_chunks(dims, CHUNK_ROWS):
            m = combos.shape[0]
            step = max(1, CHUNK_ROWS // m)
            for s in range(0, level.d.shape[0], step):
                self._tick()
                d = level.d[s:s + step]
                K = d.shape[0]
                X = self._fill(np.repeat(d, m, axis=0), self.P_pol, np.tile(combos, (K, 1)))
                bad = self._violates(X)
                if bad.any():
                    row = int(np.flatnonzero(bad)[0])
                    return len(self.levels) - 1, s + row // m, combos[row % m]
        return None

    def _expand(self, level: _Level) -> _Level | None:
        widest = max([1] + [int(np.prod([len(self.options[i]) for i in attrs]))
                            for c in self.components for _, attrs in c.clusters])
        step = max(1, CHUNK_ROWS // min(widest, CHUNK_ROWS))
        default = np.array([self.options[i][0] for i in self.P_trig], dtype=np.int64)
        cand = []
        for s in range(0, level.d.shape[0], step):
            d = level.d[s:s + step]
            K = d.shape[0]
            row_node = np.arange(K)
            row_d = d.copy()
            row_p = np.tile(default, (K, 1))
            row_n = np.full((K, self.N.size), PASSIVE_IDX, dtype=np.int64)
            for comp in self.components:
                node, T, rep = self._outcomes(comp, d)
                counts = np.bincount(node, minlength=K)
                starts = np.cumsum(counts) - counts
                per_row = counts[row_node]
                total = int(per_row.sum())
                self._guard_rows(total, row_d[0].size + row_p.shape[1] + row_n.shape[1] + 1)
                src = np.repeat(np.arange(row_node.size), per_row)
                offset = np.arange(total) - np.repeat(np.cumsum(per_row) - per_row, per_row)
                pick = starts[row_node[src]] + offset
                row_node = row_node[src]
                row_d = row_d[src]
                row_d[:, :, comp.t_d] = T[pick]
                row_p = row_p[src]
                row_n = row_n[src]
                f = comp.free.size
                if f:
                    row_p[:, comp.free_cols] = rep[pick, :f]
                if comp.inj.size:
                    row_n[:, comp.inj_cols] = rep[pick, f:]
            cand.append((row_d, s + row_node, row_p, row_n))
            self._absorb(cand)
        return self._close_level(cand)

    # -- traces ---------------------------------------------------------------
    def _trace0(self, i: int) -> Trace:
        return _to_trace(self.cm, [self.init[i]], self.copies)

    def _trace(self, lvl: int, idx: int, pol_vals: np.ndarray) -> Trace:
        # walk parents back to level 0
        chain = []
        j = idx
        for k in range(lvl, -1, -1):
            L = self.levels[k]
            chain.append((k, j))
            j = int(L.parent[j])
        init_idx = j
        chain.reverse()

        states = [self.init[init_idx].copy()]
        for pos, (k, j) in enumerate(chain):
            L = self.levels[k]
            X = np.empty((self.copies, self.cm.n), dtype=np.int64)
            X[:, self.D] = L.d[j]
            prev = states[-1]
            # free attributes: stay put when allowed, else first option
            for col, i in enumerate(self.P):
                v = prev[0, i]
                X[:, i] = v if v in self.options[i] else self.options[i][0]
            if pos + 1 < len(chain):
                nk, nj = chain[pos + 1]
                X[:, self.P_trig] = self.levels[nk].p[nj]
            else:
                X[:, self.P_pol] = pol_vals
            states.append(X)
        return _to_trace(self.cm, states, self.copies)


def _compiled_reads(cexpr) -> list[int]:
    tag = cexpr[0]
    if tag == "atom":
        return [cexpr[1]]
    if tag in ("and", "or"):
        return [i for c in cexpr[1] for i in _compiled_reads(c)]
    if tag == "not":
        return _compiled_reads(cexpr[1])
    return []


def _to_trace(cm: CompiledModel, states: list[np.ndarray], copies: int) -> Trace:
    """Convert index arrays ``(copies, n)`` to a :class:`Trace` in model values."""
    steps = []
    for t, X in enumerate(states):
        vals = [cm.values_of(X[c]) for c in range(copies)]
        if t == 0:
            fired = [[] for _ in range(copies)]
            injected, env = [], []
        else:
            prev = states[t - 1]
            fm = cm.fired(prev)
            fired = [[cm.rules[j].id for j in np.flatnonzero(fm[c])] for c in range(copies)]
            det = cm.apply_rules(prev)
            injected, env = [], []
            for i, name in enumerate(cm.names):
                if cm.attacked[i]:
                    if any(X[c, i] != det[c, i] for c in range(copies)):
                        injected.append((name, cm.domains[i][int(X[0, i])]))
                elif cm.sensor[i] and X[0, i] != prev[0, i]:
                    env.append((name, cm.domains[i][int(X[0, i])]))
        if copies == 1:
            steps.append(Step(vals[0], fired[0], injected, env))
        else:
            steps.append(Step(vals[0], fired[0], injected, env,
                              right=vals[1], fired_right=fired[1]))
    return Trace(steps, kind="escalation" if copies == 1 else "privacy")


# ---------------------------------------------------------------------------
# Public entry points


def _policy(model: ModelSpec, policy) -> Escalation:
    if policy is None:
        pols = model.escalation_policies
        if not pols:
            raise ConfigError("model has no escalation policy")
        return pols[0]
    if not isinstance(policy, Escalation):
        raise ConfigError("escalation check needs an escalation policy")
    return policy


def check_escalation(model: ModelSpec | CompiledModel, policy: Escalation | None = None,
                     config: EngineConfig = EngineConfig()) -> Verdict:
    """Search for a reachable state satisfying the forbidden predicate."""
    cm = model if isinstance(model, CompiledModel) else CompiledModel(model, config.attacker_enabled)
    pol = _policy(cm.spec, policy)
    search = _Search(cm, 1, cm.initial[None, None, :], config, cm.compile(pol.forbidden), [])
    return search.run()


@dataclass
class ProductModel:
    base: CompiledModel
    initial_pairs: np.ndarray      # (m0, 2, n)
    private: list[int]
    public: list[int]

    def state_space(self) -> int:
        return self.base.state_space() ** 2


def build_product(model: ModelSpec | CompiledModel, labels=None,
                  attacker_enabled: bool = True) -> ProductModel:
    """Self-composition of the model with a copy whose PRIVATE initial values vary.

    The left copy starts in the model's initial state; the right copy agrees
    on every PUBLIC and OTHER attribute and takes every combination of
    PRIVATE values, including the left copy's own.
    """
    if isinstance(model, CompiledModel):
        spec = model.spec if labels is None else model.spec.with_labels(labels)
        cm = model if labels is None else CompiledModel(spec, attacker_enabled)
    else:
        spec = model if labels is None else model.with_labels(labels)
        cm = CompiledModel(spec, attacker_enabled)
    private = [i for i, lab in enumerate(cm.labels) if lab == PRIVATE]
    public = [i for i, lab in enumerate(cm.labels) if lab == PUBLIC]
    if not private or not public:
        raise ConfigError("privacy check needs at least one private and one public attribute")
    combos = _cartesian([np.arange(cm.sizes[i], dtype=np.int64) for i in private])
    m0 = combos.shape[0]
    pairs = np.empty((m0, 2, cm.n), dtype=np.int64)
    pairs[:, 0, :] = cm.initial
    pairs[:, 1, :] = cm.initial
    pairs[:, 1, private] = combos
    return ProductModel(cm, pairs, private, public)


def check_privacy(model: ModelSpec | CompiledModel | ProductModel, labels=None,
                  config: EngineConfig = EngineConfig()) -> Verdict:
    """Search the product machine for a pair of runs that differ on a PUBLIC attribute."""
    pm = model if isinstance(model, ProductModel) else build_product(
        model, labels, config.attacker_enabled)
    search = _Search(pm.base, 2, pm.initial_pairs, config, None, pm.public)
    verdict = search.run()
    verdict.stats["initial_pairs"] = int(pm.initial_pairs.shape[0])
    return verdict


def product_step(pm: ProductModel, pairs: np.ndarray, config: EngineConfig = EngineConfig()
                 ) -> np.ndarray:
    """All synchronised successors of explicit product states ``(K, 2, n)``.

    Returns full states ``(K * M, 2, n)`` grouped by source row; meant for
    property tests rather than search.
    """
    search = _Search(pm.base, 2, pairs, config, None, pm.public)
    dims = [search.options[i] for i in search.P] + [search.inject[i] for i in search.N]
    combos = _cartesian(dims)
    K, m = pairs.shape[0], combos.shape[0]
    rows = np.repeat(pairs, m, axis=0)
    allc = np.tile(combos, (K, 1))
    k = search.P.size
    d = search._step(rows, allc[:, k:])
    out = np.empty_like(rows)
    out[:, :, search.D] = d
    if k:
        out[:, :, search.P] = allc[:, None, :k]
    return out
