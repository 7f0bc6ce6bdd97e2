"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS or FAIL line that the terminal summary prints.
"""

import time
from contextlib import contextmanager

import numpy as np

from chaincheck.bench import (
    accuracy_instances, gen_pool, random_model, run_accuracy, run_benchmark, summarize,
)
from chaincheck.engine import ATTACK, SECURE, build_product, product_step
from chaincheck.fixtures import overlapping_chains, smart_home, smart_home_privacy_labels
from chaincheck.grouping import collect_constraints, group_attribute, group_model
from chaincheck.mitigation import apply_watchlist, exact_hitting_set, mitigate
from chaincheck.model import PRIVATE, format_expr
from chaincheck.oracle import brute_check_escalation, brute_check_privacy
from chaincheck.pipeline import ESCALATION, PRIVACY, PipelineOptions, run_check
from chaincheck.pruning import backtrace, build_dependency_graph, prune_for_privacy
from chaincheck.semantics import iter_product_successors
from chaincheck.trace import replay

from conftest import ACCEPTANCE

# Shortest attack on the smart-home model, fixed by the brute-force oracle.
HOME_TRACE_LENGTH = 3

OPTION_SETS = {
    "default": PipelineOptions(),
    "prune-group": PipelineOptions(order="prune-group"),
    "bare": PipelineOptions(group=False, prune=False),
}


@contextmanager
def criterion(n, title):
    info = {"detail": ""}
    ok = False
    try:
        yield info
        ok = True
    finally:
        ACCEPTANCE[n] = (ok, title, info["detail"])


def in_order(seq, wanted):
    it = iter(seq)
    return all(w in it for w in wanted)


def test_1_home_escalation():
    with criterion(1, "smart-home escalation attack with R1, R2, R5 in order") as info:
        model = smart_home()
        t0 = time.perf_counter()
        rep = run_check(model)
        elapsed = time.perf_counter() - t0
        assert rep.verdict == ATTACK
        assert in_order(rep.trace.fired_sequence(), ["R1", "R2", "R5"])
        assert rep.trace.transitions == HOME_TRACE_LENGTH
        assert replay(rep.trace, model)
        assert elapsed < 1.0
        info["detail"] = f"{rep.trace.transitions} transitions, {elapsed * 1000:.0f} ms"


def test_2_home_privacy():
    with criterion(2, "smart-home privacy leak after pruning to 3 attributes") as info:
        model = smart_home(labels=smart_home_privacy_labels())
        pruned = prune_for_privacy(model)
        assert set(pruned.kept_attributes) == {"occupancy", "tv", "light2"}
        t0 = time.perf_counter()
        rep = run_check(model, PRIVACY)
        elapsed = time.perf_counter() - t0
        assert rep.verdict == ATTACK
        left, right = rep.trace.pairs[-1]
        assert left["light2"] != right["light2"]
        assert replay(rep.trace, model)
        assert elapsed < 1.0
        info["detail"] = f"{rep.trace.transitions} transitions, {elapsed * 1000:.0f} ms"


def test_3_grouping_golden():
    with criterion(3, "grouping partitions and rule rewrites of the smart home"):
        model = smart_home()
        constraints = collect_constraints(model.rules, model.policies[0])
        temp, loc = model.attribute("temperature"), model.attribute("location")
        tdom = group_attribute(temp, constraints["temperature"], effective=temp.window.values)
        assert tdom.partition == [(23, 24, 25), (26, 27), (28, 29, 30, 31), (32, 33)]
        ldom = group_attribute(loc, constraints["location"], effective=loc.window.values)
        assert [set(p) for p in ldom.partition] == [{0}, set(range(1, 11))]

        g = group_model(model)
        assert g.domains["fan"].labels == ["ALL"]
        assert g.domains["ac"].labels == ["ALL"]
        expected = {
            "R10": ("temperature = 28..31 OR temperature = 32..33", (("fan", "ALL"),)),
            "R11": ("temperature = 32..33", (("ac", "ALL"),)),
            "R12": ("temperature = 23..25", (("fan", "ALL"), ("ac", "ALL"))),
        }
        for rid, (trigger, action) in expected.items():
            rule = g.model.rule(rid)
            assert format_expr(rule.trigger, ascii=True) == trigger
            assert rule.action == action
        # location's "everything but 0" class, whatever its label
        others = g.domains["location"].meta_of(5).label
        assert format_expr(g.model.rule("R3").trigger, ascii=True) == f"location = {others}"


def test_4_pruning_golden():
    with criterion(4, "back-trace from lock and camera keeps 4 attributes and R1..R5"):
        attrs, rules = backtrace(build_dependency_graph(smart_home()), {"lock", "camera"})
        assert attrs == {"lock", "camera", "light1", "location"}
        assert rules == {"R1", "R2", "R3", "R4", "R5"}


def test_5_accuracy():
    with criterion(5, "1000 positive and 1000 negative chains per mode") as info:
        t0 = time.perf_counter()
        lines = []
        for mode in (ESCALATION, PRIVACY):
            for negative in (False, True):
                res = run_accuracy(1000, mode=mode, negative=negative, seed=2024)
                lines.append(f"{mode}/{'neg' if negative else 'pos'} {res['correct']}/1000")
                assert res["correct"] == 1000, res["failures"][:3]
        elapsed = time.perf_counter() - t0
        assert elapsed < 600
        info["detail"] = ", ".join(lines) + f", {elapsed:.0f} s"


def test_6_oracle_equivalence():
    with criterion(6, "200 random models agree with the oracle in both modes") as info:
        rng = np.random.default_rng(6)
        agree = {ESCALATION: 0, PRIVACY: 0}
        for i in range(200):
            seed = int(rng.integers(2**32))
            opts = list(OPTION_SETS.values())[i % len(OPTION_SETS)]
            m = random_model(np.random.default_rng(seed))
            rep, ref = run_check(m, options=opts), brute_check_escalation(m)
            assert rep.verdict == ref.status, seed
            if rep.verdict == ATTACK:
                assert replay(rep.trace, m), seed
                assert replay(ref.trace, m), seed
            agree[ESCALATION] += 1

            p = random_model(np.random.default_rng(seed), privacy=True)
            rep, ref = run_check(p, PRIVACY, options=opts), brute_check_privacy(p)
            assert rep.verdict == ref.status, seed
            if rep.verdict == ATTACK:
                assert replay(rep.trace, p), seed
                assert replay(ref.trace, p), seed
            agree[PRIVACY] += 1
        info["detail"] = f"escalation {agree[ESCALATION]}/200, privacy {agree[PRIVACY]}/200"


def test_7_performance():
    with criterion(7, "300 rules under 5 s; at least 10x over the bare baseline at 100 rules") \
            as info:
        pool = gen_pool(0)
        rows = run_benchmark([300], trials=3, engines=("optimized",), seed=7, pool=pool,
                             timeout=30)
        worst = max(r.millis for r in rows if r.phase == "total") / 1000
        assert all(r.verdict == SECURE for r in rows)
        assert worst < 5.0

        rows = run_benchmark([100], trials=2, seed=7, pool=pool, timeout=5)
        entry = summarize(rows)[0]
        assert entry["speedup"] >= 10
        bound = ">=" if entry["speedup_is_lower_bound"] else ""
        info["detail"] = (f"300 rules worst {worst:.2f} s; 100 rules speedup "
                          f"{bound}{entry['speedup']:.0f}x")


def test_8_mitigation():
    with criterion(8, "watchlists secure every positive instance; greedy is minimal on "
                      "the overlap fixture") as info:
        count = 0
        for mode in (ESCALATION, PRIVACY):
            for inst in accuracy_instances(1000, mode=mode, seed=2024):
                wl = mitigate(inst.model, mode=mode)
                assert wl.residual == SECURE, inst.spec
                assert run_check(apply_watchlist(inst.model, wl), mode).verdict == SECURE
                count += 1
        wl = mitigate(overlapping_chains())
        sets = [a.rules for a in wl.attacks]
        exact = exact_hitting_set(sets)
        assert len(sets) == 3
        assert len(wl.rules) == len(exact)
        assert wl.residual == SECURE
        info["detail"] = (f"{count} instances secured; overlap greedy {sorted(wl.rules)} "
                          f"vs exact {sorted(exact)}")


def test_9_product_invariants():
    with criterion(9, "diagonal invariance on 10000 states; initial pair count") as info:
        rng = np.random.default_rng(9)
        checked = models = 0
        while checked < 10_000:
            m = random_model(np.random.default_rng(int(rng.integers(2**32))), privacy=True)
            pm = build_product(m)
            private = [a for a in m.attributes if a.label == PRIVATE]
            assert pm.initial_pairs.shape[0] == np.prod([len(a.domain) for a in private])
            sizes = np.asarray(pm.base.sizes)
            states = rng.integers(0, sizes, size=(100, sizes.size))
            nxt = product_step(pm, np.stack([states, states], axis=1))
            assert np.array_equal(nxt[:, 0], nxt[:, 1])
            # the reference semantics agree on a few of them
            for row in states[:5]:
                s = pm.base.values_of(row)
                for left, right in iter_product_successors(s, s, m):
                    assert left == right
            checked += states.shape[0]
            models += 1
        info["detail"] = f"{checked} states over {models} models"
