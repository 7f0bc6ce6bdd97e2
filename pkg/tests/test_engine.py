from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chaincheck.bench import random_model
from chaincheck.engine import (
    ATTACK, SECURE, UNKNOWN, ConfigError, build_product, check_escalation, check_privacy,
    product_step,
)
from chaincheck.model import (
    ACTUATOR, OTHER, PRIVATE, PUBLIC, SENSOR, Atom, AttributeDecl, EnumDomain, Escalation,
    IntRange, ModelSpec, Rule,
)
from chaincheck.oracle import brute_check_escalation, brute_check_privacy
from chaincheck.semantics import EngineConfig
from chaincheck.trace import replay

def in_order(seq, wanted):
    it = iter(seq)
    return all(w in it for w in wanted)


ONOFF = EnumDomain(("ON", "OFF"))
TF = EnumDomain(("TRUE", "FALSE"))


def test_home_attack_trace(home):
    v = check_escalation(home)
    assert v.status == ATTACK
    assert v.trace.transitions == 3
    assert in_order(v.trace.fired_sequence(), ["R1", "R2", "R5"])
    assert replay(v.trace, home)
    last = v.trace.states[-1]
    assert last["lock"] == "UNLOCKED" and last["camera"] == "OFF"


def test_closed_home_is_secure(home):
    def pin(a):
        if a.window is None:
            return a
        win = IntRange(a.initial, a.initial) if isinstance(a.domain, IntRange) \
            else EnumDomain((a.initial,))
        return replace(a, window=win)

    closed = home.with_vulnerable([])
    closed = closed.replace(attributes=tuple(pin(a) for a in closed.attributes))
    assert check_escalation(closed).status == SECURE
    assert brute_check_escalation(closed).status == SECURE


def test_trivial_secure_visits_one_state():
    m = ModelSpec((AttributeDecl("x", ONOFF, ACTUATOR, initial="OFF"),), (),
                  (Escalation(Atom("x", "=", "ON")),))
    v = check_escalation(m)
    assert v.status == SECURE and v.stats["nodes"] == 1


def test_depth_zero_violation():
    m = ModelSpec((AttributeDecl("x", ONOFF, ACTUATOR, initial="ON"),), (),
                  (Escalation(Atom("x", "=", "ON")),))
    v = check_escalation(m)
    assert v.status == ATTACK and v.trace.transitions == 0


def test_state_budget_gives_unknown(home):
    v = check_escalation(home, config=EngineConfig(max_states=3))
    assert v.status == UNKNOWN and v.reason


def _fig4():
    attrs = (AttributeDecl("occupancy", TF, SENSOR, label=PRIVATE, initial="FALSE",
                           window=EnumDomain(("FALSE",))),
             AttributeDecl("light", ONOFF, ACTUATOR, label=PUBLIC, initial="OFF"))
    rules = (Rule("r1", Atom("occupancy", "=", "TRUE"), (("light", "ON"),)),)
    return ModelSpec(attrs, rules)


def test_fig4_product():
    pm = build_product(_fig4())
    assert pm.initial_pairs.shape[0] == 2
    # left copy unoccupied, right copy ranges over both readings
    assert sorted(pm.initial_pairs[:, 1, 0].tolist()) == [0, 1]
    assert check_privacy(_fig4()).status == ATTACK


def test_all_public_gives_config_error(home):
    with pytest.raises(ConfigError):
        build_product(home.with_labels({n: PUBLIC for n in home.names}))


def test_home_privacy(home_privacy):
    from chaincheck.pruning import prune_for_privacy

    reduced = prune_for_privacy(home_privacy).model
    v = check_privacy(reduced)
    assert v.status == ATTACK
    assert v.stats["initial_pairs"] == 2
    assert v.trace.transitions == 2
    assert replay(v.trace, reduced)
    assert brute_check_privacy(reduced).trace.transitions == 2


def test_no_private_reader_is_secure():
    attrs = (AttributeDecl("p", ONOFF, ACTUATOR, label=PRIVATE, initial="OFF"),
             AttributeDecl("q", ONOFF, ACTUATOR, label=PUBLIC, initial="OFF"),
             AttributeDecl("s", ONOFF, SENSOR, initial="OFF", window=ONOFF))
    rules = (Rule("r", Atom("s", "=", "ON"), (("q", "ON"),)),)
    m = ModelSpec(attrs, rules)
    assert check_privacy(m).status == SECURE
    assert brute_check_privacy(m).status == SECURE


def test_equality_chain_leaks_at_depth_two():
    attrs = (AttributeDecl("p", ONOFF, ACTUATOR, label=PRIVATE, initial="OFF"),
             AttributeDecl("m", ONOFF, ACTUATOR, initial="OFF"),
             AttributeDecl("q", ONOFF, ACTUATOR, label=PUBLIC, initial="OFF"))
    rules = (Rule("r1", Atom("p", "=", "ON"), (("m", "ON"),)),
             Rule("r2", Atom("m", "=", "ON"), (("q", "ON"),)))
    v = check_privacy(ModelSpec(attrs, rules))
    assert v.status == ATTACK and v.trace.transitions == 2


def _random(seed, privacy=False):
    return random_model(np.random.default_rng(seed), privacy=privacy)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_escalation_matches_oracle(seed):
    m = _random(seed)
    fast, slow = check_escalation(m), brute_check_escalation(m)
    assert fast.status == slow.status
    if fast.status == ATTACK:
        assert fast.trace.transitions == slow.trace.transitions
        assert replay(fast.trace, m)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_privacy_matches_oracle(seed):
    m = _random(seed, privacy=True)
    fast, slow = check_privacy(m), brute_check_privacy(m)
    assert fast.status == slow.status
    if fast.status == ATTACK:
        assert fast.trace.transitions == slow.trace.transitions
        assert replay(fast.trace, m)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_diagonal_is_invariant(seed):
    m = _random(seed, privacy=True)
    pm = build_product(m)
    rng = np.random.default_rng(seed)
    sizes = np.array(pm.base.sizes)
    states = rng.integers(0, sizes, size=(8, sizes.size))
    diag = np.stack([states, states], axis=1)
    nxt = product_step(pm, diag)
    assert np.array_equal(nxt[:, 0], nxt[:, 1])


def test_initial_pairs_count():
    for seed in range(20):
        m = _random(seed, privacy=True)
        expected = np.prod([len(a.domain) for a in m.attributes if a.label == PRIVATE])
        assert build_product(m).initial_pairs.shape[0] == expected
