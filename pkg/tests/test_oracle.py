from chaincheck.engine import ATTACK, SECURE, UNKNOWN
from chaincheck.model import (
    ACTUATOR, SENSOR, Atom, AttributeDecl, EnumDomain, Escalation, IntRange, ModelSpec,
)
from chaincheck.oracle import brute_check_escalation, brute_check_privacy
from chaincheck.pruning import prune_for_escalation, prune_for_privacy
from chaincheck.trace import replay


def test_pruned_home_attack(home):
    reduced = prune_for_escalation(home, home.policies[0]).model
    v = brute_check_escalation(reduced)
    assert v.status == ATTACK
    assert v.trace.transitions == 3
    assert replay(v.trace, reduced)


def test_single_attribute_secure():
    m = ModelSpec((AttributeDecl("x", EnumDomain(("A", "B")), ACTUATOR, initial="A"),), (),
                  (Escalation(Atom("x", "=", "B")),))
    v = brute_check_escalation(m)
    assert v.status == SECURE and v.stats["states"] == 1


def test_cap_forces_unknown():
    attrs = tuple(AttributeDecl(f"s{i}", IntRange(0, 3), SENSOR, initial=0,
                                window=IntRange(0, 3)) for i in range(10))
    # 4**10 = 2**20 states, none of them violating
    m = ModelSpec(attrs, (), (Escalation(Atom("s0", ">", 3)),))
    v = brute_check_escalation(m, cap=10)
    assert v.status == UNKNOWN
    assert "cap" in v.reason


def test_privacy_fixture(home_privacy):
    reduced = prune_for_privacy(home_privacy).model
    v = brute_check_privacy(reduced)
    assert v.status == ATTACK
    left, right = v.trace.pairs[-1]
    assert left["light2"] != right["light2"]
    assert replay(v.trace, reduced)
