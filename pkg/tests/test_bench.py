import numpy as np
import pytest

from chaincheck.bench import (
    CSV_COLUMNS, GenSpec, gen_chain, gen_pool, gen_privacy_chain, rows_to_csv, run_accuracy,
    run_benchmark, sample_corpus, spawn_seeds, summarize,
)
from chaincheck.engine import ATTACK, SECURE, ConfigError
from chaincheck.model import ModelError, OTHER, PRIVATE, PUBLIC, parse_model, serialize_model
from chaincheck.oracle import brute_check_escalation, brute_check_privacy
from chaincheck.pipeline import PRIVACY, run_check
from chaincheck.pruning import prune_for_escalation, prune_for_privacy


def test_two_rule_chain():
    inst = gen_chain(GenSpec(chain_length=2, distractors=0, seed=11))
    assert len(inst.model.rules) == 2 and inst.expected == ATTACK
    assert run_check(inst.model).verdict == ATTACK
    assert inst.model.attribute("a0").vulnerable


def test_negative_chain_is_secure():
    inst = gen_chain(GenSpec(chain_length=3, negative=True, seed=5))
    assert len(inst.model.rules) == 3 and inst.expected == SECURE
    assert run_check(inst.model).verdict == SECURE


def test_privacy_chains():
    pos = gen_privacy_chain(GenSpec(chain_length=2, seed=2))
    neg = gen_privacy_chain(GenSpec(chain_length=2, negative=True, seed=2))
    assert run_check(pos.model, PRIVACY).verdict == ATTACK
    assert run_check(neg.model, PRIVACY).verdict == SECURE
    labels = pos.model.labels
    assert labels["a0"] == PRIVATE and labels["a2"] == PUBLIC


def test_all_other_labels_fail():
    inst = gen_privacy_chain(GenSpec(chain_length=2, seed=2))
    with pytest.raises(ConfigError):
        run_check(inst.model.with_labels({n: OTHER for n in inst.model.names}), PRIVACY)


def test_generation_is_deterministic():
    a = gen_chain(GenSpec(chain_length=5, seed=7)).to_document()
    b = gen_chain(GenSpec(chain_length=5, seed=7)).to_document()
    assert a == b
    assert a != gen_chain(GenSpec(chain_length=5, seed=8)).to_document()
    assert parse_model(a).rules


@pytest.mark.parametrize("bad", [dict(chain_length=1), dict(chain_length=9),
                                 dict(distractors=-1), dict(domain_size=1)])
def test_bad_specs(bad):
    with pytest.raises(ValueError):
        GenSpec(**bad)


def test_pool_too_small():
    with pytest.raises(ModelError):
        gen_chain(GenSpec(chain_length=4, pool_size=5, distractors=3))


@pytest.mark.parametrize("seed", range(6))
def test_generator_soundness_against_oracle(seed):
    """Ground truth holds on the policy-relevant part, where brute force is feasible."""
    for negative in (False, True):
        spec = GenSpec(chain_length=2 + seed % 4, negative=negative, seed=seed)
        inst = gen_chain(spec)
        reduced = prune_for_escalation(inst.model, inst.model.policies[0]).model
        assert brute_check_escalation(reduced).status == inst.expected
        pinst = gen_privacy_chain(spec)
        pred = prune_for_privacy(pinst.model)
        verdict = SECURE if pred.trivially_secure else brute_check_privacy(pred.model).status
        assert verdict == pinst.expected


@pytest.mark.parametrize("seed", range(4))
def test_distractors_cannot_replace_the_chain(seed):
    inst = gen_chain(GenSpec(chain_length=3, seed=seed))
    for rid in inst.chain:
        assert run_check(inst.model.without_rules([rid])).verdict == SECURE


def test_small_accuracy_run():
    for mode in ("escalation", PRIVACY):
        for negative in (False, True):
            res = run_accuracy(10, mode=mode, negative=negative, seed=3)
            assert res["correct"] == 10, res["failures"]


def test_seeds_are_spawned_deterministically():
    assert spawn_seeds(1, 4) == spawn_seeds(1, 4)
    assert len(set(spawn_seeds(1, 4))) == 4


@pytest.fixture(scope="module")
def pool():
    return gen_pool(0)


def test_pool_shape(pool):
    assert len(pool.attributes) == 190 and len(pool.rules) == 1000


def test_sample_corpus(pool):
    assert sample_corpus(pool, 0, 1).rules == ()
    full = sample_corpus(pool, len(pool.rules), 1)
    assert full.rules == pool.rules
    a, b = sample_corpus(pool, 100, 9), sample_corpus(pool, 100, 9)
    assert serialize_model(a) == serialize_model(b)
    assert len(a.rules) == 100
    with pytest.raises(ValueError):
        sample_corpus(pool, 1001, 0)


def test_benchmark_rows_agree(pool):
    rows = run_benchmark([10], trials=3, seed=0, pool=pool, timeout=20)
    totals = [r for r in rows if r.phase == "total"]
    assert len({(r.trial, r.engine) for r in totals}) == 6
    by_trial = {}
    for r in totals:
        by_trial.setdefault(r.trial, set()).add(r.verdict)
    assert all(len(v) == 1 for v in by_trial.values())
    csv_text = rows_to_csv(rows)
    assert csv_text.splitlines()[0] == ",".join(CSV_COLUMNS)
    summary = summarize(rows)
    assert summary[0]["size"] == 10 and "speedup" in summary[0]


def test_baseline_two_rules(pool):
    rows = run_benchmark([2], trials=1, engines=("baseline",), pool=pool)
    total = next(r for r in rows if r.phase == "total")
    assert total.millis > 0
