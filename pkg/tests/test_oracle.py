from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from ghalab.exact_arith import Dyadic
from ghalab.oracle import (ExactOracle, FunctionOracle, JitterOracle, OracleProtocolError, QueryBudgetExceeded,
                           QueryKey, QueryLog, SealedOracle, jitter_offset, replay, verify_contract)
from ghalab.problems import TrainingSet

T = TrainingSet((((F(1, 3), F(-2, 7)), (F(5, 11),)), ((0, 0), (0,)), ((F(1, 2), F(1, 2)), (F(-1, 9),))))


def test_exact_answers():
    o = ExactOracle(T)
    # rank 1 is the lexicographically smallest x, i.e. (0, 0)
    assert o.query(1, "x", 1, 5) == Dyadic(0, 5)
    assert o.query(2, "x", 1, 2) == Dyadic(1, 2)
    assert o.query(3, "y", 1, 3) == Dyadic(-1, 3)
    assert len(o.log) == 3 and o.log.max_precision == 5


@given(st.integers(0, 2 ** 32), st.integers(1, 3), st.sampled_from(["x", "y"]), st.integers(0, 30))
def test_jitter_within_contract(seed, k, axis, n):
    o = JitterOracle(T, seed)
    dim = 2 if axis == "x" else 1
    for i in range(1, dim + 1):
        o.query(k, axis, i, n)
    assert verify_contract(o.log, T)


def test_jitter_offsets_vary():
    offs = {jitter_offset(s, QueryKey(1, "x", 1, 4)) for s in range(50)}
    assert len(offs) > 40
    assert all(abs(x) <= F(1, 32) for x in offs)


def test_protocol_errors():
    o = ExactOracle(T)
    for key in [(0, "x", 1, 1), (4, "x", 1, 1), (1, "z", 1, 1), (1, "y", 2, 1), (1, "x", 1, -1)]:
        with pytest.raises(OracleProtocolError):
            o.query(*key)


def test_budget():
    o = ExactOracle(T, budget=2)
    o.query(1, "x", 1, 1)
    o.query(1, "x", 2, 1)
    with pytest.raises(QueryBudgetExceeded):
        o.query(1, "y", 1, 1)


def test_log_roundtrip_and_replay(tmp_path):
    o = JitterOracle(T, 7)
    first = [o.read_vector(k, "x", 9) for k in (1, 2, 3)]
    path = tmp_path / "log.jsonl"
    o.log.write(path)
    log = QueryLog.read(path)
    assert log.entries == o.log.entries
    r = replay(log, 3, 2, 1)
    assert [r.read_vector(k, "x", 9) for k in (1, 2, 3)] == first
    with pytest.raises(OracleProtocolError):
        r.query(1, "x", 1, 10)


def test_inconsistent_log_rejected():
    log = QueryLog()
    log.append(QueryKey(1, "x", 1, 2), Dyadic(1, 2))
    log.append(QueryKey(1, "x", 1, 2), Dyadic(2, 2))
    with pytest.raises(OracleProtocolError):
        replay(log)


def test_verify_contract_catches_bad_answers():
    o = FunctionOracle(lambda key: Dyadic(3, key.n), 3, 2, 1)
    o.query(2, "x", 1, 2)  # 3/4 against a true 1/3
    assert not verify_contract(o.log, T)


def test_sealed_oracle():
    s = SealedOracle(ExactOracle(T))
    assert s.ell == 3 and s.N == 2 and s.m == 1
    s.query(1, "y", 1, 3)
    with pytest.raises(AttributeError):
        s._truth
    with pytest.raises(AttributeError):
        s.budget = 3
    assert s.violations == 1
