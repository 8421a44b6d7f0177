from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from ghalab import exact_arith as ea
from ghalab.adversary import (ALGORITHMS, coin_flip_algorithm, forced_interpolant, half_v_algorithm,
                              halting_adapter, perturb_add, perturb_replace, read_transcript, rbf_algorithm,
                              run_breakdown_game, run_randomized_trials, write_transcript, zero_algorithm)
from ghalab.networks import constant_net
from ghalab.optimality import compute_certificate, violation_distance_sq
from ghalab.oracle import ExactOracle, verify_contract
from ghalab.trainers import rbf_train

coord = st.fractions(min_value=-2, max_value=2, max_denominator=1 << 12)


def test_half_v_declared_branch_one(thm4_family):
    fam = thm4_family
    tr = run_breakdown_game(half_v_algorithm(fam), fam)
    assert tr.declared_branch == 1 and tr.error_sq == fam.kappa_eff_sq
    assert tr.defeated and not tr.verdict.passed


def test_zero_declared_branch_two(thm4_family):
    fam = thm4_family
    tr = run_breakdown_game(zero_algorithm(fam), fam)
    assert tr.declared_branch == 2 and tr.error_sq == fam.kappa_eff_sq


def test_tie_goes_to_branch_one(thm4_family):
    fam = thm4_family
    quarter = constant_net(ea.scale(F(1, 4), fam.v), fam.m)
    tr = run_breakdown_game(lambda oracle, eps: quarter, fam)
    assert tr.declared_branch == 1 and tr.error_sq == fam.kappa_eff_sq / 4
    assert tr.defeated


@pytest.mark.parametrize("key", sorted(ALGORITHMS))
def test_every_algorithm_is_defeated_consistently(thm4_family, key):
    fam = thm4_family
    tr = run_breakdown_game(ALGORITHMS[key](fam), fam)
    assert tr.defeated and not tr.nonhalting
    assert tr.consistent == {"branch1": True, "branch2": True}
    assert verify_contract(tr.log, fam.iota(1, tr.n_adv, strict=False))


def test_rbf_game_error(thm4_family):
    fam = thm4_family
    tr = run_breakdown_game(rbf_algorithm(fam), fam)
    assert tr.error_sq == F(9, 64) and tr.n_adv == tr.log.max_precision // 2 + 1


def test_budget_exhaustion_is_nonhalting(thm4_family):
    fam = thm4_family
    tr = run_breakdown_game(rbf_algorithm(fam), fam, budget=5)
    assert tr.nonhalting and tr.defeated and tr.error_sq is None
    assert tr.report()["nonhalting"] is True


def test_transcript_roundtrip(tmp_path, thm4_family):
    tr = run_breakdown_game(zero_algorithm(thm4_family), thm4_family)
    path = tmp_path / "game.jsonl"
    write_transcript(tr, path)
    header, log = read_transcript(path)
    assert header["declared_branch"] == 2 and log.entries == tr.log.entries


@settings(max_examples=300)
@given(st.tuples(coord, coord))
def test_every_output_is_defeated(out):
    # whatever a net outputs at 0, it is at least kappa_eff from 0 or from v/2
    from ghalab.problems import build_family
    fam = build_family([[1, 0]], F(3, 8), 4, "thm4", seed=3)
    net = constant_net(out, fam.m)
    tr = run_breakdown_game(lambda oracle, eps: net, fam)
    assert tr.error_sq >= fam.kappa_eff_sq / 4


# --------------------------------------------------------------------------
# randomized trials


def test_deterministic_algorithm_frequencies(thm4_family):
    fam = thm4_family
    # the optimal net for branch 2 outputs v/2 at 0, which misses branch 1
    net = forced_interpolant(fam, fam.iota(2))
    rep = run_randomized_trials(lambda seed: (lambda oracle, eps: net), fam, 20)
    freqs = [i["frequency"] for i in rep["inputs"]]
    assert sorted(freqs) == [0.0, 1.0] and rep["max_frequency"] == 1.0


def test_zero_trials_is_empty(thm4_family):
    rep = run_randomized_trials(lambda seed: zero_algorithm(thm4_family), thm4_family, 0)
    assert rep == {"trials": 0, "inputs": [], "max_frequency": None}


def test_coin_flip_frequencies(thm4_family):
    rep = run_randomized_trials(coin_flip_algorithm(thm4_family), thm4_family, 400)
    for entry in rep["inputs"]:
        assert abs(entry["frequency"] - 0.5) <= 5 * 0.025


def test_forced_interpolant_is_optimal(thm4_family):
    fam = thm4_family
    T = fam.iota(2)
    net = forced_interpolant(fam, T)
    assert violation_distance_sq(net, fam.A, fam.domain_of(T)) == 0


# --------------------------------------------------------------------------
# perturbations


@pytest.mark.parametrize("j", [1, 2, 3])
def test_perturb_replace(thm4_family, j):
    fam = thm4_family
    T = fam.iota(1, j + 1)
    rep = perturb_replace(T, fam, j)
    assert rep.k == j + 1 and rep.T == fam.iota(2)
    # moving x is theta/4^k away from v and its y is theta/4^k times Ae
    assert rep.dist_sq == 2 * F(1, 16 ** (j + 1)) <= rep.bound_sq
    net = rbf_train(ExactOracle(T), F(1, 64)).net
    M1 = fam.domain_of(rep.T)
    assert violation_distance_sq(net, fam.A, M1, compute_certificate(fam.A, M1)) >= fam.kappa_eff_sq / 4


def test_perturb_replace_errors(thm4_family):
    fam = thm4_family
    with pytest.raises(ValueError):
        perturb_replace(fam.iota(1, 2), fam, 3)
    with pytest.raises(ValueError):
        perturb_replace(fam.iota(2), fam, 1)


def test_perturb_add(thm4_family):
    fam = thm4_family
    alpha = fam.alpha()
    grown = perturb_add(alpha, fam)
    ext = fam.extended()
    assert len(grown) == fam.ell + 1 and grown == ext.iota(2)
    net = rbf_train(ExactOracle(alpha), F(1, 64)).net
    assert violation_distance_sq(net, ext.A, ext.domain_of(grown)) >= ext.kappa_eff_sq / 4
    with pytest.raises(ValueError):
        perturb_add(grown, fam)
    with pytest.raises(ValueError):
        perturb_add(fam.iota(2), fam)


# --------------------------------------------------------------------------
# halting adapter


def test_adapter_for_program_that_never_halts(thm4_family):
    fam = thm4_family
    o = halting_adapter(lambda n: False, fam)
    for k in range(1, fam.ell + 1):
        o.read_vector(k, "x", 12)
        o.read_vector(k, "y", 12)
    assert o.limit_set(40) == fam.iota(2)
    assert verify_contract(o.log, fam.iota(2))


def test_adapter_for_program_that_halts(thm4_family):
    fam = thm4_family
    o = halting_adapter(lambda n: n >= 3, fam)
    for n in (1, 2, 5, 9):
        for k in range(1, fam.ell + 1):
            o.read_vector(k, "x", n)
    assert o.halted_at(100) == 3 and o.limit_set(100) == fam.iota(1, 3, strict=False)
    assert verify_contract(o.log, fam.iota(1, 3, strict=False))
