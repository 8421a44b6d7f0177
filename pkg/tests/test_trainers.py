from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from ghalab import exact_arith as ea
from ghalab.networks import AffineNet, build_rbf
from ghalab.optimality import is_eps_accurate, jacobian_bound_verdict, violation_distance_sq
from ghalab.oracle import ExactOracle, JitterOracle, SealedOracle, replay
from ghalab.problems import TrainingSet, build_family
from ghalab.trainers import (ContractError, FamilyShapeError, PrecisionCertificate, TrainingError,
                             blowup_witness, identify_basis_pairs, pinv_train, rbf_train, rbf_working_precision,
                             run_trainer, sigma_min_lower_bound)


def working_precision_oracle(j, k_R, m, ell):
    first = F(1, 7) * F(1, 4) * F(1, 2 * m) * F(1, ell ** 2) * F(1, 2 ** (2 * k_R)) * F(1, 2 ** j)
    second = F(1, 7) * F(1, ell) * F(1, 2 ** k_R) * F(1, 2 ** j)
    bound = min(first, second)
    r = 0
    while F(1, 2 ** r) > bound:
        r += 1
    return r


# --------------------------------------------------------------------------
# eigenvalue probe and precision formula


def test_sigma_min_single_point():
    k_R, log = sigma_min_lower_bound(ExactOracle(TrainingSet([((0,), (0,))])))
    assert k_R == 2 and len(log) > 0


def test_sigma_min_two_points():
    # R = [[1, 1/2], [1/2, 1]] has eigenvalues 3/2 and 1/2
    k_R, _ = sigma_min_lower_bound(ExactOracle(TrainingSet([((0,), (0,)), ((1,), (1,))])))
    assert F(1, 2 ** k_R) <= F(1, 2)
    assert k_R == 3


def test_sigma_min_gives_up_on_coincident_centers():
    o = ExactOracle(TrainingSet([((0,), (0,)), ((1,), (0,))]))
    with pytest.raises(TrainingError):
        sigma_min_lower_bound(o, max_rounds=8)


def test_working_precision_example():
    # both branches: 1/7168 and 1/112, so r = 13
    assert rbf_working_precision(1, 2, 1, 2) == 13 == working_precision_oracle(1, 2, 1, 2)


@given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 5), st.integers(1, 8))
def test_working_precision_formula(j, k_R, m, ell):
    r = rbf_working_precision(j, k_R, m, ell)
    assert r == working_precision_oracle(j, k_R, m, ell)
    assert rbf_working_precision(j + 1, k_R, m, ell) == r + 1
    assert rbf_working_precision(j, k_R, m, 2 * ell) >= r + 1


# --------------------------------------------------------------------------
# rbf_train


def test_rbf_example(thm4_family):
    fam = thm4_family
    T = fam.iota(1, 1)
    out = rbf_train(ExactOracle(T), F(1, 8))
    assert violation_distance_sq(out.net, fam.A, fam.domain_of(T)) <= F(1, 64)
    assert out.certificate.verify()
    assert out.queries == len(out.log) and out.max_precision >= out.certificate.r


def test_rbf_single_point():
    T = TrainingSet([((F(1, 3), 0), (F(1, 5),))])
    out = rbf_train(ExactOracle(T), 1)
    assert ea.dist_sq(out.net.eval((F(1, 5),)), (F(1, 3), 0)) <= 1


@settings(max_examples=100)
@given(st.integers(0, 2 ** 40))
def test_rbf_uniform_over_jitter_seeds(seed):
    fam = build_family([[1, 0]], F(3, 8), 4, "thm4", seed=3)
    T = fam.iota(1, 2)
    out = rbf_train(JitterOracle(T, seed), F(1, 16))
    assert violation_distance_sq(out.net, fam.A, fam.domain_of(T)) <= F(1, 256)
    assert out.certificate.verify()


def test_rbf_through_sealed_oracle(thm4_family):
    T = thm4_family.iota(1, 2)
    sealed = SealedOracle(ExactOracle(T))
    rbf_train(sealed, F(1, 4))
    assert sealed.violations == 0


def test_rbf_replay_is_bit_identical(thm4_family):
    T = thm4_family.iota(1, 3)
    first = rbf_train(JitterOracle(T, 11), F(1, 32))
    again = rbf_train(replay(first.log, len(T), T.N, T.m), F(1, 32))
    assert again.net == first.net


def test_rbf_merges_coincident_readings(thm4_family):
    fam = thm4_family
    out = rbf_train(ExactOracle(fam.iota(2)), F(1, 8), max_rounds=12, merge_coincident=True)
    assert out.certificate.notes["merged"]
    # the merged center carries the mean of 0 and v
    assert out.net.eval((0,)) == ea.scale(F(1, 2), fam.v)
    with pytest.raises(TrainingError):
        rbf_train(ExactOracle(fam.iota(2)), F(1, 8), max_rounds=12)


def test_certificate_roundtrip():
    cert = PrecisionCertificate(3, 5, 20)
    cert.record("a", F(1, 3), "<=", F(1, 2))
    back = PrecisionCertificate.from_json(cert.to_json())
    assert back.ledger == cert.ledger and back.verify()
    cert.record("broken", 2, "<", 1)
    assert not cert.verify()


# --------------------------------------------------------------------------
# pinv_train


def test_identify_basis_pairs(thm5_family):
    fam = thm5_family
    T = fam.iota(1, 1)
    ids = identify_basis_pairs(ExactOracle(T), fam.N, fam.epsilon1)
    assert T[ids[1] - 1].x == (F(1, 8), 0) and T[ids[2] - 1].x == (0, F(1, 8))


def test_identify_rejects_missing_pairs(thm4_family):
    with pytest.raises(FamilyShapeError):
        identify_basis_pairs(ExactOracle(thm4_family.iota(1, 1)), 2, F(1, 8))


def test_pinv_example(thm5_family):
    fam = thm5_family
    eps = F(1, 4) + F(1, 100)
    eps2 = (eps - 2 * fam.epsilon1) / 2
    for b, n, T in fam.members():
        out = pinv_train(ExactOracle(T), eps, 1, 1, epsilon1=fam.epsilon1, v=fam.v)
        assert isinstance(out.net, AffineNet) and out.certificate.verify()
        assert is_eps_accurate(out.net, fam, T, eps).passed
        assert jacobian_bound_verdict(out.net, fam.union_M2(), (1 + eps2) ** 2).passed
    # at y = 0 the net returns v/2, which is 2 epsilon1 from 0
    assert ea.norm_sq(out.net.eval((0,))) == F(1, 16)


def test_pinv_regime_boundary(thm5_family):
    fam = thm5_family
    with pytest.raises(ContractError):
        pinv_train(ExactOracle(fam.iota(2)), F(1, 4), 1, 1, epsilon1=fam.epsilon1, v=fam.v)


def test_pinv_wide_operator():
    fam = build_family([[F(3, 5), F(4, 5), 0], [0, 0, 1]], F(1, 8), 6, "thm5", seed=1)
    eps = F(1, 4) + F(1, 64)
    eps2 = (eps - 2 * fam.epsilon1) / 2
    for b, n, T in fam.members():
        out = run_trainer("pinv", ExactOracle(T), eps, fam)
        assert is_eps_accurate(out.net, fam, T, eps).passed
        assert ea.frobenius_sq(out.net.M) <= fam.m * (1 / fam.beta_min + eps2) ** 2


# --------------------------------------------------------------------------
# blow-up witness


def test_blowup_of_exact_interpolant(thm4_family):
    fam = thm4_family
    for n in range(1, 5):
        T = fam.iota(1, n)
        net = build_rbf([(p.x, p.y) for p in T])
        q, threshold = blowup_witness(net, fam, n, fam.epsilon1 / 2)
        # theta = 1 and ||Ae|| = 1: quotient^2 = 16^n ||v||^2 + 1
        assert q == 16 ** n * F(9, 16) + 1
        assert threshold == (fam.epsilon1 * 4 ** n) ** 2


def test_no_blowup_for_affine_net(thm5_family):
    fam = thm5_family
    eps = F(1, 4) + F(1, 32)
    out = pinv_train(ExactOracle(fam.iota(1, 1)), eps, 1, 1, epsilon1=fam.epsilon1, v=fam.v)
    eps2 = (eps - 2 * fam.epsilon1) / 2
    for n in range(0, 7):
        q, _ = blowup_witness(out.net, fam, n, fam.epsilon1 / 2)
        assert q <= (1 + eps2) ** 2


def test_unknown_trainer():
    with pytest.raises(ValueError):
        run_trainer("sgd", None, 1)
