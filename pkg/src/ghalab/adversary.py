"""The breakdown game, randomized trials, perturbations and the halting adapter.

The adversary answers every query as if the input were the branch-2 set
(v, 0 present), rounding to the nearest grid point so half of the 2**-n
tolerance is left unused. Once the algorithm has returned a net, a branch-1
set at step n_adv close enough to fit inside that spare half is chosen. Both
sets are consistent with everything the algorithm saw, yet their optimal
values at y = 0 are v/2 and 0, which are 2*kappa_eff apart. Whatever the net
outputs at 0, it misses one of them by at least kappa_eff.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, NamedTuple

from . import exact_arith as ea
from .exact_arith import Dyadic, round_to_dyadic
from .networks import AffineNet, build_rbf, constant_net
from .optimality import Verdict, accuracy_verdict, compute_certificate, violation_distance_sq
from .oracle import (ExactOracle, FunctionOracle, Oracle, QueryBudgetExceeded, QueryKey, QueryLog,
                     SealedOracle, true_coordinate, verify_contract)
from .problems import ProblemFamily, SplitMix64, TrainingSet, mix64
from .trainers import TrainingError, rbf_train

DEFAULT_BUDGET = 10 ** 6

# An algorithm under test maps (oracle, eps) to a net. It may raise
# TrainingError to decline; that counts like not halting.
Algorithm = Callable[[object, Fraction], object]


# --------------------------------------------------------------------------
# algorithms


def rbf_algorithm(family: ProblemFamily) -> Algorithm:
    """rbf_train with coincident readings merged, so it always returns a net."""
    def run(oracle, eps):
        return rbf_train(oracle, eps, merge_coincident=True).net
    return run


def zero_algorithm(family: ProblemFamily) -> Algorithm:
    def run(oracle, eps):
        return constant_net(ea.zeros(family.N), family.m)
    return run


def half_v_algorithm(family: ProblemFamily) -> Algorithm:
    def run(oracle, eps):
        return constant_net(ea.scale(Fraction(1, 2), family.v), family.m)
    return run


def lstsq_algorithm(family: ProblemFamily, precision: int = 16, ridge=Fraction(1, 1024)) -> Algorithm:
    """Ridge-regularized affine least squares fit y -> x on readings at a fixed precision."""
    ridge = ea.Q(ridge)

    def run(oracle, eps):
        rows, targets = [], []
        for k in range(1, oracle.ell + 1):
            y = oracle.read_vector(k, "y", precision)
            rows.append(y + (Fraction(1),))
            targets.append(oracle.read_vector(k, "x", precision))
        Z, X = tuple(rows), tuple(targets)
        gram = ea.mat_add(ea.matmul(ea.transpose(Z), Z), ea.mat_scale(ridge, ea.identity(len(Z[0]))))
        W_t = ea.solve_exact(gram, ea.matmul(ea.transpose(Z), X))  # (m+1) x N
        W = ea.transpose(W_t)
        m = oracle.m
        return AffineNet(tuple(row[:m] for row in W), tuple(row[m] for row in W))
    return run


ALGORITHMS = {
    "rbf": rbf_algorithm,
    "zero": zero_algorithm,
    "half_v": half_v_algorithm,
    "lstsq": lstsq_algorithm,
}


def forced_interpolant(family: ProblemFamily, T: TrainingSet):
    """RBF net through the optimal values of T's fibers (it attains zero violation on T)."""
    cert = compute_certificate(family.A, family.domain_of(T))
    return build_rbf([(f.center, y) for y, f in cert.fibers.items()])


def coin_flip_algorithm(family: ProblemFamily, n_star: int = 1) -> Callable[[int], Algorithm]:
    """Seeded algorithm that picks, by a fair coin, the optimal net of branch 1 at n_star or of branch 2.

    The two nets are built once; the returned factory maps a seed to an
    algorithm that ignores its oracle.
    """
    nets = (forced_interpolant(family, family.iota(1, n_star, strict=False)),
            forced_interpolant(family, family.iota(2)))

    def seeded(seed: int) -> Algorithm:
        pick = SplitMix64(mix64(0xC0FFEE, seed)).below(2)

        def run(oracle, eps):
            return nets[pick]
        return run
    return seeded


# --------------------------------------------------------------------------
# the game


def branch_two_answer(family: ProblemFamily) -> Callable[[QueryKey], Dyadic]:
    truth = family.iota(2)

    def answer(key: QueryKey) -> Dyadic:
        return round_to_dyadic(true_coordinate(truth, key), key.n)
    return answer


@dataclass
class GameTranscript:
    log: QueryLog
    n_adv: int | None
    declared_branch: int
    declared_n: int
    error_sq: Fraction | None
    kappa_eff_sq: Fraction
    nonhalting: bool = False
    verdict: Verdict | None = None
    consistent: dict = field(default_factory=dict)
    note: str = ""

    @property
    def defeated(self) -> bool:
        """The declared input is missed by at least kappa_eff/2 (or the run never halted)."""
        return self.nonhalting or (self.error_sq is not None and self.error_sq >= self.kappa_eff_sq / 4)

    def report(self, transcript_path: str | None = None) -> dict:
        return {
            "declared_branch": self.declared_branch,
            "n_adv": self.n_adv,
            "error_sq": None if self.error_sq is None else ea.rational_to_json(self.error_sq),
            "kappa_eff_sq": ea.rational_to_json(self.kappa_eff_sq),
            "nonhalting": self.nonhalting,
            "transcript": transcript_path,
        }


def run_breakdown_game(alg: Algorithm, family: ProblemFamily, eps=None,
                       budget: int = DEFAULT_BUDGET) -> GameTranscript:
    """Play the adversary against one algorithm.

    eps defaults to kappa_eff/4, safely below the breakdown level kappa_eff/2.
    """
    kappa_eff_sq = family.kappa_eff_sq
    if eps is None:
        lo, _ = ea.sqrt_bounds(kappa_eff_sq, bits=32)
        eps = lo / 4
    eps = ea.Q(eps)
    iota2 = family.iota(2)
    oracle = FunctionOracle(branch_two_answer(family), len(iota2), family.N, family.m, budget)
    try:
        net = alg(SealedOracle(oracle), eps)
    except (QueryBudgetExceeded, TrainingError) as exc:
        return GameTranscript(oracle.log, None, 2, 1, None, kappa_eff_sq, nonhalting=True,
                              consistent={"branch2": verify_contract(oracle.log, iota2)},
                              note=f"{type(exc).__name__}: {exc}")

    n_adv = oracle.log.max_precision // 2 + 1
    iota1 = family.iota(1, n_adv, strict=False)
    consistent = {
        "branch1": verify_contract(oracle.log, iota1),
        "branch2": verify_contract(oracle.log, iota2),
    }
    at_zero = net.eval(ea.zeros(family.m))
    a = ea.dist_sq(at_zero, ea.scale(Fraction(1, 2), family.v))  # against branch 2's forced v/2
    b = ea.norm_sq(at_zero)                                      # against branch 1's forced 0
    if b >= a:
        branch, n, err, T = 1, n_adv, b, iota1
    else:
        branch, n, err, T = 2, 1, a, iota2
    verdict = accuracy_verdict(net, family.A, T, eps, M1=family.domain_of(T))
    return GameTranscript(oracle.log, n_adv, branch, n, err, kappa_eff_sq, False, verdict, consistent)


def write_transcript(tr: GameTranscript, path) -> None:
    """JSONL: one header line with the report, then the query log."""
    with open(path, "w") as fh:
        header = tr.report()
        header["declared_n"] = tr.declared_n
        header["note"] = tr.note
        fh.write(json.dumps({"header": header}, sort_keys=True) + "\n")
        fh.write(tr.log.to_jsonl())


def read_transcript(path) -> tuple[dict, QueryLog]:
    with open(path) as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    header = json.loads(lines[0])["header"]
    return header, QueryLog.from_jsonl("\n".join(lines[1:]))


# --------------------------------------------------------------------------
# randomized trials


def run_randomized_trials(seeded_alg: Callable[[int], Algorithm], family: ProblemFamily, trials: int,
                          eps=None, n_adv: int | None = None) -> dict:
    """Per-input empirical failure frequencies at threshold kappa_eff/2.

    The two candidate inputs are the branch-2 set and the branch-1 set at
    n_adv; by default n_adv comes from a game against the seed-0 algorithm.
    """
    if trials <= 0:
        return {"trials": 0, "inputs": [], "max_frequency": None}
    threshold_sq = family.kappa_eff_sq / 4
    if n_adv is None:
        n_adv = run_breakdown_game(seeded_alg(0), family, eps).n_adv or 1
    eps = ea.Q(eps) if eps is not None else Fraction(1, 64)
    inputs = []
    for branch, n in ((1, n_adv), (2, 1)):
        T = family.iota(branch, n, strict=False)
        M1 = family.domain_of(T)
        cert = compute_certificate(family.A, M1)
        cache: dict = {}
        failures = 0
        for seed in range(trials):
            net = seeded_alg(seed)(SealedOracle(ExactOracle(T)), eps)
            if net not in cache:
                cache[net] = violation_distance_sq(net, family.A, M1, cert) >= threshold_sq
            failures += cache[net]
        inputs.append({"branch": branch, "n": n, "failures": failures, "frequency": failures / trials})
    return {
        "trials": trials,
        "threshold_sq": ea.rational_to_json(threshold_sq),
        "inputs": inputs,
        "max_frequency": max(i["frequency"] for i in inputs),
    }


# --------------------------------------------------------------------------
# perturbations


class Replacement(NamedTuple):
    T: TrainingSet
    k: int
    dist_sq: Fraction
    bound_sq: Fraction


def _moving_step(family: ProblemFamily, T: TrainingSet) -> int:
    base = set(family.iota(2).pairs)
    extra = [p for p in T if p not in base]
    if len(extra) != 1:
        raise ValueError("T is not a branch-1 set of this family")
    d = ea.sub(extra[0].x, family.v)
    k = 1
    while k <= 4096:
        if d == ea.scale(family.theta / Fraction(4) ** k, family.e):
            return k
        k += 1
    raise ValueError("T's extra element is not a moving element of this family")


def perturb_replace(T: TrainingSet, family: ProblemFamily, j: int) -> Replacement:
    """Swap the moving element of a branch-1 set at step k >= j for (v, 0)."""
    k = _moving_step(family, T)
    if T != family.iota(1, k, strict=False):
        raise ValueError("T is not a branch-1 set of this family")
    if k < j:
        raise ValueError(f"T sits at step {k} < j = {j}")
    old = family.moving_pair(k)
    new = family.kernel_pair()
    dist_sq = ea.dist_sq(old.x, new.x) + ea.dist_sq(old.y, new.y)
    return Replacement(family.iota(2), k, dist_sq, Fraction(2, 16 ** j))


def perturb_add(T: TrainingSet, family: ProblemFamily) -> TrainingSet:
    """Add (v, 0) to the constant-sequence set, giving ell + 1 elements."""
    if T != family.alpha():
        raise ValueError("T is not the constant-sequence set of this family")
    kp = family.kernel_pair()
    if kp in T.pairs:
        raise ValueError("(v, 0) is already in T")
    return T.union((kp,))


# --------------------------------------------------------------------------
# halting adapter


class HaltingAdapter(Oracle):
    """Answers describe the branch-1 set at step n until the program halts, then freeze.

    step_fn(n) reports whether the simulated program halted within n steps.
    If it never halts the stream is valid for the branch-2 set; if it halts
    at step n' the stream is valid for the branch-1 set at n'.
    """

    def __init__(self, step_fn: Callable[[int], bool], family: ProblemFamily, budget: int | None = None):
        super().__init__(family.ell, family.N, family.m, budget)
        self.family = family
        self._step = step_fn
        self._halt: int | None = None
        self._checked = 0

    def halted_at(self, horizon: int) -> int | None:
        while self._halt is None and self._checked < horizon:
            self._checked += 1
            if self._step(self._checked):
                self._halt = self._checked
        return self._halt if self._halt is not None and self._halt <= horizon else None

    def limit_set(self, horizon: int) -> TrainingSet:
        """The input the stream is valid for, given the program's behaviour up to horizon."""
        h = self.halted_at(horizon)
        return self.family.iota(2) if h is None else self.family.iota(1, h, strict=False)

    def _answer(self, key):
        h = self.halted_at(max(key.n, 1))
        step = h if h is not None else max(key.n, 1)
        T = self.family.iota(1, step, strict=False)
        return round_to_dyadic(true_coordinate(T, key), key.n)


def halting_adapter(step_fn: Callable[[int], bool], family: ProblemFamily) -> HaltingAdapter:
    return HaltingAdapter(step_fn, family)
