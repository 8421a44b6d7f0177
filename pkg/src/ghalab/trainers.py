"""Certified trainers that see the data only through an oracle.

rbf_train builds the RBF interpolant from dyadic readings. It first finds a
power of two below the smallest eigenvalue of the interpolation matrix, then
picks a reading precision large enough that the interpolant of the readings
stays within 2**-j of the exact one.

pinv_train builds the affine map y -> A_r^+ y + v/2 from readings of the
basis pairs (epsilon1*e_i, A epsilon1 e_i). Its accuracy stops at 2*epsilon1
but its Jacobian stays bounded by 1/beta_min + eps2.

blowup_witness turns two evaluations of a net into a certified lower bound on
its Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

from . import exact_arith as ea
from .exact_arith import SingularMatrixError, ceil_log4, min_exponent
from .networks import AffineNet, build_rbf, rbf_system
from .oracle import QueryLog

HALF = Fraction(1, 2)


class TrainingError(RuntimeError):
    """The trainer could not finish, e.g. coincident centers or an iteration cap."""


class ContractError(ValueError):
    """The requested accuracy is outside the trainer's proven regime."""


class FamilyShapeError(ValueError):
    pass


def pow2(r: int) -> Fraction:
    return Fraction(1, 1 << r)


@dataclass
class PrecisionCertificate:
    """Exact inequalities the run relied on, each stored as (name, lhs, rel, rhs)."""

    j: int
    k_R: int | None
    r: int
    ledger: list = field(default_factory=list)
    notes: dict = field(default_factory=dict)

    def record(self, name: str, lhs, rel: str, rhs) -> None:
        self.ledger.append((name, ea.Q(lhs), rel, ea.Q(rhs)))

    def verify(self) -> bool:
        for _, lhs, rel, rhs in self.ledger:
            if rel == "<=" and not lhs <= rhs:
                return False
            if rel == "<" and not lhs < rhs:
                return False
        return True

    def to_json(self) -> dict:
        return {
            "j": self.j, "k_R": self.k_R, "r": self.r,
            "ledger": [
                {"name": n, "lhs": ea.rational_to_json(a), "rel": rel, "rhs": ea.rational_to_json(b)}
                for n, a, rel, b in self.ledger
            ],
            "notes": self.notes,
        }

    @classmethod
    def from_json(cls, obj) -> "PrecisionCertificate":
        cert = cls(obj["j"], obj["k_R"], obj["r"], notes=dict(obj.get("notes", {})))
        for e in obj["ledger"]:
            cert.record(e["name"], ea.rational_from_json(e["lhs"]), e["rel"], ea.rational_from_json(e["rhs"]))
        return cert


@dataclass
class TrainingOutcome:
    net: object
    certificate: PrecisionCertificate
    log: QueryLog
    trainer: str = ""

    @property
    def queries(self) -> int:
        return len(self.log)

    @property
    def max_precision(self) -> int:
        return self.log.max_precision

    def to_json(self) -> dict:
        return {
            "trainer": self.trainer,
            "net": self.net.to_json(),
            "certificate": self.certificate.to_json(),
            "queries": self.queries,
            "max_precision": self.max_precision,
        }


# --------------------------------------------------------------------------
# reading helpers


def read_vector(oracle, k: int, axis: str, r: int) -> tuple:
    """One element's x or y with l2 error <= 2**-r (coordinates read at r + ceil(log2 sqrt(dim)))."""
    dim = oracle.N if axis == "x" else oracle.m
    return oracle.read_vector(k, axis, r + ceil_log4(dim))


def _probe_bound(j: int, m: int, ell: int) -> Fraction:
    return HALF * Fraction(1, 2 * m) * Fraction(1, ell) * pow2(j + 1)


def _kr_search(oracle, groups: list[list[int]], max_rounds: int):
    """Run the eigenvalue probe on one representative per group.

    Returns (k_R, j, r, readings); raises TrainingError after max_rounds.
    """
    m, ell = oracle.m, len(groups)
    readings = None
    for j in range(1, max_rounds + 1):
        r = min_exponent(_probe_bound(j, m, ell))
        readings = [read_vector(oracle, g[0], "y", r) for g in groups]
        R_r = rbf_system(readings)
        if ea.ldlt_posdef_check(ea.shift_diag(R_r, pow2(j))):
            return j + 1, j, r, readings
    raise TrainingError(
        f"no eigenvalue bound after {max_rounds} rounds; the centers may coincide", readings)


def sigma_min_lower_bound(oracle, y_count: int | None = None, m: int | None = None,
                          max_rounds: int = 64) -> tuple[int, QueryLog]:
    """k_R with 2**-k_R below every eigenvalue of the interpolation matrix of the y's.

    The probe at round j reads the y's with l2 error h = 2**-r and accepts when
    R_r - 2**-j I is positive definite. Each entry of R moves by at most 2h
    (t -> 1/(t^2 + 1) is 1-Lipschitz and each distance moves by at most 2h),
    so the operator error is at most 2*ell*h <= 2**-(j+1) and the true
    smallest eigenvalue exceeds 2**-j - 2**-(j+1) = 2**-(j+1).
    """
    ell = oracle.ell if y_count is None else y_count
    if m is not None and m != oracle.m:
        raise ValueError("m disagrees with the oracle")
    k_R, _, _, _ = _kr_search(oracle, [[k] for k in range(1, ell + 1)], max_rounds)
    return k_R, oracle.log


def rbf_working_precision(j: int, k_R: int, m: int, ell: int) -> int:
    """Smallest r with 2**-r below both branches of the perturbation bound."""
    if min(j, k_R, m, ell) <= 0:
        raise ValueError("inputs must be positive")
    return min_exponent(min(_working_bounds(j, k_R, m, ell)))


def _working_bounds(j, k_R, m, ell):
    seventh = Fraction(1, 7)
    first = seventh * Fraction(1, 4) * Fraction(1, 2 * m) * Fraction(1, ell * ell) * pow2(2 * k_R) * pow2(j)
    second = seventh * Fraction(1, ell) * pow2(k_R) * pow2(j)
    return first, second


def rbf_train(oracle, eps, *, max_rounds: int = 64, merge_coincident: bool = False) -> TrainingOutcome:
    """Certified RBF interpolation from dyadic readings.

    With merge_coincident, centers whose readings still coincide after
    max_rounds probe rounds are merged into one center carrying the mean of
    their x readings. The net then exists but its certificate is marked
    "merged" and carries no accuracy guarantee.
    """
    eps = ea.Q(eps)
    if eps <= 0:
        raise ValueError("eps must be positive")
    ell, m, N = oracle.ell, oracle.m, oracle.N
    # a target of 1/2 still meets any larger eps
    j = max(1, min_exponent(eps))
    groups = [[k] for k in range(1, ell + 1)]
    merged = False
    try:
        k_R, j_probe, r_probe, _ = _kr_search(oracle, groups, max_rounds)
    except TrainingError as exc:
        if not merge_coincident:
            raise
        last = exc.args[1]
        by_reading: dict = {}
        for k, y in zip(range(1, ell + 1), last):
            by_reading.setdefault(y, []).append(k)
        groups = list(by_reading.values())
        merged = True
        k_R, j_probe, r_probe, _ = _kr_search(oracle, groups, max_rounds)

    r = rbf_working_precision(j, k_R, m, len(groups))
    for _ in range(max_rounds):
        ys = [read_vector(oracle, g[0], "y", r) for g in groups]
        if len(set(ys)) == len(ys):
            break
        r += 1
    else:
        raise TrainingError("readings never separated")
    xs = []
    for g in groups:
        readings = [read_vector(oracle, k, "x", r) for k in g]
        total = readings[0]
        for other in readings[1:]:
            total = ea.add(total, other)
        xs.append(ea.scale(Fraction(1, len(g)), total))
    net = build_rbf(list(zip(xs, ys)))

    cert = PrecisionCertificate(j=j, k_R=k_R, r=r, notes={"merged": merged, "centers": len(groups)})
    cert.record("target: 2^-j <= eps", pow2(j), "<=", eps)
    cert.record("probe precision: 2^-r <= (1/2)(1/2m)(1/l)2^-(j+1)",
                pow2(r_probe), "<=", _probe_bound(j_probe, m, len(groups)))
    first, second = _working_bounds(j, k_R, m, len(groups))
    cert.record("working precision, k_R^2 branch", pow2(r), "<=", first)
    cert.record("working precision, k_R branch", pow2(r), "<=", second)
    return TrainingOutcome(net, cert, oracle.log, "rbf")


# --------------------------------------------------------------------------
# stable trainer


def identify_basis_pairs(oracle, N: int, epsilon1) -> dict[int, int]:
    """Map coordinate i (1-based) to the rank of the pair with x = epsilon1*e_i.

    x's are read with vector error <= epsilon1/8; a reading within epsilon1/2
    of epsilon1*e_i is accepted. Family validation keeps every other x more
    than 3*epsilon1/4 away, so exactly one reading qualifies.
    """
    epsilon1 = ea.Q(epsilon1)
    p = 0
    while N * Fraction(1, 4 ** p) > (epsilon1 / 8) ** 2:
        p += 1
    xs = {k: oracle.read_vector(k, "x", p) for k in range(1, oracle.ell + 1)}
    radius_sq = (epsilon1 / 2) ** 2
    out = {}
    for i in range(N):
        target = ea.scale(epsilon1, ea.unit(N, i))
        hits = [k for k, x in xs.items() if ea.dist_sq(x, target) <= radius_sq]
        if len(hits) != 1:
            raise FamilyShapeError(f"coordinate {i + 1}: {len(hits)} candidate basis pairs")
        out[i + 1] = hits[0]
    return out


def pinv_train(oracle, eps, beta_min, beta_max, *, epsilon1, v, max_rounds: int = 64) -> TrainingOutcome:
    """Affine net A_r^+ y + v/2 with A_r assembled from the basis pairs.

    beta_min, beta_max bound the singular values of A; v is the family's
    kernel vector. Both are construction data handed to the trainer.
    """
    eps, epsilon1 = ea.Q(eps), ea.Q(epsilon1)
    beta_min, beta_max = ea.Q(beta_min), ea.Q(beta_max)
    if eps <= 2 * epsilon1:
        raise ContractError(f"eps = {eps} must exceed 2*epsilon1 = {2 * epsilon1}")
    N, m = oracle.N, oracle.m
    eps2 = (eps - 2 * epsilon1) / 2
    j = min_exponent(eps2)
    alpha = min(Fraction(1), beta_min)
    bound = HALF * Fraction(1, 4) * (1 + beta_max) ** -2 * alpha ** 4 * pow2(j)
    r = min_exponent(bound)
    ids = identify_basis_pairs(oracle, N, epsilon1)
    for _ in range(max_rounds):
        k_col = min_exponent(epsilon1 / N * pow2(r))
        cols = [ea.scale(1 / epsilon1, read_vector(oracle, ids[i], "y", k_col)) for i in range(1, N + 1)]
        A_r = ea.transpose(tuple(cols))
        try:
            gram_inv = ea.inverse(ea.matmul(A_r, ea.transpose(A_r)))
            break
        except SingularMatrixError:
            r += 1
    else:
        raise TrainingError("A_r A_r^T stayed singular")
    pinv = ea.matmul(ea.transpose(A_r), gram_inv)
    net = AffineNet(pinv, ea.scale(HALF, ea.vec(v)))

    cert = PrecisionCertificate(j=j, k_R=None, r=r, notes={"eps2": ea.rational_str(eps2)})
    cert.record("split: 2 epsilon1 + eps2 <= eps", 2 * epsilon1 + eps2, "<=", eps)
    cert.record("target: 2^-j <= eps2", pow2(j), "<=", eps2)
    cert.record("working precision: 2^-r <= (1/8)(1+beta_max)^-2 alpha^4 2^-j", pow2(r), "<=", bound)
    cert.record("column precision: 2^-k' <= (epsilon1/N) 2^-r", pow2(k_col), "<=", epsilon1 / N * pow2(r))
    cert.record("Jacobian: ||A_r^+||_F^2 <= m (1/beta_min + eps2)^2",
                ea.frobenius_sq(pinv), "<=", m * (1 / beta_min + eps2) ** 2)
    return TrainingOutcome(net, cert, oracle.log, "pinv")


# --------------------------------------------------------------------------
# instability witness


def blowup_witness(net, family, n: int, delta) -> tuple[Fraction, Fraction]:
    """(quotient_sq, threshold_sq) for the segment from 0 to y_n = A(theta 4**-n e).

    quotient_sq is the squared difference quotient of the net on the segment,
    a lower bound on sup ||DN||^2 there by the mean value inequality.
    threshold_sq = lam^2 / ||y_n||^2, where lam lower-bounds the distance
    between the two forced values minus twice the allowed error; with an
    exact ||v|| = 2 kappa it equals 2*delta. Since ||y_n|| <= 4**-n it is at
    least (2 delta 4**n)^2 (lam / 2 delta)^2.
    """
    delta = ea.Q(delta)
    y_n = ea.matvec(family.A, ea.scale(family.theta / Fraction(4) ** n, family.e))
    denom = ea.norm_sq(y_n)
    zero = ea.zeros(family.m)
    quotient_sq = ea.dist_sq(net.eval(zero), net.eval(y_n)) / denom
    v_lo, _ = ea.sqrt_bounds(ea.norm_sq(family.v), bits=96)
    lam = max(Fraction(0), 2 * delta - (2 * family.kappa - v_lo))
    return quotient_sq, lam * lam / denom


# --------------------------------------------------------------------------
# registry


def _run_rbf(oracle, eps, family=None, **kw):
    return rbf_train(oracle, eps, **kw)


def _run_pinv(oracle, eps, family=None, **kw):
    if family is None:
        raise ValueError("pinv needs the family's construction data")
    if family.beta_min is None:
        raise ContractError("family has no positive lower singular-value bound")
    return pinv_train(oracle, eps, family.beta_min, family.beta_max,
                      epsilon1=family.epsilon1, v=family.v, **kw)


TRAINERS = {"rbf": _run_rbf, "pinv": _run_pinv}


def run_trainer(key: str, oracle, eps, family=None, **kw) -> TrainingOutcome:
    try:
        fn = TRAINERS[key]
    except KeyError:
        raise ValueError(f"unknown trainer {key!r}; choose from {sorted(TRAINERS)}") from None
    return fn(oracle, eps, family, **kw)
