"""Optimality constants and exact accuracy verdicts on finite domains.

For a finite initial domain M1 the best achievable worst-case error of any
reconstruction map is the largest Chebyshev radius among the fibers
{x in M1 : Ax = y}. A value z proposed at y is admissible when every x in the
fiber lies within that constant of z. The distance from a net's value to the
admissible set is what the verdicts below measure, always on squared norms.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from . import exact_arith as ea
from .exact_arith import Matrix, Vector


@dataclass(frozen=True)
class Fiber:
    points: tuple
    center: Vector
    radius_sq: Fraction


@dataclass(frozen=True)
class OptimalityCertificate:
    c_opt_sq: Fraction
    fibers: dict  # y -> Fiber

    def forced(self) -> dict:
        """y -> the only admissible value, for fibers whose radius attains c_opt."""
        return {y: f.center for y, f in self.fibers.items() if f.radius_sq == self.c_opt_sq}


def fiber_map(A: Matrix, M1: Iterable[Vector]) -> dict:
    out: dict = {}
    for x in M1:
        x = ea.vec(x)
        members = out.setdefault(ea.matvec(A, x), [])
        if x not in members:
            members.append(x)
    return {y: tuple(xs) for y, xs in out.items()}


def compute_certificate(A: Matrix, M1: Iterable[Vector]) -> OptimalityCertificate:
    fibers = {}
    for y, xs in fiber_map(A, M1).items():
        center, r_sq = ea.chebyshev_ball(xs)
        fibers[y] = Fiber(xs, center, r_sq)
    if not fibers:
        raise ValueError("M1 must be non-empty")
    return OptimalityCertificate(max(f.radius_sq for f in fibers.values()), fibers)


# --------------------------------------------------------------------------
# distances to the admissible set


def _ball_excess_sq(d_sq: Fraction, c_sq: Fraction) -> tuple[Fraction, bool]:
    """(max(0, sqrt(d_sq) - sqrt(c_sq)))^2 as (value, exact); inexact values are lower bounds."""
    if d_sq <= c_sq:
        return Fraction(0), True
    prod = d_sq * c_sq
    if ea.is_square(prod):
        return d_sq + c_sq - 2 * ea.exact_sqrt(prod), True
    _, hi = ea.sqrt_bounds(prod, bits=96)
    return max(Fraction(0), d_sq + c_sq - 2 * hi), False


def _ball_excess_exceeds(d_sq: Fraction, c_sq: Fraction, eps_sq: Fraction) -> bool:
    """Exactly decide sqrt(d_sq) - sqrt(c_sq) > sqrt(eps_sq)."""
    # sqrt(d) > c + eps  <=>  d - c^2 - eps^2 > 2 c eps  (both sides squared when positive)
    slack = d_sq - c_sq - eps_sq
    return slack > 0 and slack * slack > 4 * c_sq * eps_sq


def point_violation(z: Vector, fiber: Fiber, c_opt_sq: Fraction) -> tuple[Fraction, bool]:
    """Squared distance from z to the admissible set of one fiber, with an exactness flag.

    A fiber whose Chebyshev radius equals c_opt admits only its center. Other
    fibers admit the intersection of balls of radius c_opt around their
    points; the largest single-ball excess is used, which is exact for
    singleton fibers and a lower bound otherwise.
    """
    if fiber.radius_sq == c_opt_sq:
        return ea.dist_sq(z, fiber.center), True
    best, exact = Fraction(0), True
    for x in fiber.points:
        val, ok = _ball_excess_sq(ea.dist_sq(z, x), c_opt_sq)
        if val > best or (val == best and not ok):
            best, exact = val, ok
    return best, exact and len(fiber.points) == 1


def point_exceeds(z: Vector, fiber: Fiber, c_opt_sq: Fraction, eps_sq: Fraction) -> bool:
    if fiber.radius_sq == c_opt_sq:
        return ea.dist_sq(z, fiber.center) > eps_sq
    return any(_ball_excess_exceeds(ea.dist_sq(z, x), c_opt_sq, eps_sq) for x in fiber.points)


def violation_distance_sq(net, A: Matrix, M1: Iterable[Vector], cert: OptimalityCertificate | None = None) -> Fraction:
    """Largest squared distance from net(y) to the admissible set over y in A(M1)."""
    if cert is None:
        cert = compute_certificate(A, M1)
    return max(point_violation(net.eval(y), f, cert.c_opt_sq)[0] for y, f in cert.fibers.items())


@dataclass(frozen=True)
class Verdict:
    passed: bool
    witness_y: Vector | None
    violation_sq: Fraction
    bound_sq: Fraction
    exact: bool = True
    lower_bound_sq: Fraction | None = None

    def to_json(self) -> dict:
        out = {
            "pass": self.passed,
            "witness_y": None if self.witness_y is None else ea.vector_to_json(self.witness_y),
            "violation_sq": ea.rational_to_json(self.violation_sq),
            "bound_sq": ea.rational_to_json(self.bound_sq),
        }
        if not self.exact:
            out["violation_is_lower_bound"] = True
        if self.lower_bound_sq is not None:
            out["lower_bound_sq"] = ea.rational_to_json(self.lower_bound_sq)
        return out

    @classmethod
    def from_json(cls, obj) -> "Verdict":
        w = obj.get("witness_y")
        lb = obj.get("lower_bound_sq")
        return cls(
            bool(obj["pass"]), None if w is None else ea.vector_from_json(w),
            ea.rational_from_json(obj["violation_sq"]), ea.rational_from_json(obj["bound_sq"]),
            not obj.get("violation_is_lower_bound", False),
            None if lb is None else ea.rational_from_json(lb),
        )


def accuracy_verdict(net, A: Matrix, T, eps, evaluation_points: Iterable[Vector] = (),
                     M1: Iterable[Vector] | None = None) -> Verdict:
    """Exact check of ||net(y) - optimal set|| <= eps over the measurements of M1.

    M1 defaults to the x's of T. Points of `evaluation_points` outside A(M1)
    impose no constraint.
    """
    eps_sq = ea.Q(eps) ** 2
    xs = [p.x for p in T] if M1 is None else list(M1)
    cert = compute_certificate(A, xs)
    points = sorted(set(evaluation_points) | set(cert.fibers))
    worst, worst_y, exact, failing = Fraction(-1), None, True, None
    for y in points:
        fiber = cert.fibers.get(y)
        if fiber is None:
            continue
        z = net.eval(y)
        val, ok = point_violation(z, fiber, cert.c_opt_sq)
        if point_exceeds(z, fiber, cert.c_opt_sq, eps_sq):
            if failing is None or val > failing[0]:
                failing = (val, y, ok)
        if val > worst:
            worst, worst_y, exact = val, y, ok
    if failing is not None:
        return Verdict(False, failing[1], failing[0], eps_sq, failing[2])
    return Verdict(True, None, max(worst, Fraction(0)), eps_sq, exact)


def is_eps_accurate(net, family, T, eps) -> Verdict:
    """Accuracy verdict over the union of all measurement points of the family."""
    return accuracy_verdict(net, family.A, T, eps, family.union_M2(), family.domain_of(T))


def jacobian_bound_verdict(net, M2: Iterable[Vector], D_sq) -> Verdict:
    """PASS iff the Frobenius bound on ||J(y)||_op^2 is <= D_sq at every y.

    `lower_bound_sq` holds the best probe lower bound found; on FAIL it exceeds
    D_sq when the blow-up is certified rather than merely not excluded.
    """
    D_sq = ea.Q(D_sq)
    worst, worst_y, lower = Fraction(-1), None, Fraction(0)
    for y in M2:
        J = net.jacobian(y)
        f = ea.frobenius_sq(J)
        lower = max(lower, ea.operator_norm_lower_sq(J, ea.default_probes(J)))
        if f > worst:
            worst, worst_y = f, y
    passed = worst <= D_sq
    return Verdict(passed, None if passed else worst_y, worst, D_sq, True, lower)
