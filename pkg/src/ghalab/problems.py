"""Constructed inverse problems and their interleaved training-set sequences.

A family fixes a measurement matrix A, a kernel vector v, a unit-ish
row-space direction e and a base set of training pairs. Branch 1 of the
sequence carries a moving element v + theta*4**-n*e that converges
coordinatewise to v; branch 2 carries v itself. Because Av = 0 the two
branches have optimal reconstructions that stay a fixed distance apart, while
their data agree to within 4**-n.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterator, NamedTuple

from . import exact_arith as ea
from .exact_arith import Matrix, Vector

ENCLOSURE = Fraction(1, 1 << 20)
THM4_MAX_EPS = Fraction(3, 8)
THM5_MAX_EPS = Fraction(15, 64)


class FamilyValidationError(ValueError):
    """A family invariant failed; `invariant` names which one."""

    def __init__(self, invariant: str, detail: str = ""):
        self.invariant = invariant
        super().__init__(f"{invariant}: {detail}" if detail else invariant)


# --------------------------------------------------------------------------
# pseudo-random stream


class SplitMix64:
    """The 64-bit SplitMix generator (Steele, Lea and Flood).

    Fixed here rather than borrowed from `random` so that corpora are
    reproducible across Python versions.
    """

    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = seed & self.MASK

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & self.MASK
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & self.MASK
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & self.MASK
        return z ^ (z >> 31)

    def below(self, bound: int) -> int:
        return self.next() % bound


def mix64(*words: int) -> int:
    """Hash a tuple of integers to 64 bits by chaining SplitMix steps."""
    state = 0
    for w in words:
        state = SplitMix64(state ^ (w & SplitMix64.MASK)).next()
    return state


# --------------------------------------------------------------------------
# training sets


class TrainingPair(NamedTuple):
    x: Vector
    y: Vector

    def to_json(self) -> dict:
        return {"x": ea.vector_to_json(self.x), "y": ea.vector_to_json(self.y)}

    @classmethod
    def from_json(cls, obj) -> "TrainingPair":
        return cls(ea.vector_from_json(obj["x"]), ea.vector_from_json(obj["y"]))


@dataclass(frozen=True)
class TrainingSet:
    """Pairs in strictly increasing lexicographic order (x first, then y)."""

    pairs: tuple

    def __post_init__(self):
        pairs = tuple(sorted(TrainingPair(ea.vec(p[0]), ea.vec(p[1])) for p in self.pairs))
        for a, b in zip(pairs, pairs[1:]):
            if a == b:
                raise FamilyValidationError("distinct pairs", f"duplicate element {a}")
        for p in pairs:
            if ea.norm_sq(p.x) > 1 or ea.norm_sq(p.y) > 1:
                raise FamilyValidationError("unit-ball data", f"element {p} leaves the unit ball")
        object.__setattr__(self, "pairs", pairs)

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterator[TrainingPair]:
        return iter(self.pairs)

    def __getitem__(self, k: int) -> TrainingPair:
        return self.pairs[k]

    @property
    def N(self) -> int:
        return len(self.pairs[0].x)

    @property
    def m(self) -> int:
        return len(self.pairs[0].y)

    @property
    def xs(self) -> list[Vector]:
        return [p.x for p in self.pairs]

    @property
    def ys(self) -> list[Vector]:
        return [p.y for p in self.pairs]

    def rank_of(self, x: Vector) -> int:
        """1-based lexicographic rank of the element with this x."""
        for k, p in enumerate(self.pairs, 1):
            if p.x == x:
                return k
        raise KeyError(x)

    def union(self, extra) -> "TrainingSet":
        return TrainingSet(self.pairs + tuple(extra))

    def to_json(self) -> list:
        return [p.to_json() for p in self.pairs]

    @classmethod
    def from_json(cls, obj) -> "TrainingSet":
        return cls(tuple(TrainingPair.from_json(p) for p in obj))


def initial_domain(T: TrainingSet) -> tuple:
    """The x-projection of T (its initial domain M1), in lexicographic order."""
    return tuple(sorted(set(T.xs)))


def measurement_domain(T: TrainingSet) -> tuple:
    return tuple(sorted(set(T.ys)))


# --------------------------------------------------------------------------
# families


@dataclass(frozen=True)
class ProblemFamily:
    A: Matrix
    kind: str
    epsilon1: Fraction
    ell: int
    seed: int
    n_max: int
    v: Vector
    e: Vector
    theta: Fraction
    T_base: tuple
    T_base_prime: tuple | None = None
    basis_pairs: tuple = ()
    beta_min: Fraction | None = None
    beta_max: Fraction | None = None
    config: dict = field(default_factory=dict, compare=False)

    @property
    def N(self) -> int:
        return len(self.A[0])

    @property
    def m(self) -> int:
        return len(self.A)

    @property
    def kappa(self) -> Fraction:
        return self.epsilon1 if self.kind == "thm4" else 2 * self.epsilon1

    @property
    def rho_sq(self) -> Fraction:
        return (2 * self.kappa) ** 2

    @property
    def kappa_eff_sq(self) -> Fraction:
        """Squared half-length of v, the separation the game exploits."""
        return ea.norm_sq(self.v) / 4

    def moving_x(self, n: int) -> Vector:
        return ea.add(self.v, ea.scale(self.theta / Fraction(4) ** n, self.e))

    def moving_pair(self, n: int) -> TrainingPair:
        x = self.moving_x(n)
        return TrainingPair(x, ea.matvec(self.A, x))

    def moving_y(self, n: int) -> Vector:
        return self.moving_pair(n).y

    def zero_pair(self) -> TrainingPair:
        return TrainingPair(ea.zeros(self.N), ea.zeros(self.m))

    def kernel_pair(self) -> TrainingPair:
        return TrainingPair(self.v, ea.zeros(self.m))

    def iota(self, branch: int, n: int = 1, *, strict: bool = True) -> TrainingSet:
        """Branch 1 carries the moving element at step n, branch 2 carries (v, 0).

        The construction is valid for every n >= 1; `strict` restricts n to the
        enumerated range 1..n_max.
        """
        if branch not in (1, 2):
            raise ValueError("branch must be 1 or 2")
        if n < 1 or (strict and n > self.n_max):
            raise ValueError(f"n = {n} outside the family range 1..{self.n_max}")
        special = self.moving_pair(n) if branch == 1 else self.kernel_pair()
        return TrainingSet(self.T_base + self.basis_pairs + (self.zero_pair(), special))

    def alpha(self, n: int = 1) -> TrainingSet:
        """The constant sequence built on the larger base set; its size is ell."""
        if self.kind != "thm4" or self.T_base_prime is None:
            raise ValueError("alpha is only defined for thm4 families")
        if n < 1:
            raise ValueError("n must be >= 1")
        return TrainingSet(self.T_base_prime + (self.zero_pair(),))

    def extended(self) -> "ProblemFamily":
        """The family with ell + 1 elements whose base set is T_base_prime."""
        if self.kind != "thm4" or self.T_base_prime is None:
            raise ValueError("only thm4 families have an extension")
        fam = ProblemFamily(
            A=self.A, kind=self.kind, epsilon1=self.epsilon1, ell=self.ell + 1,
            seed=self.seed, n_max=self.n_max, v=self.v, e=self.e, theta=self.theta,
            T_base=self.T_base_prime, T_base_prime=None, basis_pairs=(),
            beta_min=self.beta_min, beta_max=self.beta_max, config=dict(self.config),
        )
        validate_family(fam)
        return fam

    def members(self) -> list[tuple[int, int, TrainingSet]]:
        """(branch, n, set) for branch 1 at n = 1..n_max and the branch-2 set."""
        out = [(1, n, self.iota(1, n)) for n in range(1, self.n_max + 1)]
        out.append((2, 1, self.iota(2, 1)))
        return out

    def domain_of(self, T: TrainingSet) -> tuple:
        """Initial domain M1 of a member: its x's minus the basis-pair x's.

        Basis pairs are observable training data that let a trainer recover
        A, but they are not part of the inverse problem being solved.
        """
        basis = {p.x for p in self.basis_pairs}
        return tuple(x for x in initial_domain(T) if x not in basis)

    def union_M2(self) -> tuple:
        ys = set()
        for _, _, T in self.members():
            ys.update(ea.matvec(self.A, x) for x in self.domain_of(T))
        return tuple(sorted(ys))

    def moving_rank(self) -> int:
        return self.iota(2, 1).rank_of(self.v)

    def to_manifest(self) -> dict:
        return {
            "config": self.config,
            "kind": self.kind,
            "A": ea.matrix_to_json(self.A),
            "epsilon1": ea.rational_to_json(self.epsilon1),
            "ell": self.ell,
            "seed": self.seed,
            "n_max": self.n_max,
            "v": ea.vector_to_json(self.v),
            "e": ea.vector_to_json(self.e),
            "theta": ea.rational_to_json(self.theta),
            "kappa_eff_sq": ea.rational_to_json(self.kappa_eff_sq),
            "beta_min": None if self.beta_min is None else ea.rational_to_json(self.beta_min),
            "beta_max": None if self.beta_max is None else ea.rational_to_json(self.beta_max),
            "T_base": [p.to_json() for p in self.T_base],
            "basis_pairs": [p.to_json() for p in self.basis_pairs],
            "members": [
                {"branch": b, "n": n, "set": T.to_json()} for b, n, T in self.members()
            ],
        }


# --------------------------------------------------------------------------
# construction helpers


def _scaled_to_norm(candidates: list[Vector], target_sq: Fraction) -> Vector:
    """c*w with ||c*w||^2 = target_sq exactly if some candidate allows it,
    otherwise within the relative enclosure [1 - 2**-20, 1]."""
    for w in candidates:
        ratio = target_sq / ea.norm_sq(w)
        if ea.is_square(ratio):
            return ea.scale(ea.exact_sqrt(ratio), w)
    w = candidates[0]
    lo, _ = ea.sqrt_bounds(target_sq / ea.norm_sq(w), bits=48)
    return ea.scale(lo, w)


def _combinations(basis: list[Vector], limit: int = 2) -> list[Vector]:
    """Small integer combinations of a basis, basis vectors first."""
    out = list(basis)
    if len(basis) > 1:
        for coeffs in itertools.product(range(-limit, limit + 1), repeat=len(basis)):
            if sum(1 for c in coeffs if c) < 2:
                continue
            w = ea.zeros(len(basis[0]))
            for c, b in zip(coeffs, basis):
                w = ea.add(w, ea.scale(c, b))
            if any(w):
                out.append(w)
    return out


def _lex_band(v: Vector, e: Vector) -> tuple[Vector, Vector]:
    far = ea.add(v, ea.scale(Fraction(1, 4), e))
    return (v, far) if v <= far else (far, v)


def in_band(x: Vector, v: Vector, e: Vector) -> bool:
    lo, hi = _lex_band(v, e)
    return lo <= x <= hi


def segment_dist_sq(p: Vector, start: Vector, direction: Vector, t_max: Fraction) -> Fraction:
    """Squared distance from p to {start + t*direction : 0 <= t <= t_max}."""
    a = ea.norm_sq(direction)
    b = ea.dot(direction, ea.sub(start, p))
    t = min(max(-b / a, Fraction(0)), t_max)
    return ea.dist_sq(ea.add(start, ea.scale(t, direction)), p)


def _parallel_ratio(x: Vector, e: Vector) -> Fraction | None:
    """t with x = t*e, or None."""
    j = next(i for i, c in enumerate(e) if c != 0)
    t = x[j] / e[j]
    return t if ea.scale(t, e) == x else None


def _hits_moving_step(t: Fraction | None, theta: Fraction) -> bool:
    """True if t = theta * 4**-n for some n >= 1."""
    if t is None or t <= 0:
        return False
    q = t / theta
    d = q.denominator
    return q.numerator == 1 and d >= 4 and d & (d - 1) == 0 and (d.bit_length() - 1) % 2 == 0


def _spectral_bounds(A: Matrix, frob_upper: Fraction):
    """(beta_min, beta_max) with spec(AA^T) inside [beta_min^2, beta_max^2]."""
    G = ea.matmul(A, ea.transpose(A))
    if ea.rank(A) < len(A):
        return None, frob_upper
    beta_min = None
    for k in range(0, 65):
        t = Fraction(1, 1 << k)
        if ea.psd_check(ea.shift_diag(G, t * t)):
            beta_min = t
            break
    return beta_min, frob_upper


def build_family(A, epsilon1, ell: int, kind: str, seed: int = 0, n_max: int = 6,
                 beta_min=None, beta_max=None) -> ProblemFamily:
    """Construct and validate a family.

    kind "thm4": ||v|| = 2*epsilon1, base set of ell - 2 pairs plus an
    ell - 1 variant for the constant sequence.
    kind "thm5": ||v|| = 4*epsilon1, the N pairs (epsilon1*e_i, A epsilon1 e_i)
    are added to every set and the base set has ell - 2 - N pairs.
    """
    A = ea.mat(A)
    epsilon1 = ea.Q(epsilon1)
    config = {
        "A": [[ea.rational_str(x) for x in r] for r in A],
        "epsilon1": ea.rational_str(epsilon1),
        "ell": ell, "kind": kind, "seed": seed, "n_max": n_max,
    }
    if beta_min is not None:
        config["beta_min"] = ea.rational_str(beta_min)
    if beta_max is not None:
        config["beta_max"] = ea.rational_str(beta_max)
    if kind not in ("thm4", "thm5"):
        raise FamilyValidationError("family kind", f"unknown kind {kind!r}")
    if not A or all(x == 0 for r in A for x in r):
        raise FamilyValidationError("non-zero operator", "A must be non-zero")
    if n_max < 1:
        raise FamilyValidationError("n range", "n_max must be >= 1")
    m, N = ea.shape(A)
    kernel, rowspace, P = ea.rowspace_and_kernel(A)
    if not kernel:
        raise FamilyValidationError("non-trivial kernel", "A is injective")
    if epsilon1 <= 0:
        raise FamilyValidationError("epsilon1 range", "epsilon1 must be positive")
    if kind == "thm4":
        if epsilon1 > THM4_MAX_EPS:
            raise FamilyValidationError("epsilon1 range", "thm4 needs kappa = epsilon1 <= 3/8")
        if ell < 2:
            raise FamilyValidationError("cardinality", "thm4 needs ell >= 2")
        rho = 2 * epsilon1
    else:
        if epsilon1 > THM5_MAX_EPS:
            raise FamilyValidationError(
                "unit-ball data",
                "thm5 needs epsilon1 <= 15/64 so that ||v|| = 4*epsilon1 keeps the "
                "moving element inside the unit ball (||v|| <= 1 restriction)")
        if ell < N + 2:
            raise FamilyValidationError("cardinality", "thm5 needs ell >= N + 2")
        if ea.rank(A) < m:
            raise FamilyValidationError("full row rank", "thm5 needs A of full row rank")
        for i in range(N):
            if not any(ea.matvec(A, ea.unit(N, i))):
                raise FamilyValidationError(
                    "basis vectors outside kernel",
                    f"e_{i + 1} lies in ker(A), so A(epsilon1 e_{i + 1}) = 0 collides with the (0,0) pair")
        rho = 4 * epsilon1

    v = _scaled_to_norm(_combinations(kernel), rho * rho)
    e = _scaled_to_norm(_combinations(rowspace), Fraction(1))
    # choose signs so that 0 stays out of the lexicographic band around v
    for sv, se in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
        vv, ee = ea.scale(sv, v), ea.scale(se, e)
        if not in_band(ea.zeros(N), vv, ee):
            v, e = vv, ee
            break

    frob_lo, frob_hi = ea.sqrt_bounds(ea.frobenius_sq(A), bits=20)
    theta = min(Fraction(1), 1 / frob_hi)
    auto_min, auto_max = _spectral_bounds(A, frob_hi)
    beta_min = auto_min if beta_min is None else ea.Q(beta_min)
    beta_max = auto_max if beta_max is None else ea.Q(beta_max)

    basis_pairs = ()
    if kind == "thm5":
        basis_pairs = tuple(
            TrainingPair(ea.scale(epsilon1, ea.unit(N, i)), ea.matvec(A, ea.scale(epsilon1, ea.unit(N, i))))
            for i in range(N)
        )
    base_count = ell - 2 - len(basis_pairs)
    want = base_count + 1 if kind == "thm4" else base_count
    points = _sample_base(A, P, v, e, theta, epsilon1, kind, basis_pairs, want, seed)
    fam = ProblemFamily(
        A=A, kind=kind, epsilon1=epsilon1, ell=ell, seed=seed, n_max=n_max, v=v, e=e,
        theta=theta, T_base=tuple(points[:base_count]),
        T_base_prime=tuple(points) if kind == "thm4" else None,
        basis_pairs=basis_pairs, beta_min=beta_min, beta_max=beta_max, config=config,
    )
    validate_family(fam)
    return fam


def _sample_base(A, P, v, e, theta, epsilon1, kind, basis_pairs, count, seed):
    rng = SplitMix64(seed)
    N = len(A[0])
    taken_x = {ea.zeros(N), v} | {p.x for p in basis_pairs}
    taken_y = {ea.zeros(len(A))} | {p.y for p in basis_pairs}
    out = []
    attempts = 0
    while len(out) < count:
        attempts += 1
        if attempts > 10000:
            raise FamilyValidationError("base sampling", "could not place the base set")
        w = tuple(Fraction(rng.below(513) - 256, 256) for _ in range(N))
        x = ea.matvec(P, w)
        if not any(x):
            continue
        # radius between 1/8 and 1/2, damped by theta so ||Ax|| stays small too
        _, norm_hi = ea.sqrt_bounds(ea.norm_sq(x), bits=16)
        radius = Fraction(4 + rng.below(13), 32)
        x = ea.scale(theta * radius / norm_hi, x)
        y = ea.matvec(A, x)
        if x in taken_x or y in taken_y:
            continue
        if ea.norm_sq(x) > Fraction(1, 4) or ea.norm_sq(y) > Fraction(1, 4):
            continue
        if in_band(x, v, e):
            continue
        if _hits_moving_step(_parallel_ratio(x, e), theta):
            continue
        if kind == "thm5" and any(
            ea.dist_sq(x, p.x) <= (Fraction(3, 4) * epsilon1) ** 2 for p in basis_pairs
        ):
            continue
        taken_x.add(x)
        taken_y.add(y)
        out.append(TrainingPair(x, y))
    return out


def validate_family(fam: ProblemFamily) -> None:
    """Check every construction invariant exactly; raise FamilyValidationError on failure."""
    A, v, e, theta, N = fam.A, fam.v, fam.e, fam.theta, fam.N
    kernel, rowspace, P = ea.rowspace_and_kernel(A)

    def check(ok, name, detail=""):
        if not ok:
            raise FamilyValidationError(name, detail)

    check(any(x for r in A for x in r), "non-zero operator")
    check(bool(kernel), "non-trivial kernel")
    check(not any(ea.matvec(A, v)), "kernel vector", "Av != 0")
    check(ea.matvec(P, e) == e, "row-space direction", "e is not in ker(A)^perp")
    check(0 < theta <= 1, "damping", "theta must lie in (0, 1]")
    check(theta * theta * ea.frobenius_sq(A) <= 1, "damping", "theta^2 ||A||_F^2 > 1")
    nv = ea.norm_sq(v)
    check(fam.rho_sq * (1 - ENCLOSURE) <= nv <= fam.rho_sq, "kernel vector norm",
          f"||v||^2 = {nv} outside the enclosure of {fam.rho_sq}")
    ne = ea.norm_sq(e)
    check(1 - ENCLOSURE <= ne <= 1, "direction norm", f"||e||^2 = {ne}")
    check(not in_band(ea.zeros(N), v, e), "lexicographic band", "0 lies in the band around v")

    far = fam.moving_pair(1)
    check(ea.norm_sq(far.x) <= 1 and ea.norm_sq(far.y) <= 1, "unit-ball data",
          "moving element leaves the unit ball")

    xs = [p.x for p in fam.T_base]
    for x in xs:
        check(any(x), "base set", "zero x in base set")
        check(ea.matvec(P, x) == x, "base set", "base x outside ker(A)^perp")
        check(not in_band(x, v, e), "lexicographic band", f"base x {x} inside the band")
        check(not _hits_moving_step(_parallel_ratio(x, e), theta), "distinct measurements",
              "base y coincides with a moving y")
    if fam.T_base_prime is not None:
        for p in fam.T_base_prime:
            check(not in_band(p.x, v, e) and any(p.x), "lexicographic band", "extended base set")
        check(fam.T_base == fam.T_base_prime[:len(fam.T_base)], "base set", "prefix property")

    all_x = xs + [p.x for p in fam.basis_pairs] + [ea.zeros(N), v]
    check(len(set(all_x)) == len(all_x), "distinct x", "x collision")
    all_y = [p.y for p in fam.T_base] + [p.y for p in fam.basis_pairs] + [ea.zeros(fam.m)]
    check(len(set(all_y)) == len(all_y), "distinct measurements", "y collision")

    if fam.kind == "thm5":
        check(len(fam.basis_pairs) == N, "basis pairs", "need one pair per coordinate")
        for i, p in enumerate(fam.basis_pairs):
            check(p.x == ea.scale(fam.epsilon1, ea.unit(N, i)), "basis pairs")
            check(any(p.y), "basis vectors outside kernel", f"e_{i + 1} in ker(A)")
            check(not _hits_moving_step(_parallel_ratio(ea.matvec(P, p.x), e), theta),
                  "distinct measurements",
                  "basis y coincides with a moving y")
            check(not in_band(p.x, v, e), "lexicographic band", "basis x inside the band")
            # every other x stays clearly away so identification is decisive
            sep = (Fraction(3, 4) * fam.epsilon1) ** 2
            for other in all_x:
                if other != p.x:
                    check(ea.dist_sq(other, p.x) > sep, "basis separation",
                          f"some x is within 3/4 epsilon1 of epsilon1 e_{i + 1}")
            check(segment_dist_sq(p.x, v, e, theta / 4) > sep, "basis separation",
                  "the moving element passes near a basis pair")
    expected = fam.ell - 2 - len(fam.basis_pairs)
    check(len(fam.T_base) == expected, "cardinality", f"base set has {len(fam.T_base)} pairs")


def family_from_config(cfg: dict) -> ProblemFamily:
    """Build a family from the JSON config shape (rationals as strings or {num, den})."""
    try:
        A = [[ea.rational_from_json(x) for x in row] for row in cfg["A"]]
        return build_family(
            A, ea.rational_from_json(cfg["epsilon1"]), int(cfg["ell"]), cfg["kind"],
            int(cfg.get("seed", 0)), int(cfg.get("n_max", 6)),
            beta_min=None if cfg.get("beta_min") is None else ea.rational_from_json(cfg["beta_min"]),
            beta_max=None if cfg.get("beta_max") is None else ea.rational_from_json(cfg["beta_max"]),
        )
    except KeyError as exc:
        raise FamilyValidationError("config", f"missing key {exc}") from None


def family_from_manifest(manifest: dict) -> ProblemFamily:
    """Rebuild a family from a manifest and check it matches what was recorded."""
    fam = family_from_config(manifest["config"])
    if ea.vector_to_json(fam.v) != manifest["v"] or ea.vector_to_json(fam.e) != manifest["e"]:
        raise FamilyValidationError("manifest", "rebuilt family differs from the manifest")
    return fam
