"""Exact rational and dyadic arithmetic.

Vectors are tuples of Fractions and matrices are tuples of row tuples. Every
routine here is pure and never touches floating point, so the decisions built
on top of it (positive definiteness, ball containment, accuracy verdicts) are
bit-exact.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

Rational = Fraction
Vector = tuple  # tuple[Fraction, ...]
Matrix = tuple  # tuple[Vector, ...]


class DimensionError(ValueError):
    pass


class SingularMatrixError(ArithmeticError):
    """Raised by solve_exact when the system matrix is singular."""


class InvalidOperatorError(ValueError):
    pass


# --------------------------------------------------------------------------
# scalars


def Q(value) -> Fraction:
    """Coerce ints, Fractions and "p/q" strings to a Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        raise TypeError("floats are not accepted as exact rationals")
    return Fraction(value)


@dataclass(frozen=True)
class Dyadic:
    """The number k * 2**-n, with n the precision it was produced at."""

    k: int
    n: int

    def __post_init__(self):
        if self.n < 0:
            raise ValueError("dyadic exponent must be non-negative")

    @property
    def value(self) -> Fraction:
        return Fraction(self.k, 1 << self.n)

    def in_grid(self, n: int) -> bool:
        """True if the value lies in the grid of spacing 2**-n."""
        return (self.value * (1 << n)).denominator == 1

    def to_json(self) -> dict:
        return {"k": str(self.k), "n": self.n}

    @classmethod
    def from_json(cls, obj: dict) -> "Dyadic":
        return cls(int(obj["k"]), int(obj["n"]))


def round_to_dyadic(v, n: int) -> Dyadic:
    """Nearest point of the 2**-n grid, ties going toward -infinity.

    The error is at most 2**-(n+1), which is half of what the protocol
    promises; the adversary relies on that spare half.

    >>> round_to_dyadic(Fraction(1, 3), 2)
    Dyadic(k=1, n=2)
    """
    if n < 0:
        raise ValueError("precision must be non-negative")
    scaled = Q(v) * (1 << n)
    # ceil(scaled - 1/2) picks the lower neighbour on exact ties
    return Dyadic(math.ceil(scaled - Fraction(1, 2)), n)


def min_exponent(bound) -> int:
    """Smallest r >= 0 with 2**-r <= bound (bound > 0)."""
    bound = Q(bound)
    if bound <= 0:
        raise ValueError("bound must be positive")
    if bound >= 1:
        return 0
    # 2**-r <= p/q  <=>  q <= p * 2**r
    r = max(0, (bound.denominator // bound.numerator).bit_length() - 1)
    while Fraction(1, 1 << r) > bound:
        r += 1
    while r > 0 and Fraction(1, 1 << (r - 1)) <= bound:
        r -= 1
    return r


def ceil_log4(value: int) -> int:
    """Smallest c >= 0 with 4**c >= value."""
    c = 0
    while 4 ** c < value:
        c += 1
    return c


def is_square(q: Fraction) -> bool:
    if q < 0:
        return False
    a, b = q.numerator, q.denominator
    return math.isqrt(a) ** 2 == a and math.isqrt(b) ** 2 == b


def exact_sqrt(q: Fraction) -> Fraction:
    """Square root of a rational square; raises ValueError otherwise."""
    if not is_square(q):
        raise ValueError(f"{q} is not the square of a rational")
    return Fraction(math.isqrt(q.numerator), math.isqrt(q.denominator))


def sqrt_bounds(q, bits: int = 64) -> tuple[Fraction, Fraction]:
    """Rational lo <= sqrt(q) <= hi with hi - lo <= 2**-bits (exact if q is a square)."""
    q = Q(q)
    if q < 0:
        raise ValueError("negative radicand")
    if is_square(q):
        s = exact_sqrt(q)
        return s, s
    scale = 1 << bits
    # floor(sqrt(q) * scale) computed in integers
    num = q.numerator * scale * scale
    lo_int = math.isqrt(num // q.denominator)
    lo = Fraction(lo_int, scale)
    hi = Fraction(lo_int + 1, scale)
    while lo * lo > q:
        lo -= Fraction(1, scale)
    while hi * hi < q:
        hi += Fraction(1, scale)
    return lo, hi


# --------------------------------------------------------------------------
# vectors and matrices


def vec(values: Iterable) -> Vector:
    return tuple(Q(v) for v in values)


def mat(rows: Iterable[Iterable]) -> Matrix:
    out = tuple(vec(r) for r in rows)
    if out and any(len(r) != len(out[0]) for r in out):
        raise DimensionError("ragged matrix")
    return out


def zeros(n: int) -> Vector:
    return (Fraction(0),) * n


def zero_matrix(rows: int, cols: int) -> Matrix:
    return tuple(zeros(cols) for _ in range(rows))


def identity(n: int) -> Matrix:
    return tuple(tuple(Fraction(int(i == j)) for j in range(n)) for i in range(n))


def unit(n: int, i: int) -> Vector:
    return tuple(Fraction(int(j == i)) for j in range(n))


def shape(M: Matrix) -> tuple[int, int]:
    return len(M), (len(M[0]) if M else 0)


def _check_same(a: Sequence, b: Sequence):
    if len(a) != len(b):
        raise DimensionError(f"length mismatch {len(a)} vs {len(b)}")


def add(a: Vector, b: Vector) -> Vector:
    _check_same(a, b)
    return tuple(x + y for x, y in zip(a, b))


def sub(a: Vector, b: Vector) -> Vector:
    _check_same(a, b)
    return tuple(x - y for x, y in zip(a, b))


def scale(c, a: Vector) -> Vector:
    c = Q(c)
    return tuple(c * x for x in a)


def dot(a: Vector, b: Vector) -> Fraction:
    _check_same(a, b)
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


def norm_sq(a: Vector) -> Fraction:
    return sum((x * x for x in a), Fraction(0))


def dist_sq(a: Vector, b: Vector) -> Fraction:
    _check_same(a, b)
    return sum(((x - y) ** 2 for x, y in zip(a, b)), Fraction(0))


def transpose(M: Matrix) -> Matrix:
    return tuple(zip(*M)) if M else ()


def matvec(M: Matrix, a: Vector) -> Vector:
    if M and len(M[0]) != len(a):
        raise DimensionError(f"matvec: {shape(M)} times length {len(a)}")
    return tuple(dot(row, a) for row in M)


def matmul(M: Matrix, K: Matrix) -> Matrix:
    if shape(M)[1] != len(K):
        raise DimensionError(f"matmul: {shape(M)} times {shape(K)}")
    cols = transpose(K)
    return tuple(tuple(dot(row, col) for col in cols) for row in M)


def mat_add(M: Matrix, K: Matrix) -> Matrix:
    if shape(M) != shape(K):
        raise DimensionError("mat_add shape mismatch")
    return tuple(add(r, s) for r, s in zip(M, K))


def mat_sub(M: Matrix, K: Matrix) -> Matrix:
    if shape(M) != shape(K):
        raise DimensionError("mat_sub shape mismatch")
    return tuple(sub(r, s) for r, s in zip(M, K))


def mat_scale(c, M: Matrix) -> Matrix:
    return tuple(scale(c, r) for r in M)


def shift_diag(M: Matrix, t) -> Matrix:
    """M - t*I."""
    t = Q(t)
    return tuple(tuple(x - t if i == j else x for j, x in enumerate(r)) for i, r in enumerate(M))


def frobenius_sq(M: Matrix) -> Fraction:
    return sum((norm_sq(r) for r in M), Fraction(0))


def is_symmetric(M: Matrix) -> bool:
    n, k = shape(M)
    return n == k and all(M[i][j] == M[j][i] for i in range(n) for j in range(i))


def kron(M: Matrix, K: Matrix) -> Matrix:
    return tuple(
        tuple(a * b for a in rm for b in rk)
        for rm in M for rk in K
    )


def operator_norm_lower_sq(M: Matrix, probes: Iterable[Vector]) -> Fraction:
    """Largest Rayleigh-type quotient ||Mz||^2 / ||z||^2 over the probes."""
    best = Fraction(0)
    for z in probes:
        nz = norm_sq(z)
        if nz:
            best = max(best, norm_sq(matvec(M, z)) / nz)
    return best


def default_probes(M: Matrix, rounds: int = 3) -> list[Vector]:
    """Coordinate axes plus a few exact power-iteration steps on M^T M."""
    cols = shape(M)[1]
    probes = [unit(cols, j) for j in range(cols)]
    if not M:
        return probes
    Mt = transpose(M)
    # start the power iteration from the column of largest norm
    z = max(probes, key=lambda p: norm_sq(matvec(M, p)))
    for _ in range(rounds):
        z = matvec(Mt, matvec(M, z))
        if not any(z):
            break
        z = scale(1 / max(abs(x) for x in z), z)
        probes.append(z)
    return probes


# --------------------------------------------------------------------------
# decision procedures


def ldlt_pivots(M: Matrix) -> list[Fraction] | None:
    """Diagonal of D in M = L D L^T without pivoting.

    Returns the pivots computed before the first non-positive one (inclusive),
    so the caller can tell where positivity failed.
    """
    if not is_symmetric(M):
        raise DimensionError("LDL^T needs a square symmetric matrix")
    n = len(M)
    L = [[Fraction(0)] * n for _ in range(n)]
    d: list[Fraction] = []
    for j in range(n):
        dj = M[j][j] - sum((L[j][k] ** 2 * d[k] for k in range(j)), Fraction(0))
        d.append(dj)
        if dj <= 0:
            return d
        for i in range(j + 1, n):
            s = M[i][j] - sum((L[i][k] * L[j][k] * d[k] for k in range(j)), Fraction(0))
            L[i][j] = s / dj
    return d


def ldlt_posdef_check(M: Matrix) -> bool:
    """True iff the symmetric matrix M is positive definite.

    >>> ldlt_posdef_check(mat([[Fraction(1, 2), Fraction(1, 2)], [Fraction(1, 2), Fraction(1, 2)]]))
    False
    """
    return all(p > 0 for p in ldlt_pivots(M))


def psd_check(M: Matrix) -> bool:
    """True iff the symmetric matrix M is positive semidefinite.

    Symmetric elimination with diagonal pivoting: take the largest remaining
    diagonal entry; if it is zero the remaining block must vanish entirely.
    """
    if not is_symmetric(M):
        raise DimensionError("PSD check needs a square symmetric matrix")
    A = [list(r) for r in M]
    idx = list(range(len(A)))
    while idx:
        p = max(idx, key=lambda i: A[i][i])
        if A[p][p] < 0:
            return False
        if A[p][p] == 0:
            return all(A[i][j] == 0 for i in idx for j in idx)
        idx.remove(p)
        for i in idx:
            f = A[i][p] / A[p][p]
            if f:
                for j in idx:
                    A[i][j] -= f * A[p][j]
    return True


def solve_exact(M: Matrix, B: Matrix) -> Matrix:
    """M^-1 B by Gauss-Jordan elimination; SingularMatrixError if M is singular."""
    n, k = shape(M)
    if n != k:
        raise DimensionError("solve_exact needs a square system")
    if len(B) != n:
        raise DimensionError("right-hand side has the wrong number of rows")
    width = shape(B)[1]
    aug = [list(M[i]) + list(B[i]) for i in range(n)]
    for c in range(n):
        piv = next((r for r in range(c, n) if aug[r][c] != 0), None)
        if piv is None:
            raise SingularMatrixError(f"singular at column {c}")
        aug[c], aug[piv] = aug[piv], aug[c]
        inv = 1 / aug[c][c]
        aug[c] = [x * inv for x in aug[c]]
        for r in range(n):
            if r != c and aug[r][c] != 0:
                f = aug[r][c]
                row_c = aug[c]
                aug[r] = [x - f * y for x, y in zip(aug[r], row_c)]
    return tuple(tuple(row[n:n + width]) for row in aug)


def inverse(M: Matrix) -> Matrix:
    return solve_exact(M, identity(len(M)))


def rref(A: Matrix) -> tuple[list[list[Fraction]], list[int]]:
    rows = [list(r) for r in A]
    n_rows, n_cols = shape(A)
    pivots = []
    r = 0
    for c in range(n_cols):
        piv = next((i for i in range(r, n_rows) if rows[i][c] != 0), None)
        if piv is None:
            continue
        rows[r], rows[piv] = rows[piv], rows[r]
        inv = 1 / rows[r][c]
        rows[r] = [x * inv for x in rows[r]]
        for i in range(n_rows):
            if i != r and rows[i][c] != 0:
                f = rows[i][c]
                rows[i] = [x - f * y for x, y in zip(rows[i], rows[r])]
        pivots.append(c)
        r += 1
        if r == n_rows:
            break
    return rows[:r], pivots


def primitive(w: Sequence[Fraction]) -> Vector:
    """Scale to coprime integers with a positive first non-zero entry."""
    den = 1
    for x in w:
        den = den * x.denominator // math.gcd(den, x.denominator)
    ints = [int(x * den) for x in w]
    g = 0
    for x in ints:
        g = math.gcd(g, x)
    if g == 0:
        return vec(ints)
    first = next(x for x in ints if x != 0)
    if first < 0:
        g = -g
    return vec(x // g for x in ints)


def rank(A: Matrix) -> int:
    return len(rref(A)[1])


def rowspace_and_kernel(A: Matrix) -> tuple[list[Vector], list[Vector], Matrix]:
    """Kernel basis, row-space basis, and the orthogonal projector onto the row space."""
    if not A or all(x == 0 for r in A for x in r):
        raise InvalidOperatorError("A must be non-zero")
    n_cols = shape(A)[1]
    R, pivots = rref(A)
    free = [c for c in range(n_cols) if c not in pivots]
    kernel = []
    for f in free:
        w = [Fraction(0)] * n_cols
        w[f] = Fraction(1)
        for row, p in zip(R, pivots):
            w[p] = -row[f]
        kernel.append(primitive(w))
    rowspace = [primitive(row) for row in R]
    B = tuple(rowspace)
    P = matmul(matmul(transpose(B), inverse(matmul(B, transpose(B)))), B)
    return kernel, rowspace, P


# --------------------------------------------------------------------------
# smallest enclosing ball


def _circumball(support: Sequence[Vector]) -> tuple[Vector, Fraction] | None:
    """Ball with every support point on its boundary, centred in their affine hull."""
    p0 = support[0]
    if len(support) == 1:
        return p0, Fraction(0)
    diffs = [sub(p, p0) for p in support[1:]]
    gram = tuple(tuple(dot(a, b) for b in diffs) for a in diffs)
    rhs = tuple((norm_sq(a) / 2,) for a in diffs)
    try:
        lam = solve_exact(gram, rhs)
    except SingularMatrixError:
        return None
    center = p0
    for coeff, d in zip(lam, diffs):
        center = add(center, scale(coeff[0], d))
    return center, dist_sq(center, p0)


def _ball_from_support(support: Sequence[Vector]) -> tuple[Vector, Fraction] | None:
    if not support:
        return None
    ball = _circumball(support)
    if ball is not None:
        return ball
    # affinely dependent support: fall back to the smallest circumball of a
    # subset that still has every support point on or inside its boundary
    best = None
    for size in range(1, len(support)):
        for drop in range(len(support)):
            subset = [p for i, p in enumerate(support) if i != drop][:size]
            cand = _circumball(subset)
            if cand is None:
                continue
            if all(dist_sq(cand[0], p) <= cand[1] for p in support):
                if best is None or cand[1] < best[1]:
                    best = cand
    return best


def _welzl(points: list[Vector], support: list[Vector], dim: int):
    if not points or len(support) == dim + 1:
        return _ball_from_support(support)
    p = points[-1]
    ball = _welzl(points[:-1], support, dim)
    if ball is not None and dist_sq(ball[0], p) <= ball[1]:
        return ball
    return _welzl(points[:-1], support + [p], dim)


def chebyshev_ball(points: Iterable[Vector]) -> tuple[Vector, Fraction]:
    """Smallest enclosing Euclidean ball as (center, squared radius).

    >>> chebyshev_ball([vec([0]), vec([1]), vec([2])])
    ((Fraction(1, 1),), Fraction(1, 1))
    """
    pts = []
    for p in points:
        p = vec(p)
        if p not in pts:
            pts.append(p)
    if not pts:
        raise ValueError("chebyshev_ball needs at least one point")
    if len(pts) == 1:
        return pts[0], Fraction(0)
    order = list(pts)
    random.Random(0).shuffle(order)
    ball = _welzl(order, [], len(pts[0]))
    assert ball is not None
    return ball


# --------------------------------------------------------------------------
# serialization


def rational_to_json(q) -> dict:
    q = Q(q)
    return {"num": str(q.numerator), "den": str(q.denominator)}


def rational_from_json(obj) -> Fraction:
    if isinstance(obj, dict):
        return Fraction(int(obj["num"]), int(obj["den"]))
    if isinstance(obj, (int, str)):
        return Fraction(obj)
    raise TypeError(f"cannot read a rational from {obj!r}")


def vector_to_json(a: Vector) -> list:
    return [rational_to_json(x) for x in a]


def vector_from_json(obj) -> Vector:
    return tuple(rational_from_json(x) for x in obj)


def matrix_to_json(M: Matrix) -> list:
    return [vector_to_json(r) for r in M]


def matrix_from_json(obj) -> Matrix:
    return mat(vector_from_json(r) for r in obj)


def rational_str(q) -> str:
    q = Q(q)
    return f"{q.numerator}/{q.denominator}"
