import itertools
import math
from fractions import Fraction as F

import pytest
from hypothesis import given, strategies as st

from ghalab import exact_arith as ea
from ghalab.exact_arith import Dyadic, SingularMatrixError, round_to_dyadic

rationals = st.fractions(min_value=-4, max_value=4, max_denominator=1000)


def int_det(M):
    """Bareiss fraction-free determinant of an integer matrix."""
    A = [list(r) for r in M]
    n, sign, prev = len(A), 1, 1
    for k in range(n - 1):
        if A[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if A[i][k] != 0), None)
            if swap is None:
                return 0
            A[k], A[swap] = A[swap], A[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                A[i][j] = (A[i][j] * A[k][k] - A[i][k] * A[k][j]) // prev
        prev = A[k][k]
    return sign * A[n - 1][n - 1] if n else 1


# --------------------------------------------------------------------------
# dyadics


def test_round_examples():
    assert round_to_dyadic(F(1, 3), 2) == Dyadic(1, 2)
    # exact ties go down
    assert round_to_dyadic(F(1, 8), 2) == Dyadic(0, 2)
    assert round_to_dyadic(F(-1, 8), 2) == Dyadic(-1, 2)
    assert round_to_dyadic(F(3, 4), 0) == Dyadic(1, 0)


@given(rationals, st.integers(0, 40))
def test_round_error_is_half_a_step(v, n):
    d = round_to_dyadic(v, n)
    assert d.n == n and d.in_grid(n)
    assert abs(d.value - v) <= F(1, 2 ** (n + 1))


def test_dyadic_rejects_negative_precision():
    with pytest.raises(ValueError):
        Dyadic(1, -1)
    with pytest.raises(ValueError):
        round_to_dyadic(1, -2)


@given(st.fractions(min_value=F(1, 10 ** 9), max_value=10, max_denominator=10 ** 9))
def test_min_exponent_is_minimal(b):
    r = ea.min_exponent(b)
    assert F(1, 2 ** r) <= b
    assert r == 0 or F(1, 2 ** (r - 1)) > b


def test_ceil_log4():
    assert [ea.ceil_log4(d) for d in (1, 2, 4, 5, 16, 17)] == [0, 1, 1, 2, 2, 3]


@given(st.fractions(min_value=0, max_value=100, max_denominator=10 ** 4))
def test_sqrt_bounds_bracket(q):
    lo, hi = ea.sqrt_bounds(q, bits=40)
    assert lo * lo <= q <= hi * hi
    assert hi - lo <= F(1, 2 ** 40)


def test_exact_sqrt():
    assert ea.exact_sqrt(F(9, 64)) == F(3, 8)
    with pytest.raises(ValueError):
        ea.exact_sqrt(F(2))


def test_floats_rejected():
    with pytest.raises(TypeError):
        ea.Q(0.5)


# --------------------------------------------------------------------------
# decision procedures


def test_ldlt_examples():
    assert ea.ldlt_posdef_check(ea.mat([[2, 1], [1, 2]]))
    assert not ea.ldlt_posdef_check(ea.mat([[F(1, 2), F(1, 2)], [F(1, 2), F(1, 2)]]))
    assert not ea.ldlt_posdef_check(ea.mat([[0, 1], [1, 0]]))
    with pytest.raises(ea.DimensionError):
        ea.ldlt_posdef_check(ea.mat([[1, 2], [0, 1]]))


@st.composite
def symmetric_int(draw, max_n=5):
    n = draw(st.integers(1, max_n))
    M = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            M[i][j] = M[j][i] = draw(st.integers(-4, 4))
    if draw(st.booleans()):
        # push toward definiteness so both answers occur
        for i in range(n):
            M[i][i] += draw(st.integers(0, 10))
    return M


@given(symmetric_int())
def test_ldlt_matches_leading_minors(M):
    expected = all(int_det([r[:k] for r in M[:k]]) > 0 for k in range(1, len(M) + 1))
    assert ea.ldlt_posdef_check(ea.mat(M)) == expected


@given(symmetric_int(max_n=4))
def test_psd_matches_principal_minors(M):
    n = len(M)
    expected = all(
        int_det([[M[i][j] for j in idx] for i in idx]) >= 0
        for k in range(1, n + 1) for idx in itertools.combinations(range(n), k)
    )
    assert ea.psd_check(ea.mat(M)) == expected


@st.composite
def square_rational(draw, n=None):
    n = n or draw(st.integers(1, 4))
    return ea.mat([[draw(st.fractions(min_value=-3, max_value=3, max_denominator=7)) for _ in range(n)]
                   for _ in range(n)])


@given(square_rational())
def test_solve_exact_or_singular(M):
    n = len(M)
    B = tuple((F(i + 1), F(-i)) for i in range(n))
    try:
        X = ea.solve_exact(M, B)
    except SingularMatrixError:
        assert ea.rank(M) < n
        return
    assert ea.matmul(M, X) == B


def test_inverse_singular():
    with pytest.raises(SingularMatrixError):
        ea.inverse(ea.mat([[1, 2], [2, 4]]))


def test_rowspace_kernel_example():
    kernel, rows, P = ea.rowspace_and_kernel(ea.mat([[F(3, 5), F(4, 5)]]))
    assert kernel == [(F(4), F(-3))]
    assert rows == [(F(3), F(4))]
    assert P == ea.mat([[F(9, 25), F(12, 25)], [F(12, 25), F(16, 25)]])


@given(st.integers(1, 3), st.integers(2, 4), st.data())
def test_projector_properties(m, N, data):
    A = ea.mat([[data.draw(st.integers(-3, 3)) for _ in range(N)] for _ in range(m)])
    if not any(x for r in A for x in r):
        with pytest.raises(ea.InvalidOperatorError):
            ea.rowspace_and_kernel(A)
        return
    kernel, rows, P = ea.rowspace_and_kernel(A)
    r = ea.rank(A)
    assert len(kernel) == N - r and len(rows) == r
    for k in kernel:
        assert not any(ea.matvec(A, k))
        assert k[next(i for i, x in enumerate(k) if x)] > 0
        assert math.gcd(*(int(x) for x in k)) == 1
    assert ea.matmul(P, P) == P and ea.is_symmetric(P)
    assert ea.matmul(P, ea.transpose(A)) == ea.transpose(A)


def test_chebyshev_examples():
    assert ea.chebyshev_ball([ea.vec([0]), ea.vec([1]), ea.vec([2])]) == ((F(1),), F(1))
    c, r = ea.chebyshev_ball([ea.vec([0, 0]), ea.vec([0, F(3, 4)])])
    assert c == (0, F(3, 8)) and r == F(9, 64)
    # right triangle: the hypotenuse midpoint
    c, r = ea.chebyshev_ball([ea.vec(p) for p in ([0, 0], [2, 0], [0, 2])])
    assert c == (1, 1) and r == 2


@given(st.lists(st.tuples(st.integers(-6, 6), st.integers(-6, 6)), min_size=1, max_size=6, unique=True))
def test_chebyshev_matches_brute_force(points):
    pts = [ea.vec(p) for p in points]
    center, r_sq = ea.chebyshev_ball(pts)
    assert all(ea.dist_sq(center, p) <= r_sq for p in pts)
    # brute force over balls spanned by 2 or 3 points
    best = None
    for k in (1, 2, 3):
        for sub in itertools.combinations(pts, k):
            if k == 1:
                cand = (sub[0], F(0))
            elif k == 2:
                mid = ea.scale(F(1, 2), ea.add(*sub))
                cand = (mid, ea.dist_sq(mid, sub[0]))
            else:
                (ax, ay), (bx, by), (cx, cy) = sub
                d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by))
                if d == 0:
                    continue
                ux = ((ax * ax + ay * ay) * (by - cy) + (bx * bx + by * by) * (cy - ay) + (cx * cx + cy * cy) * (ay - by)) / d
                uy = ((ax * ax + ay * ay) * (cx - bx) + (bx * bx + by * by) * (ax - cx) + (cx * cx + cy * cy) * (bx - ax)) / d
                cand = ((ux, uy), ea.dist_sq((ux, uy), sub[0]))
            if all(ea.dist_sq(cand[0], p) <= cand[1] for p in pts):
                if best is None or cand[1] < best:
                    best = cand[1]
    assert r_sq == best


def test_operator_norm_lower_bound():
    M = ea.mat([[3, 0], [0, 1]])
    assert ea.operator_norm_lower_sq(M, ea.default_probes(M)) == 9
    M = ea.mat([[1, 1], [1, 1]])
    assert ea.operator_norm_lower_sq(M, ea.default_probes(M)) == 4


@given(square_rational())
def test_probe_bound_below_frobenius(M):
    assert ea.operator_norm_lower_sq(M, ea.default_probes(M)) <= ea.frobenius_sq(M)


# --------------------------------------------------------------------------
# serialization


@given(rationals)
def test_rational_json_roundtrip(q):
    assert ea.rational_from_json(ea.rational_to_json(q)) == q
    assert ea.rational_from_json(ea.rational_str(q)) == q


def test_matrix_json_roundtrip():
    M = ea.mat([[F(1, 3), -2], [0, F(7, 9)]])
    assert ea.matrix_from_json(ea.matrix_to_json(M)) == M
    assert ea.Dyadic.from_json(Dyadic(-5, 3).to_json()) == Dyadic(-5, 3)
