"""Networks with exact rational weights.

Three representations share one interface (`eval`, `jacobian`, `to_json`):

* NeuralNet: a generic layered net. Hidden layers are affine maps followed by
  an activation on a chosen index set, and the output layer may read the input
  directly through a skip matrix (W_L h + R y + c).
* RBFNet: the interpolant y -> C phi(y) with phi_i(y) = 1/(|y - y_i|^2 + 1).
  It can be rewritten as a three-layer NeuralNet.
* AffineNet: y -> M y + b.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable

from . import exact_arith as ea
from .exact_arith import DimensionError, Matrix, SingularMatrixError, Vector

ACTIVATIONS = {
    "square": (lambda t: t * t, lambda t: 2 * t),
    "recip_shift": (lambda t: 1 / (t + 1), lambda t: -1 / (t + 1) ** 2),
    "identity": (lambda t: t, lambda t: Fraction(1)),
}


def _check_input(y: Vector, width: int) -> Vector:
    y = ea.vec(y)
    if len(y) != width:
        raise DimensionError(f"input has length {len(y)}, net expects {width}")
    return y


@dataclass(frozen=True)
class Layer:
    W: Matrix
    b: Vector
    activation: str
    active: tuple  # 0-based indices the activation is applied to

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation {self.activation!r} not in the catalog")
        if len(self.b) != len(self.W):
            raise DimensionError("bias length differs from layer width")
        if any(not 0 <= i < len(self.W) for i in self.active):
            raise DimensionError("activation index outside the layer")


@dataclass(frozen=True)
class NeuralNet:
    in_dim: int
    layers: tuple
    W_L: Matrix | None
    R: Matrix
    c: Vector

    def __post_init__(self):
        width = self.in_dim
        for layer in self.layers:
            if ea.shape(layer.W)[1] != width:
                raise DimensionError("layer dimensions do not chain")
            width = len(layer.W)
        if self.layers:
            if self.W_L is None or ea.shape(self.W_L)[1] != width:
                raise DimensionError("output weight does not match the last layer")
        if ea.shape(self.R)[1] != self.in_dim or len(self.R) != len(self.c):
            raise DimensionError("skip matrix does not match input/output")

    @property
    def out_dim(self) -> int:
        return len(self.c)

    def eval(self, y) -> Vector:
        y = _check_input(y, self.in_dim)
        h = y
        for layer in self.layers:
            z = list(ea.add(ea.matvec(layer.W, h), layer.b))
            f = ACTIVATIONS[layer.activation][0]
            for i in layer.active:
                z[i] = f(z[i])
            h = tuple(z)
        out = ea.add(ea.matvec(self.R, y), self.c)
        if self.layers:
            out = ea.add(out, ea.matvec(self.W_L, h))
        return out

    def jacobian(self, y) -> Matrix:
        y = _check_input(y, self.in_dim)
        h, Jh = y, ea.identity(self.in_dim)
        for layer in self.layers:
            z = ea.add(ea.matvec(layer.W, h), layer.b)
            Jz = ea.matmul(layer.W, Jh)
            f, df = ACTIVATIONS[layer.activation]
            active = set(layer.active)
            h = tuple(f(t) if i in active else t for i, t in enumerate(z))
            Jh = tuple(ea.scale(df(z[i]), row) if i in active else row for i, row in enumerate(Jz))
        if self.layers:
            return ea.mat_add(ea.matmul(self.W_L, Jh), self.R)
        return self.R

    def to_json(self) -> dict:
        return {
            "type": "layered",
            "in_dim": self.in_dim,
            "layers": [
                {"W": ea.matrix_to_json(l.W), "b": ea.vector_to_json(l.b),
                 "activation": l.activation, "active": list(l.active)}
                for l in self.layers
            ],
            "W_L": None if self.W_L is None else ea.matrix_to_json(self.W_L),
            "R": ea.matrix_to_json(self.R),
            "c": ea.vector_to_json(self.c),
        }


def phi(y: Vector, center: Vector) -> Fraction:
    return 1 / (ea.dist_sq(y, center) + 1)


@dataclass(frozen=True)
class RBFNet:
    centers: tuple
    C: Matrix  # out_dim x ell

    @property
    def in_dim(self) -> int:
        return len(self.centers[0])

    @property
    def out_dim(self) -> int:
        return len(self.C)

    def features(self, y) -> Vector:
        y = _check_input(y, self.in_dim)
        return tuple(phi(y, c) for c in self.centers)

    def eval(self, y) -> Vector:
        return ea.matvec(self.C, self.features(y))

    def jacobian(self, y) -> Matrix:
        y = _check_input(y, self.in_dim)
        grads = []
        for c in self.centers:
            d = ea.sub(y, c)
            w = -2 / (ea.norm_sq(d) + 1) ** 2
            grads.append(ea.scale(w, d))
        return ea.matmul(self.C, tuple(grads))

    def to_layered(self) -> NeuralNet:
        """The same map as square -> reciprocal-shift -> linear layers."""
        ell, m = len(self.centers), self.in_dim
        ones_col = tuple((Fraction(1),) for _ in range(ell))
        W1 = ea.kron(ones_col, ea.identity(m))
        b1 = tuple(-x for c in self.centers for x in c)
        W2 = ea.kron(ea.identity(ell), (tuple(Fraction(1) for _ in range(m)),))
        return NeuralNet(
            in_dim=m,
            layers=(
                Layer(W1, b1, "square", tuple(range(ell * m))),
                Layer(W2, ea.zeros(ell), "recip_shift", tuple(range(ell))),
            ),
            W_L=self.C,
            R=ea.zero_matrix(self.out_dim, m),
            c=ea.zeros(self.out_dim),
        )

    def to_json(self) -> dict:
        return {
            "type": "rbf",
            "centers": [ea.vector_to_json(c) for c in self.centers],
            "C": ea.matrix_to_json(self.C),
        }


@dataclass(frozen=True)
class AffineNet:
    M: Matrix
    b: Vector

    def __post_init__(self):
        if len(self.M) != len(self.b):
            raise DimensionError("bias length differs from output dimension")

    @property
    def in_dim(self) -> int:
        return ea.shape(self.M)[1]

    @property
    def out_dim(self) -> int:
        return len(self.b)

    def eval(self, y) -> Vector:
        return ea.add(ea.matvec(self.M, _check_input(y, self.in_dim)), self.b)

    def jacobian(self, y) -> Matrix:
        _check_input(y, self.in_dim)
        return self.M

    def to_layered(self) -> NeuralNet:
        return NeuralNet(in_dim=self.in_dim, layers=(), W_L=None, R=self.M, c=self.b)

    def to_json(self) -> dict:
        return {"type": "affine", "M": ea.matrix_to_json(self.M), "b": ea.vector_to_json(self.b)}


def constant_net(value: Vector, in_dim: int) -> AffineNet:
    return AffineNet(ea.zero_matrix(len(value), in_dim), ea.vec(value))


def rbf_system(ys: list[Vector]) -> Matrix:
    """R_ij = 1/(|y_j - y_i|^2 + 1)."""
    return tuple(tuple(phi(a, b) for b in ys) for a in ys)


def build_rbf(points: Iterable) -> RBFNet:
    """Exact interpolant through (x_i, y_i); C = X R^-1.

    >>> net = build_rbf([((0,), (0,)), ((1,), (1,))])
    >>> net.C
    ((Fraction(-2, 3), Fraction(4, 3)),)
    """
    pts = [(ea.vec(x), ea.vec(y)) for x, y in points]
    if not pts:
        raise ValueError("build_rbf needs at least one point")
    ys = [y for _, y in pts]
    if len(set(ys)) != len(ys):
        raise SingularMatrixError("duplicate centers make the interpolation matrix singular")
    R = rbf_system(ys)
    X_t = tuple(x for x, _ in pts)  # ell x N, i.e. X transposed
    C_t = ea.solve_exact(R, X_t)    # R is symmetric, so C^T = R^-1 X^T
    return RBFNet(tuple(ys), ea.transpose(C_t))


def evaluate(net, y) -> Vector:
    return net.eval(y)


def jacobian(net, y) -> Matrix:
    return net.jacobian(y)


def sup_distance_sq(net1, net2, M2: Iterable[Vector]) -> Fraction:
    pts = list(M2)
    if not pts:
        raise ValueError("evaluation set must be non-empty")
    return max(ea.dist_sq(net1.eval(y), net2.eval(y)) for y in pts)


def net_from_json(obj: dict):
    kind = obj["type"]
    if kind == "rbf":
        return RBFNet(tuple(ea.vector_from_json(c) for c in obj["centers"]), ea.matrix_from_json(obj["C"]))
    if kind == "affine":
        return AffineNet(ea.matrix_from_json(obj["M"]), ea.vector_from_json(obj["b"]))
    if kind == "layered":
        layers = tuple(
            Layer(ea.matrix_from_json(l["W"]), ea.vector_from_json(l["b"]), l["activation"], tuple(l["active"]))
            for l in obj["layers"]
        )
        W_L = None if obj["W_L"] is None else ea.matrix_from_json(obj["W_L"])
        return NeuralNet(int(obj["in_dim"]), layers, W_L, ea.matrix_from_json(obj["R"]), ea.vector_from_json(obj["c"]))
    raise ValueError(f"unknown net type {kind!r}")
