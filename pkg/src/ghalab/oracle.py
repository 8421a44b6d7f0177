"""Coordinatewise dyadic access to a training set.

A query names an element by its rank in the true lexicographic order, an axis
("x" or "y"), a 1-based coordinate and a precision n. The answer is a dyadic
k*2**-n within 2**-n of the true coordinate. Every answer is appended to a log
that can be written as JSONL and replayed bit for bit.
"""

from __future__ import annotations

import json
import threading
from fractions import Fraction
from typing import Callable, Iterable, NamedTuple

from .exact_arith import Dyadic, round_to_dyadic
from .problems import TrainingSet, mix64

AXES = ("x", "y")


class OracleProtocolError(ValueError):
    pass


class QueryBudgetExceeded(RuntimeError):
    pass


class QueryKey(NamedTuple):
    k: int
    axis: str
    i: int
    n: int


class LogEntry(NamedTuple):
    seq: int
    key: QueryKey
    ans: Dyadic

    def to_json(self) -> dict:
        k = self.key
        return {"seq": self.seq, "k": k.k, "axis": k.axis, "i": k.i, "n": k.n, "ans": self.ans.to_json()}

    @classmethod
    def from_json(cls, obj) -> "LogEntry":
        key = QueryKey(int(obj["k"]), obj["axis"], int(obj["i"]), int(obj["n"]))
        return cls(int(obj["seq"]), key, Dyadic.from_json(obj["ans"]))


class QueryLog:
    """Append-only record of (sequence number, key, answer)."""

    def __init__(self, entries: Iterable[LogEntry] = ()):
        self._entries: list[LogEntry] = list(entries)
        self._lock = threading.Lock()

    def append(self, key: QueryKey, ans: Dyadic) -> LogEntry:
        with self._lock:
            entry = LogEntry(len(self._entries), key, ans)
            self._entries.append(entry)
            return entry

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(list(self._entries))

    @property
    def entries(self) -> tuple:
        return tuple(self._entries)

    @property
    def max_precision(self) -> int:
        return max((e.key.n for e in self._entries), default=0)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e.to_json(), sort_keys=True) + "\n" for e in self._entries)

    @classmethod
    def from_jsonl(cls, text: str) -> "QueryLog":
        return cls(LogEntry.from_json(json.loads(line)) for line in text.splitlines() if line.strip())

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_jsonl())

    @classmethod
    def read(cls, path) -> "QueryLog":
        with open(path) as fh:
            return cls.from_jsonl(fh.read())


class Oracle:
    """Base class: bounds checking, budget enforcement and logging.

    Subclasses implement `_answer(key) -> Dyadic`.
    """

    def __init__(self, ell: int, N: int, m: int, budget: int | None = None):
        self.ell, self.N, self.m = ell, N, m
        self.budget = budget
        self.log = QueryLog()

    def check_key(self, key: QueryKey) -> None:
        if key.axis not in AXES:
            raise OracleProtocolError(f"axis must be 'x' or 'y', got {key.axis!r}")
        dim = self.N if key.axis == "x" else self.m
        if not (1 <= key.k <= self.ell and 1 <= key.i <= dim and key.n >= 0):
            raise OracleProtocolError(f"key out of range: {key}")

    def query(self, k: int, axis: str, i: int, n: int) -> Dyadic:
        key = QueryKey(k, axis, i, n)
        self.check_key(key)
        if self.budget is not None and len(self.log) >= self.budget:
            raise QueryBudgetExceeded(f"query budget of {self.budget} exhausted")
        ans = self._answer(key)
        self.log.append(key, ans)
        return ans

    def read_vector(self, k: int, axis: str, n: int) -> tuple:
        """All coordinates of one element at precision n, as Fractions."""
        dim = self.N if axis == "x" else self.m
        return tuple(self.query(k, axis, i, n).value for i in range(1, dim + 1))

    def _answer(self, key: QueryKey) -> Dyadic:  # pragma: no cover - abstract
        raise NotImplementedError


def true_coordinate(T: TrainingSet, key: QueryKey) -> Fraction:
    pair = T[key.k - 1]
    return (pair.x if key.axis == "x" else pair.y)[key.i - 1]


class ExactOracle(Oracle):
    """Nearest-grid rounding of the true coordinate."""

    def __init__(self, T: TrainingSet, budget: int | None = None):
        super().__init__(len(T), T.N, T.m, budget)
        self._truth = T

    def _answer(self, key):
        return round_to_dyadic(true_coordinate(self._truth, key), key.n)


def jitter_offset(seed: int, key: QueryKey) -> Fraction:
    """Deterministic offset in [-2**-(n+1), 2**-(n+1)) keyed by (seed, key)."""
    u = mix64(seed, key.k, AXES.index(key.axis), key.i, key.n)
    return Fraction(2 * u - (1 << 64), 1 << 64) / (1 << (key.n + 1))


class JitterOracle(Oracle):
    """True value plus a seeded offset of at most half a grid step, then rounded.

    Offset and rounding each contribute at most 2**-(n+1), so the 2**-n
    contract holds while answers differ from the exact mode.
    """

    def __init__(self, T: TrainingSet, seed: int, budget: int | None = None):
        super().__init__(len(T), T.N, T.m, budget)
        self._truth = T
        self.seed = seed

    def _answer(self, key):
        return round_to_dyadic(true_coordinate(self._truth, key) + jitter_offset(self.seed, key), key.n)


class FunctionOracle(Oracle):
    """Answers computed by a callable; used by the adversary and adapters."""

    def __init__(self, answer: Callable[[QueryKey], Dyadic], ell: int, N: int, m: int,
                 budget: int | None = None):
        super().__init__(ell, N, m, budget)
        self._fn = answer

    def _answer(self, key):
        return self._fn(key)


class ReplayOracle(Oracle):
    """Answers only keys present in a recorded log."""

    def __init__(self, log: QueryLog, ell: int, N: int, m: int):
        super().__init__(ell, N, m)
        table: dict[QueryKey, Dyadic] = {}
        for entry in log:
            prev = table.setdefault(entry.key, entry.ans)
            if prev != entry.ans:
                raise OracleProtocolError(f"inconsistent log: {entry.key} answered twice differently")
        self._table = table

    def _answer(self, key):
        try:
            return self._table[key]
        except KeyError:
            raise OracleProtocolError(f"key not in the replayed log: {key}") from None


def replay(log: QueryLog, ell: int | None = None, N: int | None = None, m: int | None = None) -> ReplayOracle:
    """Oracle that reproduces a log. Shape defaults to what the log mentions."""
    entries = list(log)
    if ell is None:
        ell = max((e.key.k for e in entries), default=1)
    if N is None:
        N = max((e.key.i for e in entries if e.key.axis == "x"), default=1)
    if m is None:
        m = max((e.key.i for e in entries if e.key.axis == "y"), default=1)
    return ReplayOracle(log, ell, N, m)


def verify_contract(log: QueryLog, true_set: TrainingSet) -> bool:
    """Every answer lies on its grid and within 2**-n of the true coordinate."""
    for entry in log:
        key, ans = entry.key, entry.ans
        if key.k > len(true_set) or ans.n != key.n or not ans.in_grid(key.n):
            return False
        dim = true_set.N if key.axis == "x" else true_set.m
        if not 1 <= key.i <= dim:
            return False
        if abs(ans.value - true_coordinate(true_set, key)) > Fraction(1, 1 << key.n):
            return False
    return True


class SealedOracle:
    """Handle exposing only the query protocol and the set's shape.

    Any other attribute access is counted and refused, which is how tests
    check that trainers never look at the ground truth.
    """

    _public = ("query", "read_vector", "ell", "N", "m", "log")

    def __init__(self, inner: Oracle):
        object.__setattr__(self, "_inner", inner)
        object.__setattr__(self, "violations", 0)

    def __getattribute__(self, name):
        if name in ("_inner", "violations", "_public", "__class__", "__dict__"):
            return object.__getattribute__(self, name)
        if name in object.__getattribute__(self, "_public"):
            return getattr(object.__getattribute__(self, "_inner"), name)
        object.__setattr__(self, "violations", object.__getattribute__(self, "violations") + 1)
        raise AttributeError(f"sealed oracle does not expose {name!r}")

    def __setattr__(self, name, value):
        raise AttributeError("sealed oracle is read-only")
