"""Random benchmark instances and the plain-text instance file format.

File format (whitespace separated, ``#`` starts a comment, blank lines ignored)::

    m n N
    u_1 u_2 ... u_m
    a_11 ... a_1n
    ...
    a_m1 ... a_mn

Floats are written with ``repr`` so that reading a written file gives back
bit-identical values.

Random streams
--------------
Instances are drawn with NumPy's PCG64 bit generator seeded through
``SeedSequence``. With ``base = (GENERATOR_VERSION, seed, m, n, kind)`` the
experiment matrix comes from ``base + (0, attempt)`` and the caps from
``base + (1,)``. ``attempt`` starts at 0 and is bumped only when a draw of A
is rank deficient.
"""

from __future__ import annotations

import enum
import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .criteria import DesignProblem
from .errors import ParseError, RankError

GENERATOR_VERSION = 1
MAX_REDRAWS = 100


class Kind(enum.Enum):
    INDEPENDENT = "independent"
    CORRELATED = "correlated"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        for member in cls:
            if member.value.startswith(key) and key:
                return member
        raise ValueError(f"unknown instance kind {value!r}")


@dataclass(frozen=True)
class InstanceSpec:
    m: int
    n: int
    kind: Kind = Kind.INDEPENDENT
    seed: int = 1
    rho: float = 0.9

    def __post_init__(self):
        object.__setattr__(self, "kind", Kind.parse(self.kind))
        if not 1 <= self.n <= self.m:
            raise ValueError(f"need 1 <= n <= m, got m={self.m}, n={self.n}")
        if not 0.0 <= self.rho < 1.0:
            raise ValueError("rho must lie in [0, 1)")

    @property
    def budget(self):
        return (3 * self.n) // 2

    @property
    def cap_max(self):
        return max(1, self.budget // 3)


def _kind_code(kind):
    return 0 if kind is Kind.INDEPENDENT else 1


def _stream(key):
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(key)))


def correlation_matrix(n, rho):
    idx = np.arange(n)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def generate(spec):
    """Benchmark instance: random A, budget floor(3n/2), caps uniform on 1..max(1, floor(N/3))."""
    base = [GENERATOR_VERSION, int(spec.seed), spec.m, spec.n, _kind_code(spec.kind)]
    N = spec.budget

    if spec.kind is Kind.CORRELATED:
        factor = np.linalg.cholesky(correlation_matrix(spec.n, spec.rho))
    for attempt in range(MAX_REDRAWS):
        rng = _stream(base + [0, attempt])
        Z = rng.standard_normal((spec.m, spec.n))
        A = Z if spec.kind is Kind.INDEPENDENT else Z @ factor.T
        if np.linalg.matrix_rank(A) == spec.n:
            break
    else:
        raise RankError(f"could not draw a full-rank {spec.m}x{spec.n} matrix")

    u = _stream(base + [1]).integers(1, spec.cap_max, size=spec.m, endpoint=True)
    return DesignProblem(A, N, u)


def format_instance(problem):
    lines = [f"{problem.m} {problem.n} {problem.N}"]
    lines.append(" ".join(str(int(v)) for v in problem.u_global))
    for row in problem.A:
        lines.append(" ".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_instance(problem, path):
    Path(path).write_text(format_instance(problem))


def fingerprint(text):
    if isinstance(text, str):
        text = text.encode()
    return hashlib.sha256(text).hexdigest()


def parse_instance(text):
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].split()
        if content:
            rows.append((lineno, content))
    if not rows:
        raise ParseError("empty instance file")

    lineno, header = rows[0]
    if len(header) != 3:
        raise ParseError(f"header needs 3 integers 'm n N', got {len(header)} fields", line=lineno)
    m, n, N = (_int(tok, lineno, name) for tok, name in zip(header, ("m", "n", "N")))
    if m < 1 or n < 1 or N < 1:
        raise ParseError("m, n and N must be positive", line=lineno)
    if len(rows) != m + 2:
        raise ParseError(
            f"expected {m + 2} non-empty lines (header, caps, {m} rows), got {len(rows)}",
            line=rows[-1][0],
        )

    lineno, caps = rows[1]
    if len(caps) != m:
        raise ParseError(f"expected {m} caps, got {len(caps)}", line=lineno)
    u = np.array([_int(tok, lineno, f"u[{i}]") for i, tok in enumerate(caps)], dtype=np.int64)

    A = np.empty((m, n))
    for i, (lineno, toks) in enumerate(rows[2:]):
        if len(toks) != n:
            raise ParseError(f"row {i} needs {n} entries, got {len(toks)}", line=lineno)
        for j, tok in enumerate(toks):
            try:
                val = float(tok)
            except ValueError:
                raise ParseError(f"not a number: {tok!r}", line=lineno, field=f"A[{i},{j}]") from None
            if not math.isfinite(val):
                raise ParseError(f"non-finite entry {tok!r}", line=lineno, field=f"A[{i},{j}]")
            A[i, j] = val
    if m < n:
        raise ParseError(f"need m >= n, got m={m}, n={n}", line=rows[0][0])
    try:
        return DesignProblem(A, N, u)
    except RankError:
        raise
    except ValueError as exc:
        raise ParseError(str(exc)) from exc


def read_instance(path):
    return parse_instance(Path(path).read_text())


def _int(tok, line, name):
    try:
        return int(tok)
    except ValueError:
        raise ParseError(f"expected an integer, got {tok!r}", line=line, field=name) from None
