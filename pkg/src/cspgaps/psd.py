"""Moment and covariance matrices with exact PSD certificates.

psd_exact is a decision procedure: LDL^T elimination with symmetric
max-diagonal pivoting over exact rationals.  A matrix is PSD iff every pivot
is >= 0 and every zero-diagonal residual row is identically zero; otherwise a
rational witness vector v with v^T A v < 0 is produced by lifting the residual
witness back through the elimination.  psd_float (dense symmetric eigensolver)
is kept strictly as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import LocalityError
from .pseudodist import LocalDistributionFamily
from .rational import Frac, ZERO, rat_str

ONE_LABEL = ("1",)


@dataclass
class SymmetricRationalMatrix:
    labels: list
    rows: list

    @property
    def dim(self) -> int:
        return len(self.labels)

    def entry(self, i: int, j: int) -> Frac:
        return self.rows[i][j]

    def scaled(self, c) -> "SymmetricRationalMatrix":
        c = Frac(c)
        return SymmetricRationalMatrix(self.labels, [[v * c for v in row] for row in self.rows])

    def plus(self, other, coeff=1) -> "SymmetricRationalMatrix":
        c = Frac(coeff)
        return SymmetricRationalMatrix(
            self.labels,
            [[a + c * b for a, b in zip(ra, rb)] for ra, rb in zip(self.rows, other.rows)])

    def first_difference(self, other):
        for i in range(self.dim):
            for j in range(self.dim):
                if self.rows[i][j] != other.rows[i][j]:
                    return (self.labels[i], self.labels[j], self.rows[i][j], other.rows[i][j])
        return None

    def quadratic_form(self, v) -> Frac:
        total = ZERO
        for i, vi in enumerate(v):
            if vi == 0:
                continue
            row = self.rows[i]
            for j, vj in enumerate(v):
                if vj != 0:
                    total += vi * vj * row[j]
        return total

    def to_numpy(self) -> np.ndarray:
        arr = np.array([[float(v) for v in row] for row in self.rows], dtype=float)
        if not np.isfinite(arr).all():
            raise ValueError("matrix entry not representable as a finite double")
        return arr

    def to_jsonable(self):
        return {
            "labels": [list(l) if isinstance(l, tuple) else l for l in self.labels],
            "entries": [[rat_str(v) for v in row] for row in self.rows],
        }


def _zero_matrix(labels):
    d = len(labels)
    return SymmetricRationalMatrix(labels, [[ZERO] * d for _ in range(d)])


def _variable_labels(n: int, q: int):
    return [(i, a) for i in range(n) for a in range(q)]


def _event_block(F: LocalDistributionFamily, X, alpha, i: int, j: int):
    """q x q table of D_{ {i,j} u X }(x_i=a ^ x_j=b ^ X=alpha), exact."""
    S = tuple(sorted(set((i, j)) | set(X)))
    d = F.dist(S) if F.kind == "unconditional" else F._base_dist(S)
    pos = {v: idx for idx, v in enumerate(S)}
    xpos = [(pos[v], a) for v, a in zip(tuple(sorted(X)), alpha)]
    q = d.q
    block = [[ZERO] * q for _ in range(q)]
    pi, pj = pos[i], pos[j]
    for assign, p in zip(d.assignments(), d.probs):
        if p == 0:
            continue
        if all(assign[pp] == a for pp, a in xpos):
            block[assign[pi]][assign[pj]] += p
    return block


def moment_matrix(F: LocalDistributionFamily, X=(), alpha=()) -> SymmetricRationalMatrix:
    """(nq+1)-dimensional moment matrix of the family conditioned-by-weighting
    on X = alpha: the (0,0) entry is the probability of the conditioning event
    itself (1 when X is empty)."""
    if F.kind != "unconditional":
        raise ValueError("pass the unconditional family plus explicit (X, alpha)")
    X = tuple(sorted(X))
    alpha = tuple(alpha)
    n, q = F.instance.n, F.instance.predicate.q
    if len(X) > F.radius - 2:
        raise LocalityError(f"|X| = {len(X)} exceeds radius budget r-2 = {F.radius - 2}")
    labels = [ONE_LABEL] + _variable_labels(n, q)
    rows = [[ZERO] * len(labels) for _ in labels]
    dx = F.dist(X).prob_of(dict(zip(X, alpha))) if X else Frac(1)
    rows[0][0] = dx
    singles = []
    for i in range(n):
        block = _event_block(F, X, alpha, i, i)
        singles.append([block[a][a] for a in range(q)])
    for i in range(n):
        for a in range(q):
            rows[0][1 + i * q + a] = rows[1 + i * q + a][0] = singles[i][a]
    for i in range(n):
        for j in range(i, n):
            block = _event_block(F, X, alpha, i, j) if j > i else None
            for a in range(q):
                for b in range(q):
                    if j == i:
                        v = singles[i][a] if a == b else ZERO
                    else:
                        v = block[a][b]
                    rows[1 + i * q + a][1 + j * q + b] = v
                    rows[1 + j * q + b][1 + i * q + a] = v
    return SymmetricRationalMatrix(labels, rows)


def covariance_matrix(F: LocalDistributionFamily, X=(), alpha=()) -> SymmetricRationalMatrix:
    """nq-dimensional covariance of the conditional distributions; identically
    zero when the conditioning event has probability zero."""
    if F.kind != "unconditional":
        raise ValueError("pass the unconditional family plus explicit (X, alpha)")
    X = tuple(sorted(X))
    alpha = tuple(alpha)
    n, q = F.instance.n, F.instance.predicate.q
    if len(X) > F.radius - 2:
        raise LocalityError(f"|X| = {len(X)} exceeds radius budget r-2 = {F.radius - 2}")
    labels = _variable_labels(n, q)
    dx = F.dist(X).prob_of(dict(zip(X, alpha))) if X else Frac(1)
    if dx == 0:
        return _zero_matrix(labels)
    rows = [[ZERO] * len(labels) for _ in labels]
    singles = []
    for i in range(n):
        block = _event_block(F, X, alpha, i, i)
        singles.append([block[a][a] / dx for a in range(q)])
    for i in range(n):
        for j in range(i, n):
            block = _event_block(F, X, alpha, i, j) if j > i else None
            for a in range(q):
                for b in range(q):
                    if i == j:
                        joint = singles[i][a] if a == b else ZERO
                    else:
                        joint = block[a][b] / dx
                    v = joint - singles[i][a] * singles[j][b]
                    rows[i * q + a][j * q + b] = v
                    rows[j * q + b][i * q + a] = v
    return SymmetricRationalMatrix(labels, rows)


def pair_covariance_block(F: LocalDistributionFamily, u: int, v: int):
    """q x q exact covariance block between two variables under the family
    (conditional families use their own members)."""
    q = F.instance.predicate.q
    du = F.dist((u,))
    dv = F.dist((v,))
    duv = F.dist(tuple(sorted((u, v))))
    block = [[ZERO] * q for _ in range(q)]
    scope = duv.scope
    pu, pv = scope.index(u), scope.index(v)
    for assign, p in zip(duv.assignments(), duv.probs):
        if p != 0:
            block[assign[pu]][assign[pv]] += p
    for a in range(q):
        for b in range(q):
            block[a][b] -= du.prob((a,)) * dv.prob((b,))
    return block


# ---------------------------------------------------------------------------
# Exact PSD decision


@dataclass
class PsdCertificate:
    verdict: str                       # "psd" | "not_psd"
    pivots: tuple = ()
    witness: list | None = None        # rational vector with v^T A v < 0
    witness_value: Frac | None = None

    @property
    def is_psd(self) -> bool:
        return self.verdict == "psd"

    def to_jsonable(self):
        out = {"verdict": self.verdict, "pivots": [rat_str(p) for p in self.pivots]}
        if self.witness is not None:
            out["witness"] = [rat_str(v) for v in self.witness]
            out["witness_value"] = rat_str(self.witness_value)
        return out


def psd_exact(A: SymmetricRationalMatrix) -> PsdCertificate:
    """Exact LDL^T with symmetric max-diagonal pivoting.

    PSD iff every pivot is nonnegative and every zero-pivot residual row is
    identically zero.  not_psd certificates carry a rational vector whose
    quadratic form is verified negative against the original matrix.
    """
    n = A.dim
    M = {i: {j: A.rows[i][j] for j in range(n)} for i in range(n)}
    active = list(range(n))
    pivots = []
    steps = []  # (pivot index, {j: M[j][p]/d}) in elimination order

    def lift(residual_vec):
        v = dict(residual_vec)
        for p, mults in reversed(steps):
            v[p] = -sum((mults[j] * vj for j, vj in v.items() if j in mults), ZERO)
        full = [v.get(i, ZERO) for i in range(n)]
        value = A.quadratic_form(full)
        if value >= 0:
            raise AssertionError("witness lifting produced a nonnegative form")
        return PsdCertificate(verdict="not_psd", pivots=tuple(pivots),
                              witness=full, witness_value=value)

    while active:
        p = max(active, key=lambda i: (M[i][i], -i))
        dmax = M[p][p]
        if dmax > 0:
            mults = {j: M[j][p] / dmax for j in active if j != p and M[j][p] != 0}
            pivots.append(dmax)
            steps.append((p, mults))
            active.remove(p)
            col = {j: M[j][p] for j in active}
            for i in active:
                ci = col[i]
                if ci == 0:
                    continue
                Mi = M[i]
                for j in active:
                    if col[j] != 0:
                        Mi[j] -= ci * col[j] / dmax
            continue
        neg = [i for i in active if M[i][i] < 0]
        if neg:
            return lift({neg[0]: Frac(1)})
        # all residual diagonals are zero: any off-diagonal kills PSDness
        for i in active:
            for j in active:
                if j != i and M[i][j] != 0:
                    sgn = Frac(1) if M[i][j] > 0 else Frac(-1)
                    return lift({i: Frac(1), j: -sgn})
        pivots.extend([ZERO] * len(active))
        active = []
    return PsdCertificate(verdict="psd", pivots=tuple(pivots))


@dataclass
class FloatPsdVerdict:
    verdict: str
    lambda_min: float
    tolerance: float

    @property
    def is_psd(self) -> bool:
        return self.verdict == "psd"

    def to_jsonable(self):
        return {"verdict": self.verdict, "lambda_min": self.lambda_min,
                "tolerance": self.tolerance}


def psd_float(A: SymmetricRationalMatrix, tol: float = 1e-9) -> FloatPsdVerdict:
    """Smallest-eigenvalue estimate from a dense symmetric eigensolver; psd iff
    lambda_min >= -tol * max|entry|.  Cross-check only, never authoritative."""
    arr = A.to_numpy()
    if arr.size == 0:
        return FloatPsdVerdict(verdict="psd", lambda_min=0.0, tolerance=0.0)
    scale = float(np.abs(arr).max())
    eff = tol * scale if scale > 0 else tol
    lmin = float(np.linalg.eigvalsh(arr).min())
    return FloatPsdVerdict(verdict="psd" if lmin >= -eff else "not_psd",
                           lambda_min=lmin, tolerance=eff)


# ---------------------------------------------------------------------------
# Equivalence and decomposition checks


@dataclass
class EquivalenceReport:
    ok: bool
    moment_verdict: str
    covariance_verdict: str
    details: dict = field(default_factory=dict)

    def to_jsonable(self):
        return {"ok": self.ok, "moment": self.moment_verdict,
                "covariance": self.covariance_verdict, **self.details}


def schur_equivalence_check(F: LocalDistributionFamily, X=(), alpha=()) -> EquivalenceReport:
    """The moment matrix and the covariance matrix must agree on PSDness."""
    cm = psd_exact(moment_matrix(F, X, alpha))
    cs = psd_exact(covariance_matrix(F, X, alpha))
    return EquivalenceReport(ok=cm.verdict == cs.verdict,
                             moment_verdict=cm.verdict, covariance_verdict=cs.verdict)


@dataclass
class DecompositionReport:
    ok: bool
    terms: int
    mismatch: tuple | None = None

    def to_jsonable(self):
        out = {"ok": self.ok, "terms": self.terms}
        if self.mismatch is not None:
            i, j, lhs, rhs = self.mismatch
            out["mismatch"] = {"row": list(i), "col": list(j),
                               "lhs": rat_str(lhs), "rhs": rat_str(rhs)}
        return out


def conditioning_decomposition_check(F: LocalDistributionFamily, X, T, alpha)\
        -> DecompositionReport:
    """Conditioning on X = alpha equals the conditional mixture of the finer
    conditionings on T = beta (beta ranging over extensions of alpha with
    positive probability): verified entry-by-entry in exact rationals on the
    normalized (conditional) moment matrices."""
    X = tuple(sorted(X))
    T = tuple(sorted(T))
    alpha = tuple(alpha)
    if not set(X) <= set(T):
        raise ValueError("X must be a subset of T")
    dx = F.dist(X).prob_of(dict(zip(X, alpha))) if X else Frac(1)
    if dx == 0:
        raise ValueError("conditioning event has probability zero")
    lhs = moment_matrix(F, X, alpha).scaled(Frac(1) / dx)
    dT = F.dist(T)
    xpos = [T.index(v) for v in X]
    rhs = _zero_matrix(lhs.labels)
    terms = 0
    for beta in dT.assignments():
        if any(beta[p] != a for p, a in zip(xpos, alpha)):
            continue
        w = dT.prob(beta)
        if w == 0:
            continue
        terms += 1
        weight = w / dx  # D_{T | X=alpha}(beta)
        term = moment_matrix(F, T, beta).scaled(weight / w)
        rhs = rhs.plus(term)
    diff = lhs.first_difference(rhs)
    return DecompositionReport(ok=diff is None, terms=terms, mismatch=diff)
