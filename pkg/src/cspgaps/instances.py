"""Random CSP instances, exact evaluation, brute-force optima, hypergraphs,
and the three constraint encodings (multilinear equalities, clause
inequalities, one-hot polynomials).

Generation uses a counter-based PRNG (SHA-256 over labeled counters), so an
instance is a pure function of (predicate, n, m, seed, flags), independent of
draw order and platform.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import product

from .errors import BudgetExceededError, UnsupportedFormError
from .predicates import Predicate
from .rational import Frac, ZERO, rat_str

import numpy as np


class CounterRng:
    """Stateless counter-based generator: each draw is keyed by an explicit
    label tuple, so independent streams never interact and parallel use is
    reproducible."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def u64(self, *labels) -> int:
        key = ("%d|" % self.seed + "|".join(str(x) for x in labels)).encode()
        return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")

    def below(self, bound: int, *labels) -> int:
        """Uniform integer in [0, bound) by rejection."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = (1 << 64) - ((1 << 64) % bound)
        nonce = 0
        while True:
            v = self.u64(*labels, nonce)
            if v < limit:
                return v % bound
            nonce += 1

    def rational_unit(self, resolution: int, *labels) -> Frac:
        """Uniform rational in [0,1) with the given denominator resolution."""
        return Frac(self.below(resolution, *labels), resolution)


@dataclass(frozen=True)
class Constraint:
    """One application of the predicate: negation pattern c and ordered scope S."""

    c: tuple
    scope: tuple

    def to_jsonable(self):
        return {"c": list(self.c), "S": list(self.scope)}


@dataclass
class Instance:
    predicate: Predicate
    n: int
    constraints: list
    seed: int
    allow_repeats: bool = False
    scope_sets: list = field(init=False)

    def __post_init__(self):
        for con in self.constraints:
            if len(con.scope) != self.predicate.k:
                raise ValueError("scope length must equal the predicate arity")
            if any(not 0 <= v < self.n for v in con.scope):
                raise ValueError("scope index out of range")
        self.scope_sets = [frozenset(con.scope) for con in self.constraints]

    @property
    def m(self) -> int:
        return len(self.constraints)

    def to_jsonable(self):
        return {
            "predicate": json.loads(self.predicate.to_json()),
            "n": self.n,
            "seed": self.seed,
            "flags": {"allow_repeats": self.allow_repeats},
            "constraints": [c.to_jsonable() for c in self.constraints],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_jsonable(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        obj = json.loads(text)
        P = Predicate(k=int(obj["predicate"]["k"]), q=int(obj["predicate"]["q"]),
                      table=tuple(int(v) for v in obj["predicate"]["table"]))
        cons = [Constraint(tuple(c["c"]), tuple(c["S"])) for c in obj["constraints"]]
        return cls(predicate=P, n=int(obj["n"]), constraints=cons, seed=int(obj["seed"]),
                   allow_repeats=bool(obj["flags"]["allow_repeats"]))


def random_instance(P: Predicate, n: int, m: int, seed: int, allow_repeats: bool = False) -> Instance:
    """m i.i.d. constraints: negation uniform over [q]^k, scope uniform over
    distinct-entry sequences (default) or over [n]^k (allow_repeats)."""
    if m < 0:
        raise ValueError("m must be nonnegative")
    if not allow_repeats and n < P.k:
        raise ValueError("n < k cannot host distinct-entry scopes")
    rng = CounterRng(seed)
    constraints = []
    for j in range(m):
        code = rng.below(P.q**P.k, "neg", j)
        c = []
        for _ in range(P.k):
            c.append(code % P.q)
            code //= P.q
        c.reverse()
        if allow_repeats:
            scope = tuple(rng.below(n, "scope", j, i) for i in range(P.k))
        else:
            pool = list(range(n))
            scope = []
            for i in range(P.k):
                pick = rng.below(n - i, "scope", j, i)
                scope.append(pool.pop(pick))
            scope = tuple(scope)
        constraints.append(Constraint(tuple(c), scope))
    return Instance(predicate=P, n=n, constraints=constraints, seed=seed, allow_repeats=allow_repeats)


def constraint_satisfied(P: Predicate, con: Constraint, x) -> int:
    shifted = tuple((x[v] + ci) % P.q for v, ci in zip(con.scope, con.c))
    return P.table[P.index(shifted)]


def satisfied_fraction(I: Instance, x) -> Frac:
    """Exact fraction of satisfied constraints.  Undefined (error) for m = 0."""
    if I.m == 0:
        raise ValueError("value undefined for an empty instance (1/m factor)")
    if len(x) != I.n:
        raise ValueError("assignment length mismatch")
    for xi in x:
        if not 0 <= xi < I.predicate.q:
            raise ValueError("assignment entry out of range")
    sat = sum(constraint_satisfied(I.predicate, con, x) for con in I.constraints)
    return Frac(sat, I.m)


def brute_force_optimum(I: Instance, cap: int = 1 << 20):
    """Exact maximum of the satisfied fraction over all q^n assignments, with a
    maximizing witness.  Refuses (with the required budget) beyond the cap."""
    if I.m == 0:
        raise ValueError("optimum undefined for an empty instance")
    q, n = I.predicate.q, I.n
    total = q**n
    if total > cap:
        raise BudgetExceededError(
            f"enumeration needs q^n = {total} > cap {cap}", required=total)
    codes = np.arange(total, dtype=np.int64)
    # digits[:, i] is the value of variable i (variable 0 least significant)
    digits = np.empty((total, n), dtype=np.int8)
    rem = codes.copy()
    for i in range(n):
        digits[:, i] = rem % q
        rem //= q
    table = np.asarray(I.predicate.table, dtype=np.int64)
    sat = np.zeros(total, dtype=np.int64)
    for con in I.constraints:
        idx = np.zeros(total, dtype=np.int64)
        for v, ci in zip(con.scope, con.c):
            idx = idx * q + (digits[:, v].astype(np.int64) + ci) % q
        sat += table[idx]
    best = int(sat.argmax())
    witness = tuple(int(d) for d in digits[best])
    return Frac(int(sat[best]), I.m), witness


@dataclass
class Hypergraph:
    """One edge per distinct unordered scope; multiplicity kept in the
    edge -> constraint-indices map."""

    n: int
    k: int
    edges: list          # sorted tuples of vertices, lexicographic order
    edge_constraints: list  # parallel list of constraint-index lists

    def __post_init__(self):
        self.edge_masks = [_mask(e) for e in self.edges]
        self.vertex_edges = [[] for _ in range(self.n)]
        for i, e in enumerate(self.edges):
            for v in e:
                self.vertex_edges[v].append(i)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def multiplicity(self, edge_index: int) -> int:
        return len(self.edge_constraints[edge_index])

    def remove_vertices(self, X) -> "Hypergraph":
        """Hypergraph minus a vertex set: vertices of X removed, edges
        truncated, edges contained in X dropped.  Vertex numbering and
        constraint indices are preserved."""
        Xs = set(X)
        edges, cons = [], []
        for e, cs in zip(self.edges, self.edge_constraints):
            stripped = tuple(v for v in e if v not in Xs)
            if stripped:
                edges.append(stripped)
                cons.append(list(cs))
        return Hypergraph(n=self.n, k=self.k, edges=edges, edge_constraints=cons)

    def to_jsonable(self):
        return {"n": self.n, "k": self.k,
                "edges": [list(e) for e in self.edges],
                "edge_constraints": [list(c) for c in self.edge_constraints]}


def _mask(vertices) -> int:
    m = 0
    for v in vertices:
        m |= 1 << v
    return m


def hypergraph_of(I: Instance) -> Hypergraph:
    by_scope = {}
    for j, con in enumerate(I.constraints):
        by_scope.setdefault(tuple(sorted(set(con.scope))), []).append(j)
    edges = sorted(by_scope)
    return Hypergraph(n=I.n, k=I.predicate.k, edges=list(edges),
                      edge_constraints=[by_scope[e] for e in edges])


def hypergraph_from_edges(n: int, edges, k: int | None = None) -> Hypergraph:
    """Hand-built hypergraph for tests/demos: one synthetic constraint per edge."""
    norm = [tuple(sorted(set(e))) for e in edges]
    if k is None:
        k = max((len(e) for e in norm), default=0)
    return Hypergraph(n=n, k=k, edges=norm, edge_constraints=[[i] for i in range(len(norm))])


# ---------------------------------------------------------------------------
# Encodings


def _poly_mul(p, factor):
    out = {}
    for mono, coeff in p.items():
        for mono2, coeff2 in factor.items():
            m = tuple(sorted(set(mono) | set(mono2)))
            c = out.get(m, ZERO) + coeff * coeff2
            if c == 0:
                out.pop(m, None)
            else:
                out[m] = c
    return out


def multilinear_constraint_poly(P: Predicate, con: Constraint):
    """P'(x_scope^(c)) - 1 as a monomial -> coefficient map (q = 2 only).

    P' is the unique multilinear polynomial agreeing with P on {0,1}^k; the
    negation pattern flips x to 1-x at positions with c_i = 1."""
    poly = {}
    for z in P.satisfying():
        term = {(): Frac(1)}
        for zi, ci, v in zip(z, con.c, con.scope):
            # position factor: x_v when z_i xor c_i = 1, else 1 - x_v
            if zi ^ ci:
                factor = {(v,): Frac(1)}
            else:
                factor = {(): Frac(1), (v,): Frac(-1)}
            term = _poly_mul(term, factor)
        for mono, coeff in term.items():
            c = poly.get(mono, ZERO) + coeff
            if c == 0:
                poly.pop(mono, None)
            else:
                poly[mono] = c
    poly[()] = poly.get((), ZERO) - 1
    if poly[()] == 0:
        del poly[()]
    return poly


def eval_poly(poly, x) -> Frac:
    total = ZERO
    for mono, coeff in poly.items():
        v = coeff
        for var in mono:
            v *= x[var]
        total += v
    return total


def eval_onehot_poly(poly, x, q) -> Frac:
    """Evaluate a polynomial in one-hot variables (i,a) at a [q]-assignment."""
    total = ZERO
    for mono, coeff in poly.items():
        v = coeff
        for (i, a) in mono:
            v *= 1 if x[i] == a else 0
        total += v
    return total


@dataclass
class ClauseInequality:
    """sum of coeff*x over coeffs, >= bound (after moving constants right)."""

    coeffs: dict  # var -> int
    bound: int

    def holds(self, x) -> bool:
        return sum(c * x[v] for v, c in self.coeffs.items()) >= self.bound

    def to_jsonable(self):
        return {"coeffs": {str(v): c for v, c in sorted(self.coeffs.items())}, "bound": self.bound}


@dataclass
class EncodedSystem:
    form: str
    q: int
    polynomials: list = None      # degk: one poly per constraint
    inequalities: list = None     # linear: list of lists (per constraint)
    onehot_polys: list = None     # boolean01: one poly per constraint over (i,a) vars
    onehot_variables: list = None

    def to_jsonable(self):
        out = {"form": self.form, "q": self.q}
        if self.polynomials is not None:
            out["polynomials"] = [
                [{"vars": list(m), "coeff": rat_str(c)} for m, c in sorted(p.items())]
                for p in self.polynomials
            ]
        if self.inequalities is not None:
            out["inequalities"] = [[iq.to_jsonable() for iq in group] for group in self.inequalities]
        if self.onehot_polys is not None:
            out["polynomials"] = [
                [{"vars": [list(va) for va in m], "coeff": rat_str(c)} for m, c in sorted(p.items())]
                for p in self.onehot_polys
            ]
            out["onehot_variables"] = [list(v) for v in self.onehot_variables]
        return out


def encode(I: Instance, form: str) -> EncodedSystem:
    """Emit the instance as a polynomial/inequality system.

    degk: per constraint, the multilinear polynomial P'(x_S^(c)) - 1 (q=2).
    linear: per constraint and falsifying pattern f, the clause inequality
            sum_i x_{S_i}^{(c_i xor f_i)} >= 1 (q=2).
    boolean01: per constraint, the one-hot polynomial minus 1, plus one-hot
            side conditions for every variable that occurs in a constraint.
    """
    P = I.predicate
    if form == "degk":
        if P.q != 2:
            raise UnsupportedFormError("degk encoding is defined for q=2; use boolean01")
        return EncodedSystem(form=form, q=P.q,
                             polynomials=[multilinear_constraint_poly(P, con) for con in I.constraints])
    if form == "linear":
        if P.q != 2:
            raise UnsupportedFormError("linear encoding requires q = 2")
        falsifying = [z for z in P.assignments() if P.table[P.index(z)] == 0]
        groups = []
        for con in I.constraints:
            group = []
            for f in falsifying:
                coeffs, const = {}, 0
                for v, ci, fi in zip(con.scope, con.c, f):
                    if ci ^ fi:  # literal is 1 - x_v
                        coeffs[v] = coeffs.get(v, 0) - 1
                        const += 1
                    else:
                        coeffs[v] = coeffs.get(v, 0) + 1
                coeffs = {v: c for v, c in coeffs.items() if c != 0}
                group.append(ClauseInequality(coeffs=coeffs, bound=1 - const))
            groups.append(group)
        return EncodedSystem(form=form, q=P.q, inequalities=groups)
    if form == "boolean01":
        polys = []
        used = set()
        for con in I.constraints:
            used.update(con.scope)
            poly = {}
            for alpha in P.assignments():
                if P.table[P.index(alpha)] == 0:
                    continue
                mono = tuple(sorted((v, (ai + ci) % P.q) for v, ai, ci in zip(con.scope, alpha, con.c)))
                poly[mono] = poly.get(mono, ZERO) + 1
            poly[()] = poly.get((), ZERO) - 1
            if poly[()] == 0:
                del poly[()]
            polys.append(poly)
        variables = [(i, a) for i in sorted(used) for a in range(P.q)]
        return EncodedSystem(form=form, q=P.q, onehot_polys=polys, onehot_variables=variables)
    raise UnsupportedFormError(f"unknown encoding form {form!r}")
