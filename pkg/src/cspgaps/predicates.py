"""Predicates over [q]^k and t-wise uniform supporting distributions.

A predicate is a truth table over [q]^k.  The central decision is whether a
distribution supported on the satisfying assignments can have all size-t
marginals exactly uniform; that is an exact rational LP, solved by the
phase-I simplex in exactlp.  The smallest t for which no such distribution
exists is the predicate's support complexity.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations, product

from .errors import InternalInvariantError
from .exactlp import solve_feasibility
from .rational import Frac, ZERO, rat_pair


@dataclass(frozen=True)
class Predicate:
    """Truth table P:[q]^k -> {0,1}, indexed lexicographically with the first
    coordinate most significant."""

    k: int
    q: int
    table: tuple
    name: str = ""

    def __post_init__(self):
        if self.k < 1 or self.q < 2:
            raise ValueError("need k >= 1 and q >= 2")
        if len(self.table) != self.q**self.k:
            raise ValueError(f"table must have q^k = {self.q ** self.k} entries")
        if any(v not in (0, 1) for v in self.table):
            raise ValueError("table entries must be 0/1")
        if 1 not in self.table:
            raise ValueError("predicate has no satisfying assignment")

    @property
    def has_falsifying(self) -> bool:
        return 0 in self.table

    @property
    def satisfying_count(self) -> int:
        return sum(self.table)

    def index(self, z) -> int:
        idx = 0
        for zi in z:
            idx = idx * self.q + zi
        return idx

    def evaluate(self, z) -> int:
        if len(z) != self.k:
            raise ValueError(f"assignment has length {len(z)}, expected {self.k}")
        for zi in z:
            if not 0 <= zi < self.q:
                raise ValueError(f"entry {zi} outside [0,{self.q})")
        return self.table[self.index(z)]

    def assignments(self):
        return product(range(self.q), repeat=self.k)

    def satisfying(self):
        return (z for z in self.assignments() if self.table[self.index(z)] == 1)

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "q": self.q, "table": list(self.table)})

    @classmethod
    def from_json(cls, text: str, name: str = "") -> "Predicate":
        obj = json.loads(text)
        return cls(k=int(obj["k"]), q=int(obj["q"]), table=tuple(int(v) for v in obj["table"]), name=name)

    @classmethod
    def parity(cls, k: int, odd: bool = False) -> "Predicate":
        want = 1 if odd else 0
        table = tuple(1 if sum(z) % 2 == want else 0 for z in product((0, 1), repeat=k))
        return cls(k=k, q=2, table=table, name=f"parity{k}{'_odd' if odd else ''}")

    @classmethod
    def or_k(cls, k: int) -> "Predicate":
        table = tuple(1 if any(z) else 0 for z in product((0, 1), repeat=k))
        return cls(k=k, q=2, table=table, name=f"or{k}")

    @classmethod
    def nae3(cls) -> "Predicate":
        table = tuple(0 if len(set(z)) == 1 else 1 for z in product((0, 1), repeat=3))
        return cls(k=3, q=2, table=table, name="nae3")

    @classmethod
    def always_true(cls, k: int, q: int = 2) -> "Predicate":
        return cls(k=k, q=q, table=(1,) * q**k, name=f"true{k}")


def named_predicate(name: str) -> Predicate:
    """Resolve built-in predicate names: parityK, parityK_odd, orK, nae3, trueK."""
    low = name.lower()
    if low == "nae3":
        return Predicate.nae3()
    for prefix, maker in (
        ("parity", lambda k, odd: Predicate.parity(k, odd)),
        ("or", lambda k, odd: Predicate.or_k(k)),
        ("true", lambda k, odd: Predicate.always_true(k)),
    ):
        if low.startswith(prefix):
            rest = low[len(prefix):]
            odd = rest.endswith("_odd")
            if odd:
                rest = rest[: -len("_odd")]
            if rest.isdigit():
                return maker(int(rest), odd)
    raise ValueError(f"unknown predicate name {name!r}")


@dataclass
class SupportDistribution:
    """Distribution over [q]^k supported on a predicate's satisfying assignments."""

    predicate: Predicate
    weights: dict  # assignment tuple -> Frac, zero entries omitted

    def __post_init__(self):
        total = ZERO
        for z, w in self.weights.items():
            if w < 0:
                raise ValueError(f"negative weight at {z}")
            if w > 0 and self.predicate.evaluate(z) == 0:
                raise ValueError(f"mass {w} on falsifying assignment {z}")
            total += w
        if total != 1:
            raise ValueError(f"weights sum to {total}, not 1")
        self.weights = {z: Frac(w) for z, w in self.weights.items() if w > 0}

    def weight(self, z) -> Frac:
        return self.weights.get(tuple(z), ZERO)

    def marginal(self, positions, alpha) -> Frac:
        """Pr[z_positions = alpha] by direct summation over the support."""
        total = ZERO
        for z, w in self.weights.items():
            if all(z[p] == a for p, a in zip(positions, alpha)):
                total += w
        return total

    def to_jsonable(self):
        return {
            "k": self.predicate.k,
            "q": self.predicate.q,
            "weights": {" ".join(map(str, z)): rat_pair(w) for z, w in sorted(self.weights.items())},
        }


def is_t_wise_uniform(mu: SupportDistribution, t: int) -> bool:
    """Independent re-check: every size-(<=t) marginal equals q^-|T|, by direct
    summation (no LP machinery involved)."""
    P = mu.predicate
    for size in range(1, t + 1):
        target = Frac(1, P.q**size)
        for T in combinations(range(P.k), size):
            for alpha in product(range(P.q), repeat=size):
                if mu.marginal(T, alpha) != target:
                    return False
    return True


def t_wise_support(P: Predicate, t: int):
    """Exact LP feasibility: is there a distribution on P's satisfying
    assignments whose size-t marginals are all uniform?

    Returns a SupportDistribution witness (a vertex of the feasible polytope,
    deterministic under Bland's rule) or None if infeasible.  Only size-exactly-t
    marginal constraints are imposed; smaller sets follow by marginalization.
    """
    if not 1 <= t <= P.k:
        raise ValueError(f"t must lie in [1,{P.k}], got {t}")
    zs = list(P.assignments())
    col = {z: i for i, z in enumerate(zs)}
    rows, rhs = [], []
    # Falsifying assignments carry no mass.
    for z in zs:
        if P.table[P.index(z)] == 0:
            row = [ZERO] * len(zs)
            row[col[z]] = Frac(1)
            rows.append(row)
            rhs.append(ZERO)
    # Size-t marginals are exactly uniform.
    target = Frac(1, P.q**t)
    for T in combinations(range(P.k), t):
        for alpha in product(range(P.q), repeat=t):
            row = [ZERO] * len(zs)
            for z in zs:
                if all(z[p] == a for p, a in zip(T, alpha)):
                    row[col[z]] = Frac(1)
            rows.append(row)
            rhs.append(target)
    x = solve_feasibility(rows, rhs, len(zs))
    if x is None:
        return None
    mu = SupportDistribution(P, {z: x[col[z]] for z in zs if x[col[z]] != 0})
    if not is_t_wise_uniform(mu, t):
        raise InternalInvariantError("simplex witness failed the direct marginal re-check")
    return mu


def support_complexity(P: Predicate) -> int:
    """Smallest t with no t-wise uniform supporting distribution; k+1 when even
    the k-wise uniform (i.e. fully uniform) distribution is supported, which
    happens exactly for the trivial predicate."""
    for t in range(1, P.k + 1):
        if t_wise_support(P, t) is None:
            return t
    return P.k + 1


def predicate_report(P: Predicate) -> dict:
    """Support complexity plus witness distributions for every feasible t."""
    witnesses = {}
    cmplx = P.k + 1
    for t in range(1, P.k + 1):
        mu = t_wise_support(P, t)
        if mu is None:
            cmplx = t
            break
        witnesses[t] = mu.to_jsonable()
    return {
        "name": P.name,
        "k": P.k,
        "q": P.q,
        "cmplx": cmplx,
        "trivial": not P.has_falsifying,
        "satisfying_count": P.satisfying_count,
        "witnesses": witnesses,
    }
