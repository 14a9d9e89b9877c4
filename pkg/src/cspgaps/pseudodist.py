"""Consistent local distribution families.

For a set of variables S the family's member is the marginal, onto S, of the
product distribution over the absorbing closure Cl(S): each constraint covered
by Cl(S) contributes its negation-shifted copy of the uniform-marginal support
distribution, normalized by the total mass Z.  Conditional families divide by
the probability of the conditioning event.  Everything is exact rational
arithmetic; verification is by direct summation, never by trusting the
construction.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from itertools import product

from .errors import BudgetExceededError, LocalContradictionError, LocalityError
from .instances import Hypergraph, Instance, hypergraph_of
from .predicates import SupportDistribution
from .rational import Frac, ZERO, rat_pair
from .structure import closure as closure_algorithm

DEFAULT_TABLE_CAP = 1 << 16


def constraints_covered(I: Instance, S) -> tuple:
    """Indices of constraints whose scope lies entirely inside S."""
    Sset = set(S)
    return tuple(j for j, ss in enumerate(I.scope_sets) if ss <= Sset)


def shifted_weight(mu: SupportDistribution, constraint, alpha_map) -> Frac:
    """mu evaluated at the negation-shifted restriction of an assignment: the
    weight of (alpha[S_1]+c_1, ..., alpha[S_k]+c_k) mod q."""
    q = mu.predicate.q
    z = tuple((alpha_map[v] + ci) % q for v, ci in zip(constraint.scope, constraint.c))
    return mu.weight(z)


@dataclass
class LocalDistribution:
    """Exact distribution over [q]^scope; probs indexed by the little-endian
    base-q code of the assignment along the sorted scope."""

    scope: tuple
    q: int
    probs: list

    def __post_init__(self):
        if len(self.probs) != self.q ** len(self.scope):
            raise ValueError("probability table has the wrong size")

    def code(self, alpha) -> int:
        c = 0
        for i in reversed(range(len(self.scope))):
            c = c * self.q + alpha[i]
        return c

    def decode(self, c: int) -> tuple:
        out = []
        for _ in range(len(self.scope)):
            out.append(c % self.q)
            c //= self.q
        return tuple(out)

    def assignments(self):
        """Assignment tuples in code order (first scope vertex least
        significant), so zip(assignments(), probs) is aligned."""
        for c in range(self.q ** len(self.scope)):
            yield self.decode(c)

    def prob(self, alpha) -> Frac:
        return self.probs[self.code(alpha)]

    def prob_of(self, assignment_map) -> Frac:
        return self.prob(tuple(assignment_map[v] for v in self.scope))

    def total(self) -> Frac:
        t = ZERO
        for p in self.probs:
            t += p
        return t

    def marginal(self, T) -> "LocalDistribution":
        """Exact marginal onto T (a subset of the scope), by direct summation."""
        T = tuple(sorted(T))
        pos = [self.scope.index(v) for v in T]
        out = [ZERO] * (self.q ** len(T))
        sub = LocalDistribution(scope=T, q=self.q, probs=[ZERO] * (self.q ** len(T)))
        for alpha, p in zip(self.assignments(), self.probs):
            if p == 0:
                continue
            c = sub.code(tuple(alpha[i] for i in pos))
            out[c] += p
        sub.probs = out
        return sub

    def restrict_condition(self, X, x_alpha) -> "LocalDistribution":
        """Conditional distribution on scope minus X given X = x_alpha."""
        X = tuple(X)
        keep = tuple(v for v in self.scope if v not in X)
        xpos = {v: self.scope.index(v) for v in X}
        want = dict(zip(X, x_alpha))
        mass = ZERO
        out = [ZERO] * (self.q ** len(keep))
        sub = LocalDistribution(scope=keep, q=self.q, probs=list(out))
        kpos = [self.scope.index(v) for v in keep]
        for alpha, p in zip(self.assignments(), self.probs):
            if all(alpha[xpos[v]] == want[v] for v in X):
                mass += p
                if p != 0:
                    out[sub.code(tuple(alpha[i] for i in kpos))] += p
        if mass == 0:
            raise LocalContradictionError("conditioning on a zero-probability event")
        sub.probs = [p / mass for p in out]
        return sub

    def to_jsonable(self):
        return {
            "scope": list(self.scope),
            "q": self.q,
            "probs": [rat_pair(p) for p in self.probs],
        }


def uniform_distribution(scope, q) -> LocalDistribution:
    scope = tuple(sorted(scope))
    w = Frac(1, q ** len(scope))
    return LocalDistribution(scope=scope, q=q, probs=[w] * (q ** len(scope)))


def product_distribution(I: Instance, mu: SupportDistribution, S,
                         table_cap: int = DEFAULT_TABLE_CAP) -> LocalDistribution:
    """The normalized product of shifted support weights over the constraints
    covered by S; uniform when nothing is covered.  Z = 0 raises: the covered
    constraints are locally contradictory, which the construction's expansion
    preconditions are supposed to rule out."""
    S = tuple(sorted(S))
    q = I.predicate.q
    if q ** len(S) > table_cap:
        raise BudgetExceededError(
            f"distribution table needs q^|S| = {q ** len(S)} > cap {table_cap}",
            required=q ** len(S))
    covered = constraints_covered(I, S)
    if not covered:
        return uniform_distribution(S, q)
    dist = LocalDistribution(scope=S, q=q, probs=[ZERO] * (q ** len(S)))
    weights = []
    Z = ZERO
    cons = [I.constraints[j] for j in covered]
    for alpha in dist.assignments():
        amap = dict(zip(S, alpha))
        w = Frac(1)
        for con in cons:
            w *= shifted_weight(mu, con, amap)
            if w == 0:
                break
        weights.append(w)
        Z += w
    if Z == 0:
        raise LocalContradictionError(
            f"covered constraints {covered} admit no common support on S={S}")
    dist.probs = [w / Z for w in weights]
    return dist


class LocalDistributionFamily:
    """Lazily materialized map S -> local distribution.

    Unconditional: member(S) = marginal of the product distribution over
    Cl(S).  Conditional (via .condition): member(S) for S disjoint from X is
    the base joint on S u X restricted to X = alpha and renormalized.  The
    cache is shared through the base family and guarded by a lock; recomputation
    is idempotent (identical rationals), so concurrent construction is safe.
    """

    def __init__(self, instance: Instance, mu: SupportDistribution, radius: int,
                 e1, e2, s1: int, enforce_size_gate: bool = False,
                 residual_fast: bool = False, table_cap: int = DEFAULT_TABLE_CAP):
        self.instance = instance
        self.mu = mu
        self.radius = radius
        self.e1, self.e2, self.s1 = Frac(e1), Frac(e2), int(s1)
        self.enforce_size_gate = enforce_size_gate
        self.residual_fast = residual_fast
        self.table_cap = table_cap
        self.hypergraph = hypergraph_of(instance)
        self.kind = "unconditional"
        self.cond_x: tuple = ()
        self.cond_alpha: tuple = ()
        self._closures: dict = {}
        self._dists: dict = {}
        self._lock = threading.Lock()
        self._base = self

    # -- closure / membership -------------------------------------------------

    def closure_of(self, S):
        key = tuple(sorted(S))
        base = self._base
        with base._lock:
            if key in base._closures:
                return base._closures[key]
        res = closure_algorithm(base.hypergraph, key, base.e1, base.e2, base.s1,
                                enforce_size_gate=base.enforce_size_gate,
                                residual_touch_only=base.residual_fast)
        with base._lock:
            base._closures.setdefault(key, res)
            return base._closures[key]

    def _base_dist(self, S) -> LocalDistribution:
        key = tuple(sorted(S))
        if not key:
            raise ValueError("the empty set has no local distribution")
        if len(key) > self._base.radius:
            raise LocalityError(f"|S| = {len(key)} exceeds locality radius {self._base.radius}")
        base = self._base
        with base._lock:
            if key in base._dists:
                return base._dists[key]
        cl = self.closure_of(key).closure
        full = product_distribution(base.instance, base.mu, cl, table_cap=base.table_cap)
        dist = full.marginal(key) if cl != key else full
        with base._lock:
            base._dists.setdefault(key, dist)
            return base._dists[key]

    def dist(self, S) -> LocalDistribution:
        if self.kind == "unconditional":
            return self._base_dist(S)
        S = tuple(sorted(S))
        if set(S) & set(self.cond_x):
            raise ValueError(f"conditional member sets must avoid X = {self.cond_x}")
        if len(S) > self.radius:
            raise LocalityError(f"|S| = {len(S)} exceeds conditional radius {self.radius}")
        joint = self._base_dist(tuple(sorted(set(S) | set(self.cond_x))))
        return joint.restrict_condition(self.cond_x, self.cond_alpha)

    def variables(self):
        if self.kind == "unconditional":
            return range(self.instance.n)
        excl = set(self.cond_x)
        return (v for v in range(self.instance.n) if v not in excl)

    # -- conditioning ----------------------------------------------------------

    def conditioning_probability(self, X, alpha) -> Frac:
        d = self._base_dist(tuple(sorted(X)))
        return d.prob_of(dict(zip(tuple(sorted(X)), alpha)))

    def condition(self, X, alpha) -> "LocalDistributionFamily":
        """Conditional family given X = alpha (alpha aligned to sorted X)."""
        if self.kind != "unconditional":
            raise ValueError("nested conditioning is not supported; condition the base family")
        X = tuple(sorted(X))
        alpha = tuple(alpha)
        if len(X) != len(alpha):
            raise ValueError("alpha must assign every vertex of X")
        amap = dict(zip(X, alpha))
        for j in constraints_covered(self.instance, X):
            if shifted_weight(self.mu, self.instance.constraints[j], amap) == 0:
                raise ValueError(
                    f"conditioning assignment zeroes constraint {j} (mu-incompatible)")
        if self.conditioning_probability(X, alpha) == 0:
            raise ValueError("conditioning on a zero-probability assignment")
        fam = object.__new__(LocalDistributionFamily)
        fam.__dict__.update(self.__dict__)
        fam.kind = "conditional"
        fam.cond_x = X
        fam.cond_alpha = alpha
        fam.radius = self.radius - len(X)
        fam._base = self._base
        return fam

    def dump_jsonable(self, sets=None):
        base = self._base
        keys = sorted(base._dists) if sets is None else [tuple(sorted(S)) for S in sets]
        return {
            "kind": self.kind,
            "cond_x": list(self.cond_x),
            "cond_alpha": list(self.cond_alpha),
            "radius": self.radius,
            "params": {"e1": str(base.e1), "e2": str(base.e2), "s1": base.s1},
            "mu": base.mu.to_jsonable(),
            "sets": {
                " ".join(map(str, k)): self.dist(k).to_jsonable()["probs"] for k in keys
            },
        }


# ---------------------------------------------------------------------------
# Verification


@dataclass
class ConsistencyReport:
    ok: bool
    checks: int
    violations: list = field(default_factory=list)  # (T, S, alpha, lhs, rhs)

    def to_jsonable(self):
        return {
            "ok": self.ok,
            "checks": self.checks,
            "violations": [
                {"T": list(T), "S": list(S), "alpha": list(a), "lhs": str(l), "rhs": str(r)}
                for T, S, a, l, r in self.violations
            ],
        }


def _proper_subsets(S):
    n = len(S)
    for mask in range(1, (1 << n) - 1):
        yield tuple(S[i] for i in range(n) if (mask >> i) & 1)


def verify_local_consistency(family: LocalDistributionFamily, sets,
                             max_violations: int = 20) -> ConsistencyReport:
    """For every provided S and every nonempty proper T of S, check that the
    family's member at T equals the exact marginal of its member at S.
    Violations are report content, not errors."""
    checks = 0
    violations = []
    for S in sets:
        S = tuple(sorted(S))
        dS = family.dist(S)
        if dS.total() != 1 or any(p < 0 for p in dS.probs):
            violations.append((S, S, (), dS.total(), Frac(1)))
        for T in _proper_subsets(S):
            dT = family.dist(T)
            marg = dS.marginal(T)
            for alpha in dT.assignments():
                checks += 1
                lhs, rhs = dT.prob(alpha), marg.prob(alpha)
                if lhs != rhs:
                    violations.append((T, S, alpha, lhs, rhs))
                    if len(violations) >= max_violations:
                        return ConsistencyReport(ok=False, checks=checks, violations=violations)
    return ConsistencyReport(ok=not violations, checks=checks, violations=violations)


@dataclass
class SupportReport:
    ok: bool
    checks: int
    skipped: list = field(default_factory=list)
    violations: list = field(default_factory=list)  # (constraint index, alpha, prob)

    def to_jsonable(self):
        return {
            "ok": self.ok,
            "checks": self.checks,
            "skipped": list(self.skipped),
            "violations": [
                {"constraint": j, "alpha": list(a), "prob": str(p)}
                for j, a, p in self.violations
            ],
        }


def verify_support(family: LocalDistributionFamily, I: Instance,
                   max_violations: int = 20) -> SupportReport:
    """Every constraint's scope distribution must put zero mass on falsifying
    shifted assignments.  Constraints touching a conditional family's X are
    skipped (their scope distribution is not a family member)."""
    P = I.predicate
    checks = 0
    skipped = []
    violations = []
    for j, con in enumerate(I.constraints):
        Sset = tuple(sorted(set(con.scope)))
        if set(Sset) & set(family.cond_x):
            skipped.append(j)
            continue
        d = family.dist(Sset)
        for alpha in d.assignments():
            amap = dict(zip(Sset, alpha))
            shifted = tuple((amap[v] + ci) % P.q for v, ci in zip(con.scope, con.c))
            checks += 1
            if P.table[P.index(shifted)] == 0 and d.prob(alpha) != 0:
                violations.append((j, alpha, d.prob(alpha)))
                if len(violations) >= max_violations:
                    return SupportReport(ok=False, checks=checks, skipped=skipped,
                                         violations=violations)
    return SupportReport(ok=not violations, checks=checks, skipped=skipped,
                         violations=violations)


def corrupt_family(family: LocalDistributionFamily, kind: str, pair=None,
                   constraint: int = 0, delta=Frac(1, 8)) -> dict:
    """Deliberately damage one cached table (negative-control hook).

    kind="pair": shift mass between the extreme assignments of a pair
    distribution, breaking marginal consistency and creating a spurious
    correlation.  kind="support": move mass onto a falsifying assignment of a
    constraint's scope distribution.  Returns a description of the damage.
    """
    base = family._base
    q = base.instance.predicate.q
    if kind == "pair":
        if pair is None:
            pair = (0, 1)
        key = tuple(sorted(pair))
        d = base.dist(key)
        lo, hi = 0, len(d.probs) - 1
        eps = min(Frac(delta), d.probs[lo]) if d.probs[lo] > 0 else Frac(delta)
        probs = list(d.probs)
        probs[lo] -= eps
        probs[hi] += eps
        with base._lock:
            base._dists[key] = LocalDistribution(scope=key, q=q, probs=probs)
        return {"kind": kind, "set": key, "moved": str(eps)}
    if kind == "support":
        con = base.instance.constraints[constraint]
        key = tuple(sorted(set(con.scope)))
        d = base.dist(key)
        P = base.instance.predicate
        bad_code = None
        for alpha in d.assignments():
            amap = dict(zip(key, alpha))
            shifted = tuple((amap[v] + ci) % P.q for v, ci in zip(con.scope, con.c))
            if P.table[P.index(shifted)] == 0:
                bad_code = d.code(alpha)
                break
        if bad_code is None:
            raise ValueError("constraint has no falsifying assignment to corrupt with")
        donor = max(range(len(d.probs)), key=lambda c: d.probs[c])
        eps = min(Frac(delta), d.probs[donor])
        probs = list(d.probs)
        probs[donor] -= eps
        probs[bad_code] += eps
        with base._lock:
            base._dists[key] = LocalDistribution(scope=key, q=q, probs=probs)
        return {"kind": kind, "set": key, "constraint": constraint, "moved": str(eps)}
    raise ValueError(f"unknown corruption kind {kind!r}")
