"""Correlation graphs, bad structures, block-diagonal PSD verification, and
the component-size bound.

A correlation edge is an exactly-nonzero entry in a pair covariance block (no
tolerance).  A bad structure for (u,v) is a connected edge set with u,v in its
neighborhood in which every constraint has at most k-t boundary vertices other
than u and v; these are the only possible sources of pairwise correlation, and
on good expanders they stay so small that the covariance matrix splits into
small PSD blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import floor

from .errors import BudgetExceededError, LocalityError
from .instances import Hypergraph
from .pseudodist import LocalDistribution, LocalDistributionFamily
from .psd import (
    SymmetricRationalMatrix,
    pair_covariance_block,
    psd_exact,
    psd_float,
)
from .rational import Frac, ZERO, rat_str
from .structure import ExpansionReport, boundary, closure, neighbors


@dataclass
class CorrelationGraph:
    n: int
    variables: tuple
    edges: dict  # (u,v) sorted pair -> ((a,b), extremal covariance entry)
    kind: str = "unconditional"
    cond_x: tuple = ()

    def has_edge(self, u, v) -> bool:
        return tuple(sorted((u, v))) in self.edges

    def to_jsonable(self):
        return {
            "n": self.n,
            "variables": list(self.variables),
            "kind": self.kind,
            "cond_x": list(self.cond_x),
            "edges": [
                {"pair": list(p), "entry": list(ab), "value": rat_str(val)}
                for p, (ab, val) in sorted(self.edges.items())
            ],
        }


def build_correlation_graph(F: LocalDistributionFamily) -> CorrelationGraph:
    """Pair covariance blocks for every unordered pair, exact; an edge records
    the largest-magnitude nonzero entry."""
    if F.radius < 2:
        raise LocalityError("correlation graph needs locality radius >= 2")
    variables = tuple(F.variables())
    q = F.instance.predicate.q
    edges = {}
    for ui in range(len(variables)):
        for vi in range(ui + 1, len(variables)):
            u, v = variables[ui], variables[vi]
            block = pair_covariance_block(F, u, v)
            best = None
            for a in range(q):
                for b in range(q):
                    val = block[a][b]
                    if val != 0 and (best is None or abs(val) > abs(best[1])):
                        best = ((a, b), val)
            if best is not None:
                edges[(u, v)] = best
    return CorrelationGraph(n=F.instance.n, variables=variables, edges=edges,
                            kind=F.kind, cond_x=F.cond_x)


def connected_components(G: CorrelationGraph):
    """Canonical partition of the graph's variable set; returns (components
    sorted by least vertex, max component size)."""
    adj = {v: set() for v in G.variables}
    for (u, v) in G.edges:
        adj[u].add(v)
        adj[v].add(u)
    seen = set()
    comps = []
    for v in G.variables:
        if v in seen:
            continue
        stack, comp = [v], []
        seen.add(v)
        while stack:
            w = stack.pop()
            comp.append(w)
            for x in adj[w]:
                if x not in seen:
                    seen.add(x)
                    stack.append(x)
        comps.append(tuple(sorted(comp)))
    comps.sort()
    max_size = max((len(c) for c in comps), default=0)
    return comps, max_size


def distribution_covariance(d: LocalDistribution) -> SymmetricRationalMatrix:
    """Covariance matrix of one exact local distribution over its scope."""
    q = d.q
    scope = d.scope
    labels = [(v, a) for v in scope for a in range(q)]
    pos = {v: i for i, v in enumerate(scope)}
    singles = {v: [ZERO] * q for v in scope}
    pairs = {}
    for assign, p in zip(d.assignments(), d.probs):
        if p == 0:
            continue
        for v in scope:
            singles[v][assign[pos[v]]] += p
        for i, u in enumerate(scope):
            for v in scope[i + 1:]:
                key = (u, v, assign[pos[u]], assign[pos[v]])
                pairs[key] = pairs.get(key, ZERO) + p
    dim = len(labels)
    rows = [[ZERO] * dim for _ in range(dim)]
    for i, (u, a) in enumerate(labels):
        for j in range(i, dim):
            v, b = labels[j]
            if u == v:
                joint = singles[u][a] if a == b else ZERO
            else:
                joint = pairs.get((u, v, a, b), ZERO)
            val = joint - singles[u][a] * singles[v][b]
            rows[i][j] = rows[j][i] = val
    return SymmetricRationalMatrix(labels, rows)


def family_covariance(F: LocalDistributionFamily) -> SymmetricRationalMatrix:
    """Full covariance over the family's variables, assembled from its own
    singleton/pair members (works for conditional families too)."""
    variables = tuple(F.variables())
    q = F.instance.predicate.q
    labels = [(v, a) for v in variables for a in range(q)]
    singles = {v: [F.dist((v,)).prob((a,)) for a in range(q)] for v in variables}
    dim = len(labels)
    rows = [[ZERO] * dim for _ in range(dim)]
    blocks = {}
    for i, (u, a) in enumerate(labels):
        for j in range(i, dim):
            v, b = labels[j]
            if u == v:
                joint = singles[u][a] if a == b else ZERO
                val = joint - singles[u][a] * singles[u][b]
            else:
                key = (u, v)
                if key not in blocks:
                    blocks[key] = pair_covariance_block(F, u, v)
                val = blocks[key][a][b]
            rows[i][j] = rows[j][i] = val
    return SymmetricRationalMatrix(labels, rows)


@dataclass
class BlockPsdReport:
    ok: bool
    components: list
    cross_zero_ok: bool
    cross_violations: list
    component_verdicts: list
    full_exact_verdict: str
    full_matches_blocks: bool
    float_verdict: str
    float_matches_exact: bool

    def to_jsonable(self):
        return {
            "ok": self.ok,
            "components": [list(c) for c in self.components],
            "cross_zero_ok": self.cross_zero_ok,
            "cross_violations": [
                {"pair": list(p), "entry": list(e), "value": rat_str(v)}
                for p, e, v in self.cross_violations
            ],
            "component_verdicts": self.component_verdicts,
            "full_exact_verdict": self.full_exact_verdict,
            "full_matches_blocks": self.full_matches_blocks,
            "float_verdict": self.float_verdict,
            "float_matches_exact": self.float_matches_exact,
        }


def block_psd_verify(F: LocalDistributionFamily, G: CorrelationGraph,
                     float_tol: float = 1e-9) -> BlockPsdReport:
    """(i) covariance entries vanish across distinct components (recomputed,
    exact); (ii) each component's block is the covariance of that component's
    single local distribution and is exactly PSD; (iii) the full-matrix exact
    verdict equals the conjunction of the block verdicts and the float
    eigensolver agrees."""
    comps, max_size = connected_components(G)
    q = F.instance.predicate.q
    comp_of = {}
    for ci, comp in enumerate(comps):
        for v in comp:
            comp_of[v] = ci

    cross_violations = []
    variables = tuple(G.variables)
    for ui in range(len(variables)):
        for vi in range(ui + 1, len(variables)):
            u, v = variables[ui], variables[vi]
            if comp_of[u] == comp_of[v]:
                continue
            block = pair_covariance_block(F, u, v)
            for a in range(q):
                for b in range(q):
                    if block[a][b] != 0:
                        cross_violations.append(((u, v), (a, b), block[a][b]))

    component_verdicts = []
    for comp in comps:
        if len(comp) > F.radius:
            raise LocalityError(
                f"component {comp} has size {len(comp)} > locality radius {F.radius}")
        cert = psd_exact(distribution_covariance(F.dist(comp)))
        component_verdicts.append(cert.verdict)

    full = family_covariance(F)
    full_cert = psd_exact(full)
    blocks_psd = all(v == "psd" for v in component_verdicts)
    full_matches = (full_cert.verdict == "psd") == blocks_psd
    fl = psd_float(full, tol=float_tol)
    ok = (not cross_violations) and blocks_psd and full_matches \
        and fl.verdict == full_cert.verdict
    return BlockPsdReport(
        ok=ok, components=comps, cross_zero_ok=not cross_violations,
        cross_violations=cross_violations, component_verdicts=component_verdicts,
        full_exact_verdict=full_cert.verdict, full_matches_blocks=full_matches,
        float_verdict=fl.verdict, float_matches_exact=fl.verdict == full_cert.verdict)


# ---------------------------------------------------------------------------
# Bad structures


@dataclass
class BadStructure:
    edges: tuple       # edge indices in the (possibly reduced) hypergraph
    u: int
    v: int
    boundary_counts: dict  # edge index -> |(boundary ^ edge) \ {u,v}|

    def to_jsonable(self):
        return {"edges": list(self.edges), "u": self.u, "v": self.v,
                "boundary_counts": {str(k): v for k, v in sorted(self.boundary_counts.items())}}


def _incidence_connected(H: Hypergraph, W) -> bool:
    if not W:
        return False
    W = list(W)
    seen = {W[0]}
    stack = [W[0]]
    rest = set(W[1:])
    while stack:
        e = stack.pop()
        for f in list(rest):
            if H.edge_masks[e] & H.edge_masks[f]:
                rest.remove(f)
                seen.add(f)
                stack.append(f)
    return not rest


def is_bad_structure(H: Hypergraph, W, u: int, v: int, t: int):
    """Evaluate the three conditions exactly; the certificate names the first
    failing condition or carries the per-constraint boundary counts."""
    W = tuple(sorted(W))
    if not W:
        return False, {"failing": "empty"}
    gamma = set(neighbors(H, W))
    if u not in gamma or v not in gamma:
        return False, {"failing": "endpoints_not_covered"}
    if not _incidence_connected(H, W):
        return False, {"failing": "disconnected"}
    bset = set(boundary(H, W))
    counts = {}
    limit = H.k - t
    for e in W:
        cnt = len((set(H.edges[e]) & bset) - {u, v})
        counts[e] = cnt
        if cnt > limit:
            return False, {"failing": "boundary_count", "edge": e, "count": cnt,
                           "limit": limit}
    return True, {"failing": None, "counts": counts}


def enumerate_bad_structures(H: Hypergraph, u: int, v: int, t: int, max_size: int,
                             node_budget: int = 500_000):
    """All connected edge sets W with |W| <= max_size, u,v in Gamma(W), passing
    the bad-structure conditions.  Complete: canonical min-edge enumeration of
    connected subsets (validated against naive filtering in the tests)."""
    out = []
    if max_size <= 0 or H.num_edges == 0:
        return out
    edges = list(range(H.num_edges))
    adj = [[] for _ in edges]
    for i in edges:
        for j in edges[i + 1:]:
            if H.edge_masks[i] & H.edge_masks[j]:
                adj[i].append(j)
                adj[j].append(i)
    visited = 0
    for start in edges:
        stack = [((start,), tuple(d for d in adj[start] if d > start))]
        while stack:
            S, ext = stack.pop()
            visited += 1
            if visited > node_budget:
                raise BudgetExceededError("bad-structure enumeration budget exceeded",
                                          required=visited)
            ok, cert = is_bad_structure(H, S, u, v, t)
            if ok:
                out.append(BadStructure(edges=tuple(sorted(S)), u=u, v=v,
                                        boundary_counts=cert["counts"]))
            if len(S) >= max_size:
                continue
            known = set(S) | set(ext)
            for pos, c in enumerate(ext):
                grown = tuple(d for d in adj[c] if d > start and d not in known)
                stack.append((S + (c,), ext[pos + 1:] + grown))
                known.update(grown)
    out.sort(key=lambda b: (len(b.edges), b.edges))
    return out


@dataclass
class BadStructureGraph:
    n: int
    t: int
    edges: dict  # (u,v) -> BadStructure witness (smallest, then lexicographic)
    pair_caps: dict = field(default_factory=dict)

    def has_edge(self, u, v) -> bool:
        return tuple(sorted((u, v))) in self.edges

    def to_jsonable(self):
        return {
            "n": self.n,
            "t": self.t,
            "edges": [
                {"pair": list(p), "witness": w.to_jsonable()}
                for p, w in sorted(self.edges.items())
            ],
            "pair_caps": {f"{u} {v}": c for (u, v), c in sorted(self.pair_caps.items())},
        }


def bad_structure_graph(H: Hypergraph, t: int, closure_params=None,
                        max_size: int | None = None, residual_touch_only: bool = False,
                        variables=None, node_budget: int = 500_000) -> BadStructureGraph:
    """Edge (u,v) iff a bad structure for u and v exists within the per-pair
    budget |C(Cl({u,v}))| (constraint count covered by the pair's closure), or
    within the global max_size override when given."""
    if max_size is None and closure_params is None:
        raise ValueError("need closure parameters for the per-pair size caps")
    variables = list(variables) if variables is not None else list(range(H.n))
    present = set()
    for e in H.edges:
        present.update(e)
    edges = {}
    caps = {}
    for ui in range(len(variables)):
        for vi in range(ui + 1, len(variables)):
            u, v = variables[ui], variables[vi]
            if u not in present or v not in present:
                continue
            if max_size is not None:
                cap = max_size
            else:
                e1, e2, s1 = closure_params
                cl = closure(H, (u, v), e1, e2, s1, enforce_size_gate=False,
                             residual_touch_only=residual_touch_only)
                cap = sum(H.multiplicity(i)
                          for i in _covered(H, cl.closure))
            caps[(u, v)] = cap
            if cap <= 0:
                continue
            found = enumerate_bad_structures(H, u, v, t, cap, node_budget=node_budget)
            if found:
                edges[(u, v)] = found[0]
    return BadStructureGraph(n=H.n, t=t, edges=edges, pair_caps=caps)


def _covered(H: Hypergraph, S) -> tuple:
    smask = 0
    for x in S:
        smask |= 1 << x
    return tuple(i for i, m in enumerate(H.edge_masks) if m and m & ~smask == 0)


@dataclass
class ContainmentReport:
    ok: bool
    pairs_checked: int
    corr_edges: int
    bad_edges: int
    violations: list  # ((u,v), (a,b), value) correlated but no bad structure

    def to_jsonable(self):
        return {
            "ok": self.ok,
            "pairs_checked": self.pairs_checked,
            "corr_edges": self.corr_edges,
            "bad_edges": self.bad_edges,
            "violations": [
                {"pair": list(p), "entry": list(e), "value": rat_str(val)}
                for p, e, val in self.violations
            ],
        }


def verify_correlation_within_bad(F: LocalDistributionFamily,
                                  Gb: BadStructureGraph) -> ContainmentReport:
    """Every pair without a bad structure must have an exactly-zero covariance
    block; equivalently the correlation graph is a subgraph of G_bad."""
    q = F.instance.predicate.q
    variables = tuple(F.variables())
    violations = []
    checked = 0
    corr_edges = 0
    for ui in range(len(variables)):
        for vi in range(ui + 1, len(variables)):
            u, v = variables[ui], variables[vi]
            checked += 1
            block = pair_covariance_block(F, u, v)
            nz = None
            for a in range(q):
                for b in range(q):
                    if block[a][b] != 0:
                        nz = ((a, b), block[a][b])
                        break
                if nz:
                    break
            if nz:
                corr_edges += 1
                if not Gb.has_edge(u, v):
                    violations.append(((u, v), nz[0], nz[1]))
    return ContainmentReport(ok=not violations, pairs_checked=checked,
                             corr_edges=corr_edges, bad_edges=len(Gb.edges),
                             violations=violations)


@dataclass
class ComponentBoundReport:
    status: str           # "passed" | "failed" | "skipped"
    reason: str = ""
    bound: int | None = None
    max_component: int | None = None
    failing_component: tuple | None = None
    chain: list = field(default_factory=list)

    def to_jsonable(self):
        out = {"status": self.status, "reason": self.reason, "bound": self.bound,
               "max_component": self.max_component}
        if self.failing_component is not None:
            out["failing_component"] = list(self.failing_component)
            out["chain"] = self.chain
        return out


def _gbad_components(Gb: BadStructureGraph):
    adj = {}
    for (u, v) in Gb.edges:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    seen = set()
    comps = []
    for v in sorted(adj):
        if v in seen:
            continue
        stack, comp = [v], []
        seen.add(v)
        while stack:
            w = stack.pop()
            comp.append(w)
            for x in adj[w]:
                if x not in seen:
                    seen.add(x)
                    stack.append(x)
        comps.append(tuple(sorted(comp)))
    return comps


def _chain_trace(H: Hypergraph, Gb: BadStructureGraph, component, k: int, t: int):
    """The union ordering behind the component bound: edges of the component
    ordered so each meets a preceding one, with the running union's size and
    neighborhood recorded (both sides of the union inequality, for replay)."""
    comp = set(component)
    pend = [p for p in Gb.edges if p[0] in comp and p[1] in comp]
    if not pend:
        return []
    chain = []
    covered = set()
    union_edges = []
    remaining = list(pend)
    # first edge: lexicographically least
    remaining.sort()
    current = [remaining.pop(0)]
    while current:
        e = current.pop(0)
        w = Gb.edges[e]
        union_edges = sorted(set(union_edges) | set(w.edges))
        covered.update(e)
        gamma = neighbors(H, union_edges)
        bound_rhs = (Frac(k) - Frac(t, 2)) * len(union_edges) + 1
        chain.append({
            "pair": list(e),
            "witness": list(w.edges),
            "union_size": len(union_edges),
            "union_gamma": len(gamma),
            "union_bound": rat_str(bound_rhs),
        })
        nxt = [p for p in remaining if p[0] in covered or p[1] in covered]
        for p in nxt:
            remaining.remove(p)
        current.extend(sorted(nxt))
    return chain


def component_bound_check(Gb: BadStructureGraph, k: int, delta,
                          expansion: ExpansionReport,
                          H: Hypergraph | None = None) -> ComponentBoundReport:
    """Every component of G_bad has at most floor(2k/delta) vertices, provided
    the expansion certificate actually covers the hypothesis: holds, has margin
    at least delta, and its size budget supports the union argument."""
    delta = Frac(delta)
    if delta <= 0:
        raise ValueError("delta must be positive")
    if not expansion.holds:
        return ComponentBoundReport(status="skipped",
                                    reason="expansion hypothesis not certified")
    need_e = Frac(k) - Frac(Gb.t, 2) + delta / 2
    if Frac(expansion.e) < need_e:
        return ComponentBoundReport(
            status="skipped",
            reason=f"certified e = {rat_str(expansion.e)} below required {rat_str(need_e)}")
    max_w = max((len(w.edges) for w in Gb.edges.values()), default=0)
    need_s = -(-2 * delta.denominator // delta.numerator) + max_w  # ceil(2/delta)+max|W|
    if expansion.s < need_s:
        return ComponentBoundReport(
            status="skipped",
            reason=f"certificate size {expansion.s} below union-argument budget {need_s}")
    bound = floor(Frac(2 * k) / delta)
    comps = _gbad_components(Gb)
    max_comp = max((len(c) for c in comps), default=0)
    if max_comp <= bound:
        return ComponentBoundReport(status="passed", bound=bound, max_component=max_comp)
    bad = next(c for c in comps if len(c) > bound)
    chain = _chain_trace(H, Gb, bad, k, Gb.t) if H is not None else []
    return ComponentBoundReport(status="failed", bound=bound, max_component=max_comp,
                                failing_component=bad, chain=chain,
                                reason="component exceeds 2k/delta")
