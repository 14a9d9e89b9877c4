"""Neighborhoods, boundary sets, expansion certification, the closure
algorithm, and boundary-constraint peeling.

Expansion is decided exactly: a set of edges T violates (s,e)-expansion when
|T| <= s and |Gamma(T)| < e|T| as rationals.  The verdict enumerates only
connected candidate sets (a violating set always contains a violating
connected component), with an exact 2^m pass to recover the globally
lexicographically-least witness when a violation exists.  All searches accept
a removed-vertex mask so the same machinery serves residual hypergraphs
H - Cl(S).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetExceededError, InternalInvariantError
from .instances import CounterRng, Hypergraph
from .rational import Frac, rat_str

_PC16 = np.array([bin(i).count("1") for i in range(1 << 16)], dtype=np.uint8)


def _popcount_arr(a):
    """Per-element popcount, int16 output (inputs are <= 64-bit masks)."""
    a = a.astype(np.uint64)
    pc = _PC16[(a & np.uint64(0xFFFF)).astype(np.int64)].astype(np.int16)
    pc += _PC16[((a >> np.uint64(16)) & np.uint64(0xFFFF)).astype(np.int64)]
    pc += _PC16[((a >> np.uint64(32)) & np.uint64(0xFFFF)).astype(np.int64)]
    pc += _PC16[((a >> np.uint64(48)) & np.uint64(0xFFFF)).astype(np.int64)]
    return pc


def neighbors(H: Hypergraph, T) -> tuple:
    """Union of the scopes of the edges indexed by T."""
    mask = 0
    for i in T:
        mask |= H.edge_masks[i]
    return _mask_to_vertices(mask)


def boundary(H: Hypergraph, T) -> tuple:
    """Vertices covered by exactly one constraint of T's edges (duplicate-scope
    constraints count with multiplicity, so they never create boundary)."""
    once = twice = 0
    for i in T:
        m = H.edge_masks[i]
        if H.multiplicity(i) > 1:
            twice |= m
        twice |= once & m
        once |= m
    return _mask_to_vertices(once & ~twice)


def _mask_to_vertices(mask: int) -> tuple:
    out = []
    v = 0
    while mask:
        if mask & 1:
            out.append(v)
        mask >>= 1
        v += 1
    return tuple(out)


@dataclass
class ExpansionReport:
    s: int
    e: Frac
    mode: str
    holds: bool
    method: str = "exhaustive"
    witness: tuple | None = None          # edge indices, lexicographically least
    witness_gamma: tuple | None = None    # the violated Gamma/boundary set
    witness_scope: str = "global"         # "global" or "connected" (fallback)
    subsets_checked: int | None = None

    def margin_delta(self, k: int, t: int) -> Frac:
        """Certified component-bound margin: 2(e - (k - t/2))."""
        return 2 * (Frac(self.e) - (k - Frac(t, 2)))

    def to_jsonable(self):
        out = {"s": self.s, "e": rat_str(self.e), "mode": self.mode,
               "holds": self.holds, "method": self.method}
        if self.witness is not None:
            out["witness"] = list(self.witness)
            out["witness_gamma"] = list(self.witness_gamma)
            out["witness_scope"] = self.witness_scope
        if self.subsets_checked is not None:
            out["subsets_checked"] = self.subsets_checked
        return out


def _residual_edges(H: Hypergraph, removed_mask: int):
    """Edges surviving vertex removal: (original index, residual vertex mask)."""
    out = []
    for i, m in enumerate(H.edge_masks):
        rm = m & ~removed_mask
        if rm:
            out.append((i, rm))
    return out


def _violates(gamma_pc: int, size: int, e: Frac) -> bool:
    e = Frac(e)
    return gamma_pc * e.denominator < e.numerator * size


def find_connected_violation(H: Hypergraph, s: int, e: Frac, removed_mask: int = 0,
                             node_budget: int = 2_000_000, require_touch: bool = False):
    """First connected violating edge set found (vertex mode), or None.

    Sound and complete for the existence decision: any violating set has a
    violating connected component.  Prunes branches whose Gamma already
    certifies every extension up to size s.

    require_touch restricts the search to sets containing an edge that meets
    the removed vertices; that is complete whenever H itself is (s1,e)-expanding
    for the same e or better (a residual set avoiding the removed vertices has
    its full Gamma and cannot violate), and much faster for closure loops.
    """
    e = Frac(e)
    edges = _residual_edges(H, removed_mask)
    if s <= 0 or not edges:
        return None
    prune_num = e.numerator * s  # prune when gamma_pc * den >= e_num * s
    adj = _adjacency(edges)
    visited = 0

    if require_touch and removed_mask:
        starts = [i for i, (orig, _) in enumerate(edges)
                  if H.edge_masks[orig] & removed_mask]
        canonical = False
    else:
        starts = range(len(edges))
        canonical = True

    for start in starts:
        if canonical:
            ext0 = tuple(d for d in adj[start] if d > start)
        else:
            ext0 = tuple(adj[start])
        stack = [((start,), edges[start][1], ext0)]
        while stack:
            S, gmask, ext = stack.pop()
            visited += 1
            if visited > node_budget:
                raise BudgetExceededError("connected-subset search budget exceeded",
                                          required=visited)
            gpc = int(gmask).bit_count()
            if gpc * e.denominator < e.numerator * len(S):
                return tuple(sorted(edges[i][0] for i in S))
            if len(S) >= s or gpc * e.denominator >= prune_num:
                continue
            known = set(S) | set(ext)
            for pos, c in enumerate(ext):
                if canonical:
                    grown = tuple(d for d in adj[c] if d > start and d not in known)
                else:
                    grown = tuple(d for d in adj[c] if d not in known)
                stack.append((S + (c,), gmask | edges[c][1], ext[pos + 1:] + grown))
                known.update(grown)
    return None


def _adjacency(edges):
    adj = [[] for _ in edges]
    for i in range(len(edges)):
        for j in range(i + 1, len(edges)):
            if edges[i][1] & edges[j][1]:
                adj[i].append(j)
                adj[j].append(i)
    return adj


def _subset_dp(H: Hypergraph, removed_mask: int, mode: str):
    """Gamma (or boundary) masks for all 2^m subsets of the residual edges.

    Returns (residual edge list, per-subset vertex masks, per-subset sizes).
    Memory is the binding budget: one mask word per subset.
    """
    if H.n > 63:
        raise BudgetExceededError("exhaustive subset pass supports n <= 63 vertices")
    edges = _residual_edges(H, removed_mask)
    me = len(edges)
    total = 1 << me
    dtype = np.uint32 if H.n <= 32 else np.uint64
    once = np.zeros(total, dtype=dtype)
    sizes = np.zeros(total, dtype=np.int8)
    if mode == "boundary":
        twice = np.zeros(total, dtype=dtype)
    for b, (orig, rm) in enumerate(edges):
        half = 1 << b
        gm = dtype(rm)
        if mode == "boundary":
            # duplicate-scope edges are "already twice" on their own vertices
            twice[half:2 * half] = twice[:half] | (once[:half] & gm)
            if H.multiplicity(orig) > 1:
                twice[half:2 * half] |= gm
        once[half:2 * half] = once[:half] | gm
        sizes[half:2 * half] = sizes[:half] + 1
    if mode == "boundary":
        return edges, once & ~twice, sizes
    return edges, once, sizes


def _lex_least(cands: np.ndarray, me: int) -> tuple:
    """Lexicographically least subset (as a sorted index tuple) among candidate
    bitmasks, by greedy prefix construction.

    At each index i, every live candidate agrees with the chosen prefix below
    i.  If the bare prefix is itself a candidate it wins (it is a prefix-tuple
    of every other live candidate); otherwise any candidate containing i beats
    every candidate whose next element exceeds i.
    """
    alive = cands.astype(np.int64)
    prefix_mask = np.int64(0)
    chosen = []
    for i in range(me):
        if (alive == prefix_mask).any():
            break
        bit = np.int64(1 << i)
        with_i = alive[(alive & bit) != 0]
        if len(with_i):
            alive = with_i
            prefix_mask |= bit
            chosen.append(i)
    return tuple(chosen)


def _violating_masks(H: Hypergraph, s: int, e: Frac, removed_mask: int, mode: str,
                     budget_log: int):
    e = Frac(e)
    edges = _residual_edges(H, removed_mask)
    me = len(edges)
    if me > budget_log:
        raise BudgetExceededError(
            f"exhaustive subset pass needs 2^{me} > 2^{budget_log}", required=1 << me)
    _, masks, sizes = _subset_dp(H, removed_mask, mode)
    gpc = _popcount_arr(masks).astype(np.int64)
    sz = sizes.astype(np.int64)
    viol = (sz >= 1) & (sz <= s) & (gpc * int(e.denominator) < int(e.numerator) * sz)
    return edges, np.flatnonzero(viol).astype(np.int64), sizes


def check_expansion(H: Hypergraph, s: int, e, mode: str = "vertex",
                    budget_log: int = 24, sample: int | None = None,
                    seed: int = 0) -> ExpansionReport:
    """Exact (s,e)-expansion / boundary-expansion certification.

    Exhaustive below the 2^budget_log subset budget; with `sample` set, checks
    that many random subsets instead (holds=True then only means "no violation
    found among the samples").  The witness, when present, is the
    lexicographically least violating subset by sorted edge-index tuple.
    """
    e = Frac(e)
    if s < 0:
        raise ValueError("s must be nonnegative")
    if mode not in ("vertex", "boundary"):
        raise ValueError(f"unknown mode {mode!r}")
    me = H.num_edges
    s_eff = min(s, me)

    if sample is not None:
        rng = CounterRng(seed)
        gamma_of = neighbors if mode == "vertex" else boundary
        for i in range(sample):
            if s_eff == 0:
                break
            size = rng.below(s_eff, "size", i) + 1
            pool = list(range(me))
            T = []
            for pos in range(size):
                T.append(pool.pop(rng.below(me - pos, "pick", i, pos)))
            T = tuple(sorted(T))
            g = gamma_of(H, T)
            if _violates(len(g), len(T), e):
                return ExpansionReport(s=s, e=e, mode=mode, holds=False, method="sampled",
                                       witness=T, witness_gamma=g, subsets_checked=i + 1)
        return ExpansionReport(s=s, e=e, mode=mode, holds=True, method="sampled",
                               subsets_checked=sample)

    if s_eff == 0:
        return ExpansionReport(s=s, e=e, mode=mode, holds=True)

    if mode == "vertex":
        hit = find_connected_violation(H, s_eff, e)
        if hit is None:
            return ExpansionReport(s=s, e=e, mode=mode, holds=True)
        if me <= budget_log and H.n <= 63:
            edges, viol_idx, _ = _violating_masks(H, s_eff, e, 0, "vertex", budget_log)
            least = _lex_least(viol_idx, len(edges))
            T = tuple(edges[i][0] for i in least)
            return ExpansionReport(s=s, e=e, mode=mode, holds=False,
                                   witness=T, witness_gamma=neighbors(H, T))
        return ExpansionReport(s=s, e=e, mode=mode, holds=False,
                               witness=hit, witness_gamma=neighbors(H, hit),
                               witness_scope="connected")

    # boundary mode: the boundary map is not monotone, so decide by the full pass
    edges, viol_idx, _ = _violating_masks(H, s_eff, e, 0, "boundary", budget_log)
    if len(viol_idx) == 0:
        return ExpansionReport(s=s, e=e, mode=mode, holds=True)
    least = _lex_least(viol_idx, len(edges))
    T = tuple(edges[i][0] for i in least)
    return ExpansionReport(s=s, e=e, mode=mode, holds=False,
                           witness=T, witness_gamma=boundary(H, T))


# ---------------------------------------------------------------------------
# Closure


@dataclass
class ClosureResult:
    closure: tuple
    s2: int
    trace: list = field(default_factory=list)  # (step, added vertex, absorbed edges, absorbed gamma)
    params: dict = field(default_factory=dict)
    bounds: dict = field(default_factory=dict)

    def to_jsonable(self):
        return {
            "closure": list(self.closure),
            "s2": self.s2,
            "trace": [{"step": st, "vertex": v, "absorbed": list(N), "gamma_added": list(g)}
                      for st, v, N, g in self.trace],
            "params": self.params,
            "bounds": self.bounds,
        }


def _largest_violator(H: Hypergraph, s2: int, e2: Frac, removed_mask: int,
                      budget_log: int):
    """Largest (cardinality, then lexicographically least) residual edge set N
    with |N| <= s2 and |Gamma(N) \\ removed| <= e2 |N|.  Note <= here: the
    absorption rule takes sets at the expansion threshold too.

    Searched by decreasing cardinality; within one cardinality, combinations
    run in lexicographic order so the first hit is the tie-break winner.  The
    largest violator may be disconnected (unions of threshold sets are
    threshold sets), so no connectivity shortcut applies.  Falls back to the
    subset pass when the combination count gets large.
    """
    e2 = Frac(e2)
    edges = _residual_edges(H, removed_mask)
    me = len(edges)
    if me == 0 or s2 <= 0:
        return None
    s2 = min(s2, me)
    num, den = int(e2.numerator), int(e2.denominator)

    total_combos = sum(_comb(me, j) for j in range(1, s2 + 1))
    if total_combos <= 300_000:
        from itertools import combinations as _combos
        for size in range(s2, 0, -1):
            for combo in _combos(range(me), size):
                g = 0
                for i in combo:
                    g |= edges[i][1]
                if g.bit_count() * den <= num * size:
                    return tuple(edges[i][0] for i in combo)
        return None

    if me > budget_log:
        raise BudgetExceededError(f"closure violator search needs 2^{me}", required=1 << me)
    _, masks, sizes = _subset_dp(H, removed_mask, "vertex")
    gpc = _popcount_arr(masks).astype(np.int64)
    sz = sizes.astype(np.int64)
    ok = (sz >= 1) & (sz <= s2) & (gpc * den <= num * sz)
    idx = np.flatnonzero(ok).astype(np.int64)
    if len(idx) == 0:
        return None
    best = int(sizes[idx].max())
    idx = idx[sizes[idx] == best]
    least = _lex_least(idx, me)
    return tuple(edges[i][0] for i in least)


def _comb(n: int, r: int) -> int:
    if r < 0 or r > n:
        return 0
    out = 1
    for i in range(r):
        out = out * (n - i) // (i + 1)
    return out


def closure(H: Hypergraph, S_seq, e1, e2, s1: int, enforce_size_gate: bool = True,
            budget_log: int = 24, residual_touch_only: bool = False) -> ClosureResult:
    """Absorbing closure of a vertex sequence.

    Vertices are added one at a time; whenever the residual hypergraph
    H - Cl(S) stops being (s2,e2)-expanding, the largest low-expansion edge set
    N (|N| <= s2, |Gamma(N)| <= e2|N| in the residual, ties by cardinality then
    lexicographic order) is absorbed into the closure and s2 drops by |N|.

    The residual (s2,e2)-expansion postcondition is re-checked and is
    unconditional (maximality of the absorbed set guarantees it).  The size
    bounds |Cl| <= e1/(e1-e2)|S| and s2 >= s1 - |S|/(e1-e2) hold under the
    (s1,e1)-expansion premise on H and are recorded in `bounds`, not raised.
    """
    e1, e2 = Frac(e1), Frac(e2)
    if not 0 < e2 < e1:
        raise ValueError("need 0 < e2 < e1")
    u = len(S_seq)
    if enforce_size_gate and not u < (e1 - e2) * s1:
        raise ValueError(f"|S| = {u} must be < (e1-e2) s1 = {rat_str((e1 - e2) * s1)}")
    cl_mask = 0
    s2 = s1
    trace = []
    for step, x in enumerate(S_seq):
        cl_mask |= 1 << x
        while s2 > 0:
            if find_connected_violation(H, s2, e2, removed_mask=cl_mask,
                                        require_touch=residual_touch_only) is None:
                break
            N = _largest_violator(H, s2, e2, cl_mask, budget_log)
            if N is None:
                # existence used strict <, absorption uses <=; a strict violator
                # is in particular a <= set, so this cannot happen
                raise InternalInvariantError("violation reported but no absorbable set found")
            gamma_new = [v for v in neighbors(H, N) if not (cl_mask >> v) & 1]
            for v in gamma_new:
                cl_mask |= 1 << v
            s2 -= len(N)
            trace.append((step, x, N, tuple(gamma_new)))

    cl = _mask_to_vertices(cl_mask)
    if s2 > 0 and find_connected_violation(H, s2, e2, removed_mask=cl_mask,
                                           require_touch=residual_touch_only) is not None:
        raise InternalInvariantError("residual hypergraph is not (s2,e2)-expanding after closure")

    gap = e1 - e2
    appendix_const = e1 / gap
    stated_const = (H.k + 2 * e1 - e2) / (2 * gap)
    bounds = {
        "residual_expanding": True,
        "size_bound_holds": len(cl) <= appendix_const * u,
        "size_bound_constant": rat_str(appendix_const),
        "size_bound_constant_stated": rat_str(stated_const),
        "s2_bound_holds": Frac(s2) >= s1 - Frac(u) / gap,
    }
    return ClosureResult(closure=cl, s2=s2, trace=trace,
                         params={"e1": rat_str(e1), "e2": rat_str(e2), "s1": s1},
                         bounds=bounds)


# ---------------------------------------------------------------------------
# Peeling


def covered_edges(H: Hypergraph, S) -> tuple:
    """Edges whose vertex set is entirely inside S."""
    smask = _mask(S)
    return tuple(i for i, m in enumerate(H.edge_masks) if m and m & ~smask == 0)


def _mask(vertices) -> int:
    m = 0
    for v in vertices:
        m |= 1 << v
    return m


def peel(H: Hypergraph, S0, protected, t: int):
    """Repeatedly strip the unprotected boundary vertices of a covered
    constraint that has at least k-t+1 of them (lowest edge index first),
    until every covered constraint has at most k-t such vertices.

    Returns (final vertex set, trace of (edge index, removed vertices)).
    """
    S = set(S0)
    prot = set(protected)
    need = H.k - t + 1
    trace = []
    while True:
        cov = covered_edges(H, S)
        bset = set(boundary(H, cov))
        victim = None
        for i in cov:
            B = (set(H.edges[i]) & bset) - prot
            if len(B) >= need:
                victim = (i, tuple(sorted(B)))
                break
        if victim is None:
            return tuple(sorted(S)), trace
        S -= set(victim[1])
        trace.append(victim)
