"""End-to-end experiment orchestration.

One seed runs: generate -> certify expansion -> build the local-distribution
family -> verify consistency and support -> covariance PSD via block
decomposition -> bad-structure graph, containment, component bound ->
sampled conditionings (moment-matrix PSD, equivalence, decomposition) ->
conditional families (consistency, containment in the reduced hypergraph).

Checks that depend on an uncertified hypothesis are marked skipped, not
failed; the exit code is 0 iff nothing failed.
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from itertools import combinations
from math import floor

from .corrgraph import (
    bad_structure_graph,
    block_psd_verify,
    build_correlation_graph,
    component_bound_check,
    connected_components,
    verify_correlation_within_bad,
)
from .errors import (
    BudgetExceededError,
    ConfigError,
    LocalContradictionError,
    LocalityError,
)
from .instances import CounterRng, hypergraph_of, random_instance
from .predicates import (
    Predicate,
    SupportDistribution,
    named_predicate,
    support_complexity,
    t_wise_support,
)
from .pseudodist import LocalDistributionFamily, corrupt_family, verify_local_consistency, verify_support
from .psd import (
    conditioning_decomposition_check,
    covariance_matrix,
    moment_matrix,
    psd_exact,
    psd_float,
    schur_equivalence_check,
)
from .rational import Frac, rat, rat_str
from .structure import check_expansion

SCHEMA_VERSION = "1"


def auto_parameters(k: int, t: int, n: int, epsilon=Frac(1, 2)):
    """Desk-scale defaults: e1 = k - t/2 + eps/2 and e2 = k - t/2 + eps/4 with
    the certificate size s1 = floor(n / (2 e1)), which keeps (s1, e1)
    certificates geometrically attainable.  delta (the component-bound margin)
    equals epsilon by construction."""
    epsilon = Frac(epsilon)
    if epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    e1 = k - Frac(t, 2) + epsilon / 2
    e2 = k - Frac(t, 2) + epsilon / 4
    if e2 <= 0:
        raise ConfigError("k - t/2 + eps/4 must be positive")
    s1 = max(1, floor(Frac(n) / (2 * e1)))
    return e1, e2, s1, epsilon


@dataclass
class PipelineConfig:
    predicate: object            # name string or {"k","q","table"} dict
    n: int
    m: int
    seeds: list
    t: int
    radius: int = 4
    epsilon: object = "1/2"
    e1: object = None            # explicit closure parameters override auto
    e2: object = None
    s1: int = None
    delta: object = None         # component-bound margin; default = certified eps
    consistency_size: int = 3
    conditional_samples: int = 20
    conditional_x_max: int = 2
    conditional_families: int = 5
    conditional_check_sets: int = 8
    decomposition_samples: int = 3
    allow_repeats: bool = False
    expansion_budget_log: int = 24
    corrupt: dict = None

    def resolve_predicate(self) -> Predicate:
        if isinstance(self.predicate, str):
            return named_predicate(self.predicate)
        p = self.predicate
        return Predicate(k=int(p["k"]), q=int(p["q"]),
                         table=tuple(int(v) for v in p["table"]),
                         name=p.get("name", "custom"))

    def resolve_params(self, P: Predicate):
        eps = rat(self.epsilon)
        if self.e1 is not None or self.e2 is not None or self.s1 is not None:
            if self.e1 is None or self.e2 is None or self.s1 is None:
                raise ConfigError("set all of e1, e2, s1 or none of them")
            e1, e2, s1 = rat(self.e1), rat(self.e2), int(self.s1)
            if not 0 < e2 < e1:
                raise ConfigError("need 0 < e2 < e1")
        else:
            e1, e2, s1, _ = auto_parameters(P.k, self.t, self.n, eps)
        delta = rat(self.delta) if self.delta is not None else 2 * (e1 - (P.k - Frac(self.t, 2)))
        if delta <= 0:
            raise ConfigError("certified margin delta must be positive")
        return e1, e2, s1, delta

    @classmethod
    def from_jsonable(cls, obj: dict) -> "PipelineConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**obj)

    def to_jsonable(self):
        out = {}
        for name in self.__dataclass_fields__:
            val = getattr(self, name)
            out[name] = val
        return out


def _check(status: str, reason: str = "", **detail):
    rec = {"status": status}
    if reason:
        rec["reason"] = reason
    if detail:
        rec.update(detail)
    return rec


def _witness_mu(P: Predicate, t: int) -> SupportDistribution:
    if t - 1 == 0:
        sats = list(P.satisfying())
        w = Frac(1, len(sats))
        return SupportDistribution(P, {z: w for z in sats})
    mu = t_wise_support(P, t - 1)
    if mu is None:
        raise ConfigError(
            f"no (t-1)-wise witness: t = {t} exceeds the predicate's support "
            f"complexity {support_complexity(P)}")
    return mu


def _sample_assignment(dist, rng: CounterRng, *labels):
    """Exact sampling from a rational distribution via a common denominator."""
    den = 1
    for p in dist.probs:
        den = den * int(p.denominator) // math.gcd(den, int(p.denominator))
    r = rng.below(den, *labels)
    acc = 0
    for alpha, p in zip(dist.assignments(), dist.probs):
        acc += int(p.numerator) * (den // int(p.denominator))
        if r < acc:
            return alpha
    raise AssertionError("distribution did not sum to one")


def _run_seed(config: PipelineConfig, P: Predicate, mu: SupportDistribution, seed: int):
    t0 = time.monotonic()
    e1, e2, s1, delta = config.resolve_params(P)
    record = {"seed": seed, "checks": {}, "timings": {}}
    checks = record["checks"]

    I = random_instance(P, config.n, config.m, seed, allow_repeats=config.allow_repeats)
    H = hypergraph_of(I)
    cert = check_expansion(H, s1, e1, mode="vertex", budget_log=config.expansion_budget_log)
    record["expansion"] = cert.to_jsonable()
    record["certified"] = cert.holds
    checks["expansion_certificate"] = _check("pass" if cert.holds else "skip",
                                             "" if cert.holds else "instance is not an expander at (s1,e1)")

    family = LocalDistributionFamily(
        I, mu, radius=config.radius, e1=e1, e2=e2, s1=s1,
        enforce_size_gate=False, residual_fast=cert.holds)

    sets = [tuple(c) for size in range(1, config.consistency_size + 1)
            for c in combinations(range(config.n), size)]
    try:
        for S in sets:
            family.dist(S)
    except (LocalContradictionError, BudgetExceededError) as exc:
        reason = f"degenerate instance: {exc}"
        record["degenerate"] = str(exc)
        for name in ("local_consistency", "support", "sigma_block_psd",
                     "corr_within_bad", "component_bound", "conditional_psd",
                     "conditional_consistency", "conditional_containment",
                     "decomposition", "schur_equivalence"):
            checks[name] = _check("skip", reason)
        record["timings"]["total_s"] = time.monotonic() - t0
        return record

    if config.corrupt:
        record["corruption"] = corrupt_family(family, **config.corrupt)

    # Failures of hypothesis-free claims always fail; claims conditional on
    # expansion degrade to "skip (violations recorded)" on uncertified seeds.
    # Injected corruption forces hard failures so negative controls exit 1.
    hard = cert.holds or bool(config.corrupt)

    def gated(name, ok, detail, conditional=True, **extra):
        if ok:
            checks[name] = _check("pass", **extra)
        elif conditional and not hard:
            checks[name] = _check("skip", "expansion hypothesis not certified "
                                  "(violations recorded)", detail=detail, **extra)
        else:
            checks[name] = _check("fail", detail=detail, **extra)

    cons = verify_local_consistency(family, sets)
    gated("local_consistency", cons.ok, cons.to_jsonable())

    sup = verify_support(family, I)
    gated("support", sup.ok, sup.to_jsonable(), conditional=False)

    t1 = time.monotonic()
    Gc = build_correlation_graph(family)
    record["corr_graph"] = {"edges": len(Gc.edges)}
    try:
        block = block_psd_verify(family, Gc)
        gated("sigma_block_psd", block.ok, block.to_jsonable())
    except LocalityError as exc:
        sigma = covariance_matrix(family)
        ce, cf = psd_exact(sigma), psd_float(sigma)
        ok = ce.verdict == "psd" and cf.verdict == "psd"
        gated("sigma_block_psd", ok,
              {"reason": f"component exceeded radius ({exc}); full-matrix fallback",
               "exact": ce.verdict, "float": cf.verdict})
    record["timings"]["sigma_s"] = time.monotonic() - t1

    t1 = time.monotonic()
    Gb = bad_structure_graph(H, config.t, closure_params=(e1, e2, s1),
                             residual_touch_only=cert.holds)
    record["gbad"] = {"edges": len(Gb.edges),
                      "max_component": max((len(c) for c in _comp_sizes(Gb)), default=0)}
    contain = verify_correlation_within_bad(family, Gb)
    gated("corr_within_bad", contain.ok, contain.to_jsonable(), conditional=False)
    comp = component_bound_check(Gb, P.k, delta, cert, H)
    checks["component_bound"] = _check(
        {"passed": "pass", "failed": "fail", "skipped": "skip"}[comp.status],
        comp.reason, detail=comp.to_jsonable())
    record["timings"]["gbad_s"] = time.monotonic() - t1

    t1 = time.monotonic()
    rng = CounterRng(seed)
    cond_results = []
    cond_fail = None
    schur_fail = None
    decomp_fail = None
    families_checked = 0
    cond_cons_fail = None
    cond_contain_fail = None
    decomp_done = 0
    for i in range(config.conditional_samples):
        size = 1 + rng.below(config.conditional_x_max, "xsize", i)
        pool = list(range(config.n))
        X = []
        for pos in range(size):
            X.append(pool.pop(rng.below(config.n - pos, "xpick", i, pos)))
        X = tuple(sorted(X))
        dX = family.dist(X)
        alpha = _sample_assignment(dX, rng, "alpha", i)
        Mx = moment_matrix(family, X, alpha)
        ce = psd_exact(Mx)
        cf = psd_float(Mx)
        eq = schur_equivalence_check(family, X, alpha)
        cond_results.append({"X": list(X), "alpha": list(alpha), "exact": ce.verdict,
                             "float": cf.verdict, "schur_ok": eq.ok})
        if ce.verdict != "psd" and cond_fail is None:
            cond_fail = {"X": list(X), "alpha": list(alpha),
                         "witness": [rat_str(w) for w in ce.witness]}
        if not eq.ok and schur_fail is None:
            schur_fail = {"X": list(X), "alpha": list(alpha)}
        if decomp_done < config.decomposition_samples and len(X) <= config.radius - 2:
            extras = [v for v in range(config.n) if v not in X]
            T = tuple(sorted(X + (extras[rng.below(len(extras), "textra", i)],))) \
                if len(X) < config.radius - 2 else X
            rep = conditioning_decomposition_check(family, X, T, alpha)
            decomp_done += 1
            if not rep.ok and decomp_fail is None:
                decomp_fail = {"X": list(X), "T": list(T), "alpha": list(alpha),
                               "detail": rep.to_jsonable()}
        if families_checked < config.conditional_families:
            families_checked += 1
            Fc = family.condition(X, alpha)
            csets = _conditional_sets(config, rng, X, i)
            crep = verify_local_consistency(Fc, csets)
            if not crep.ok and cond_cons_fail is None:
                cond_cons_fail = {"X": list(X), "alpha": list(alpha),
                                  "detail": crep.to_jsonable()}
            Hx = H.remove_vertices(X)
            Gbx = bad_structure_graph(Hx, config.t, closure_params=(e1, e2, s1),
                                      residual_touch_only=cert.holds,
                                      variables=[v for v in range(config.n) if v not in X])
            ctn = verify_correlation_within_bad(Fc, Gbx)
            if not ctn.ok and cond_contain_fail is None:
                cond_contain_fail = {"X": list(X), "alpha": list(alpha),
                                     "detail": ctn.to_jsonable()}

    gated("conditional_psd", cond_fail is None, cond_fail, samples=len(cond_results))
    gated("schur_equivalence", schur_fail is None, schur_fail, conditional=False,
          samples=len(cond_results))
    gated("decomposition", decomp_fail is None, decomp_fail, samples=decomp_done)
    gated("conditional_consistency", cond_cons_fail is None, cond_cons_fail,
          samples=families_checked)
    gated("conditional_containment", cond_contain_fail is None, cond_contain_fail,
          conditional=False, samples=families_checked)
    record["conditional"] = cond_results
    record["timings"]["conditional_s"] = time.monotonic() - t1
    record["timings"]["total_s"] = time.monotonic() - t0
    return record


def _comp_sizes(Gb):
    adj = {}
    for (u, v) in Gb.edges:
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    seen, comps = set(), []
    for v in sorted(adj):
        if v in seen:
            continue
        stack, comp = [v], set()
        seen.add(v)
        while stack:
            w = stack.pop()
            comp.add(w)
            for x in adj[w]:
                if x not in seen:
                    seen.add(x)
                    stack.append(x)
        comps.append(comp)
    return comps


def _conditional_sets(config: PipelineConfig, rng: CounterRng, X, tag):
    rad = config.radius - len(X)
    out = []
    pool = [v for v in range(config.n) if v not in X]
    for j in range(config.conditional_check_sets):
        size = 2 + rng.below(max(1, rad - 1), "cset", tag, j)
        size = min(size, rad, len(pool))
        picked = []
        local = list(pool)
        for pos in range(size):
            picked.append(local.pop(rng.below(len(local), "cpick", tag, j, pos)))
        out.append(tuple(sorted(picked)))
    return sorted(set(out))


@dataclass
class PipelineReport:
    config: dict
    params: dict
    records: list
    schema_version: str = SCHEMA_VERSION
    aggregate: dict = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return 1 if self.aggregate.get("failed", 0) else 0

    def to_jsonable(self, include_timings: bool = True):
        records = []
        for rec in self.records:
            rec = json.loads(json.dumps(_plain(rec)))
            if not include_timings:
                rec.pop("timings", None)
            records.append(rec)
        return {
            "schema_version": self.schema_version,
            "config": _plain(self.config),
            "params": _plain(self.params),
            "aggregate": _plain(self.aggregate),
            "records": records,
        }

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_jsonable(include_timings), sort_keys=True, indent=1)


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (int, float, str, bool)) or obj is None:
        return obj
    return str(obj)


def run_pipeline(config: PipelineConfig) -> PipelineReport:
    P = config.resolve_predicate()
    if not 1 <= config.t <= P.k:
        raise ConfigError(f"t must lie in [1,{P.k}]")
    mu = _witness_mu(P, config.t)
    e1, e2, s1, delta = config.resolve_params(P)
    workers = int(os.environ.get("CSPGAPS_WORKERS", "1"))
    seeds = list(config.seeds)
    if workers > 1 and len(seeds) > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_seed_entry, [(config, P, mu, s) for s in seeds]))
    else:
        records = [_run_seed(config, P, mu, s) for s in seeds]
    records.sort(key=lambda r: r["seed"])
    agg = {"seeds": len(records), "certified": sum(1 for r in records if r.get("certified")),
           "degenerate": sum(1 for r in records if "degenerate" in r),
           "passed": 0, "failed": 0, "skipped": 0, "failed_checks": []}
    for rec in records:
        for name, chk in rec["checks"].items():
            if chk["status"] == "pass":
                agg["passed"] += 1
            elif chk["status"] == "fail":
                agg["failed"] += 1
                agg["failed_checks"].append({"seed": rec["seed"], "check": name})
            else:
                agg["skipped"] += 1
    return PipelineReport(
        config=config.to_jsonable(),
        params={"e1": rat_str(e1), "e2": rat_str(e2), "s1": s1,
                "delta": rat_str(delta), "radius": config.radius},
        records=records,
        aggregate=agg,
    )


def _seed_entry(args):
    config, P, mu, seed = args
    return _run_seed(config, P, mu, seed)


# ---------------------------------------------------------------------------
# Sweep


def _integer_root(x: int, r: int) -> int:
    """floor(x^(1/r)), exact."""
    if x < 0 or r < 1:
        raise ValueError("need x >= 0, r >= 1")
    hi = 1
    while hi**r <= x:
        hi *= 2
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if mid**r <= x:
            lo = mid
        else:
            hi = mid
    return lo


def parse_m_expression(expr, n: int) -> int:
    """m values for sweeps: plain ints, 'n', 'n/2', '2n', or 'n^<p/q>'
    (the latter computed as floor((n^p)^(1/q)), exactly)."""
    if isinstance(expr, int):
        return expr
    s = str(expr).strip().replace(" ", "")
    if s.isdigit():
        return int(s)
    if s == "n":
        return n
    if s.startswith("n^"):
        g = rat(s[2:])
        return _integer_root(n ** int(g.numerator), int(g.denominator))
    if s.startswith("n/"):
        return n // int(s[2:])
    if s.endswith("n") and s[:-1].isdigit():
        return int(s[:-1]) * n
    raise ConfigError(f"cannot parse m expression {expr!r}")


def sweep(config: PipelineConfig, m_values, include_timings: bool = False):
    """Rows of (n, m, seed, expansion_pass, pipeline_pass, max_gbad_component,
    runtime_s); no aggregate thresholds asserted."""
    rows = [("n", "m", "seed", "expansion_pass", "pipeline_pass",
             "max_gbad_component", "runtime_s")]
    P = config.resolve_predicate()
    mu = _witness_mu(P, config.t)
    for mexpr in m_values:
        m = parse_m_expression(mexpr, config.n)
        for seed in config.seeds:
            cfg = PipelineConfig(**{**config.to_jsonable(), "m": m, "seeds": [seed]})
            t0 = time.monotonic()
            rec = _run_seed(cfg, P, mu, seed)
            dt = time.monotonic() - t0
            failed = any(c["status"] == "fail" for c in rec["checks"].values())
            rows.append((
                config.n, m, seed,
                "1" if rec.get("certified") else "0",
                "0" if failed else "1",
                rec.get("gbad", {}).get("max_component", ""),
                f"{dt:.3f}" if include_timings else "",
            ))
    return rows
