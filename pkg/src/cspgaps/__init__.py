"""Exact-arithmetic verification lab for local-distribution relaxations of
random constraint satisfaction problems.

The package builds the objects behind hierarchy feasibility arguments at desk
scale and certifies every checkable claim about them with exact rational
arithmetic: uniform-marginal supporting distributions (by LP), random
instances and their hypergraphs, expansion certificates, absorbing closures,
consistent local distribution families, moment/covariance matrices with exact
PSD certificates, correlation graphs, and the dense substructures that explain
every correlation.
"""

from .errors import (
    BudgetExceededError,
    InternalInvariantError,
    LocalContradictionError,
    LocalityError,
    UnsupportedFormError,
)
from .rational import Frac, rat, rat_str
from .predicates import (
    Predicate,
    SupportDistribution,
    is_t_wise_uniform,
    named_predicate,
    predicate_report,
    support_complexity,
    t_wise_support,
)
from .instances import (
    Constraint,
    CounterRng,
    EncodedSystem,
    Hypergraph,
    Instance,
    brute_force_optimum,
    encode,
    hypergraph_from_edges,
    hypergraph_of,
    random_instance,
    satisfied_fraction,
)
from .structure import (
    ClosureResult,
    ExpansionReport,
    boundary,
    check_expansion,
    closure,
    covered_edges,
    neighbors,
    peel,
)
from .pseudodist import (
    LocalDistribution,
    LocalDistributionFamily,
    constraints_covered,
    corrupt_family,
    shifted_weight,
    verify_local_consistency,
    verify_support,
)
from .psd import (
    PsdCertificate,
    SymmetricRationalMatrix,
    conditioning_decomposition_check,
    covariance_matrix,
    moment_matrix,
    psd_exact,
    psd_float,
    schur_equivalence_check,
)
from .corrgraph import (
    BadStructure,
    CorrelationGraph,
    bad_structure_graph,
    block_psd_verify,
    build_correlation_graph,
    component_bound_check,
    connected_components,
    enumerate_bad_structures,
    is_bad_structure,
    verify_correlation_within_bad,
)
from .pipeline import PipelineConfig, auto_parameters, run_pipeline, sweep

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
