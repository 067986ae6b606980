"""Causal inference engine: graphs, SCMs, exact discrete inference,
kernel independence tests, structure discovery, and effect estimation."""

from .data import Dataset
from .graph import (
    AdjustmentSets,
    Cpdag,
    Dag,
    count_dags,
    cpdag_of,
    d_separated,
    enumerate_adjustment_sets,
    enumerate_dags,
    implied_independences,
    is_valid_adjustment_set,
    markov_equivalent,
    skeleton_and_vstructures,
    topological_order,
)
from .scm import (
    CounterfactualDistribution,
    Intervention,
    Mechanism,
    Scm,
    counterfactual,
    induced_graph,
    intervene,
    interventional_mean,
    ite,
    reduced_form_sample,
    sample,
)
from .cgm import (
    Cpt,
    DiscreteCgm,
    Factor,
    adjustment_formula,
    cmi,
    condition,
    front_door_formula,
    joint,
    truncated_factorization,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
