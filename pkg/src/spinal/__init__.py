"""Spinal constructions for density-dependent multi-type branching populations.

Exact finite-K simulation with genealogy, the m-function and the
time-inhomogeneous spine, and the large-population limit objects.
"""

from .kernels import BACKEND, HAS_COMPILED
from .model import (ModelError, ModelSpec, OffspringEvent, PsiWeight, RatePolynomial, TypeSpace, build_preset,
                    enumerate_states, eval_rate, load_model, parse_model, render_model, validate)
from .msolver import (MTable, SolverError, build_generator, dense_m, m_at, solve_m, solve_model, toy_m_closed_form,
                      toy_rho_closed_form)
from .popsim import (GenealogyForest, estimate_m_mc, extract_lineage, many_to_one_lhs, simulate_population)
from .spine import (generator_check, inhom_spine_rates, many_to_one_rhs, simulate_hom_spine_k,
                    simulate_inhom_spine)
from .lln import (couple_spines, estimate_sup_deviation, flow_lipschitz_check, simulate_hom_spine_star,
                  simulate_limit_spine, simulate_weighted_hom_limit, solve_flow, solve_m_characteristics)
from .experiments import ExperimentReport, run_lln_convergence, run_many_to_one, run_scaling_suite

__version__ = "0.1.0"
