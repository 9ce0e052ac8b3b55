"""Utility-shaped non-cooperative games coordinated by a single public index.

Simulation library and CLI for decentralized resource allocation in which
agents optimize shaped private utilities while a broadcast scarcity index
enforces an aggregate capacity, plus the centralized benchmarks, quantized
variants, and KPI statistics needed to evaluate them.
"""

from .analysis import (KpiRecord, Moduli, StepsizeRegion, estimate_moduli,
                       estimate_moduli_from, fdr_bh, fit_contraction, fit_curve, kpis,
                       median_iqr, stepsize_region, tracking_error, wilcoxon_signed_rank)
from .benchmarks import (BenchmarkResult, centralized_primal_dual, centralized_proximal,
                         centralized_trajectory)
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .curve import ResponseCurve
from .discrete import (QuantizedBox, TwoLayerProblem, discrete_best_response,
                       discrete_equilibrium, quantize, two_layer_optimize)
from .dynamics import (BEST_RESPONSE_HYSTERESIS, DAMPED_GRADIENT, DivergenceError,
                       DynamicsConfig, GameState, RunResult, drift_step,
                       golden_section_max, run_trajectory, step_best_response_hysteresis,
                       step_damped_gradient, step_dual_index)
from .experiment import build_run_model, method_kind, run_experiment, run_one
from .model import (AGENTIC, AGENTIC_BID, DSH, PRICE_ONLY, SUPPLY_CHAIN, YANG_SMITH,
                    AgentSpec, GameModel, SignalMap, UtilityKind)

__version__ = "0.1.0"
