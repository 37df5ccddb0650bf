"""Numerical laboratory for infinite-horizon backward doubly stochastic differential equations."""

__version__ = "0.1.0"

from .core import (  # noqa: E402
    CoefficientSet,
    Dimensions,
    LipschitzWeights,
    ProblemSpec,
    TerminalCondition,
    TimeGrid,
    check_h2_sampled,
    check_h3,
    kappa,
)
from .stoch_calc import (  # noqa: E402
    BrownianBundle,
    ItoQuadruple,
    backward_integral,
    forward_integral,
    generate_bundle,
    ito_check,
)
from .horizon import GronwallProblem, choose_truncation, gronwall_bound, gronwall_verify  # noqa: E402
from .solver import BDSDESolver, SolutionPair, SolverConfig, bnorm, solve, uniqueness_probe  # noqa: E402
from .comparison import (  # noqa: E402
    ComparisonSetup,
    check_g_componentwise,
    check_h4_sampled,
    compare,
    phi_epsilon,
    random_linear_pair,
)
from .oracle import LinearExampleSpec, derived_linear_solution, example7_problem, paper_explicit_form  # noqa: E402
from .expr import parse_coefficient  # noqa: E402
from .config import parse_config  # noqa: E402

__all__ = [
    "__version__",
    "CoefficientSet",
    "Dimensions",
    "LipschitzWeights",
    "ProblemSpec",
    "TerminalCondition",
    "TimeGrid",
    "check_h2_sampled",
    "check_h3",
    "kappa",
    "BrownianBundle",
    "ItoQuadruple",
    "backward_integral",
    "forward_integral",
    "generate_bundle",
    "ito_check",
    "GronwallProblem",
    "choose_truncation",
    "gronwall_bound",
    "gronwall_verify",
    "BDSDESolver",
    "SolutionPair",
    "SolverConfig",
    "bnorm",
    "solve",
    "uniqueness_probe",
    "ComparisonSetup",
    "check_g_componentwise",
    "check_h4_sampled",
    "compare",
    "phi_epsilon",
    "random_linear_pair",
    "LinearExampleSpec",
    "derived_linear_solution",
    "example7_problem",
    "paper_explicit_form",
    "parse_coefficient",
    "parse_config",
]
