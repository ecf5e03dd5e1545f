"""Risk-sensitive solvers for finite Markov decision processes.

Criteria: risk-neutral discounted reward, the certainty equivalent applied
stage by stage (nested risk), the certainty equivalent of the total
discounted reward (state augmentation), and the ergodic entropic cost,
each paired with a seeded Monte-Carlo verification path.
"""

from .errors import (
    ChainStructureError,
    DistributionError,
    EnumerationCapError,
    IterationLimitError,
    ModelFormatError,
    ModelValidationError,
    ParameterError,
    PolicyError,
    RiskMdpError,
    UnsupportedUtilityError,
)
from .mdp import (
    FiniteMdp,
    StagePolicy,
    StationaryPolicy,
    check_unichain_aperiodic,
    enumerate_policies,
    induced_chain,
    load,
    save,
)
from .oce import (
    DiscreteDistribution,
    OceResult,
    UtilitySpec,
    certainty_equivalent,
    cvar,
    entropic,
    oce,
    oce_cost,
    oce_generic,
)
from .report import SolveReport

__all__ = [
    "ChainStructureError",
    "DiscreteDistribution",
    "DistributionError",
    "EnumerationCapError",
    "FiniteMdp",
    "IterationLimitError",
    "ModelFormatError",
    "ModelValidationError",
    "OceResult",
    "ParameterError",
    "PolicyError",
    "RiskMdpError",
    "SolveReport",
    "StagePolicy",
    "StationaryPolicy",
    "UnsupportedUtilityError",
    "UtilitySpec",
    "certainty_equivalent",
    "check_unichain_aperiodic",
    "cvar",
    "entropic",
    "enumerate_policies",
    "induced_chain",
    "load",
    "oce",
    "oce_cost",
    "oce_generic",
    "save",
]

__version__ = "0.1.0"
