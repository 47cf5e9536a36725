"""Simulation of distributed learning ensembles with one-bit agents.

Agents each hold one labelled example and answer a broadcast query with a
single bit (or by abstaining); a fusion center turns the bits into a label
or a real-valued estimate.
"""

from .agents import (
    ABSTAIN,
    DecisionRuleSpec,
    RateSchedule,
    Response,
    RuleKind,
    Theorem,
    clip_map,
    delta_bar,
    respond,
    schedule_check,
)
from .counterexample import (
    CounterexampleInstance,
    build_auxiliary,
    inconsistency_report,
    shipped_instance,
    transfer_family,
    verify_match,
)
from .distributions import (
    SHIPPED,
    DiscreteAtoms,
    LabelSpace,
    PiecewiseLinearEta1D,
    RegressionAdditiveNoise1D,
    TrainingSet,
    bayes_classifier,
    bayes_risk,
    regression_fn,
    sample_training,
    shipped,
)
from .ensemble import (
    Ensemble,
    ModelKind,
    RiskEstimate,
    binomial_reciprocal_check,
    convergence_sweep,
    estimate_risk,
    margin_stats,
    predict,
)
from .errors import (
    ConfigurationError,
    DistLearnError,
    InfeasibleInstanceError,
    ParseError,
    ProtocolError,
    UsageError,
)
from .fusion import (
    FusionInput,
    MeanTransfer,
    fuse_classify_abstain,
    fuse_classify_coin,
    fuse_mean_lipschitz,
    fuse_regress_abstain,
)

__version__ = "0.1.0"

__all__ = [
    "ABSTAIN",
    "DecisionRuleSpec",
    "RateSchedule",
    "Response",
    "RuleKind",
    "Theorem",
    "clip_map",
    "delta_bar",
    "respond",
    "schedule_check",
    "CounterexampleInstance",
    "build_auxiliary",
    "inconsistency_report",
    "shipped_instance",
    "transfer_family",
    "verify_match",
    "SHIPPED",
    "DiscreteAtoms",
    "PiecewiseLinearEta1D",
    "RegressionAdditiveNoise1D",
    "LabelSpace",
    "TrainingSet",
    "bayes_classifier",
    "bayes_risk",
    "regression_fn",
    "sample_training",
    "shipped",
    "Ensemble",
    "ModelKind",
    "RiskEstimate",
    "binomial_reciprocal_check",
    "convergence_sweep",
    "estimate_risk",
    "margin_stats",
    "predict",
    "ConfigurationError",
    "DistLearnError",
    "InfeasibleInstanceError",
    "ParseError",
    "ProtocolError",
    "UsageError",
    "FusionInput",
    "MeanTransfer",
    "fuse_classify_abstain",
    "fuse_classify_coin",
    "fuse_mean_lipschitz",
    "fuse_regress_abstain",
]
