"""Python front end for the FedGraph simulator."""

from ._fedgraph import (
    METRICS_HEADER,
    ConfigError,
    FormatError,
    Graph,
    PreconditionError,
    PrivacyViolation,
    RoundAborted,
    SbmSpec,
    aggregate,
    bandit,
    evaluate,
    load_graph,
    pca_fit,
    reward,
    synth_sbm,
    train,
)

__all__ = [
    "METRICS_HEADER",
    "ConfigError",
    "FormatError",
    "Graph",
    "PreconditionError",
    "PrivacyViolation",
    "RoundAborted",
    "SbmSpec",
    "aggregate",
    "bandit",
    "evaluate",
    "load_graph",
    "pca_fit",
    "reward",
    "synth_sbm",
    "train",
]
