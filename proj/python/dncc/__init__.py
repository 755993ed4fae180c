"""Python bindings for the dncc C++ core."""

from ._core import (
    ConfigError,
    ContractError,
    DnccError,
    DomainError,
    FormatError,
    bregman_divergence,
    bregman_information,
    decompose,
    dncc_head_loss,
    ensemble_ce,
    individual_ce,
    itakura_saito_log_domain,
    jensen_gap,
    lambda_at,
    pairwise_diversity,
    run_cli,
    synth_blobs,
    verify,
)

__all__ = [
    "ConfigError",
    "ContractError",
    "DnccError",
    "DomainError",
    "FormatError",
    "bregman_divergence",
    "bregman_information",
    "decompose",
    "dncc_head_loss",
    "ensemble_ce",
    "individual_ce",
    "itakura_saito_log_domain",
    "jensen_gap",
    "lambda_at",
    "pairwise_diversity",
    "run_cli",
    "synth_blobs",
    "verify",
]
