"""Recurrent-event incidence-rate contrasts under treatment-timing misalignment,
right-censoring, and terminal death.

The heavy lifting lives in the compiled extension; this package re-exports the
public names.
"""

from ._core import (
    ConfigurationError,
    DataError,
    Fit,
    NumericalError,
    Panel,
    __version__,
    estimate_psi,
    ever_never,
    fit,
    freq_glm,
    generate_cohort,
    grace_period,
    load_panel,
    positivity,
    true_contrast,
)

__all__ = [
    "ConfigurationError",
    "DataError",
    "Fit",
    "NumericalError",
    "Panel",
    "__version__",
    "estimate_psi",
    "ever_never",
    "fit",
    "freq_glm",
    "generate_cohort",
    "grace_period",
    "load_panel",
    "positivity",
    "true_contrast",
]
