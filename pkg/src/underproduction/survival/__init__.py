from .cox import CoxParams, DivergentParameters, cox_log_partial_likelihood
from .dataset import SurvivalDataset, severity_design
from .diagnostics import effective_sample_size, split_rhat
from .km import KMCurve, kaplan_meier
from .posterior import PosteriorDraws, Priors, SamplerConfig, fit_posterior, log_posterior

__all__ = [
    "CoxParams", "DivergentParameters", "KMCurve", "PosteriorDraws", "Priors", "SamplerConfig",
    "SurvivalDataset", "cox_log_partial_likelihood", "effective_sample_size", "fit_posterior",
    "kaplan_meier", "log_posterior", "severity_design", "split_rhat",
]
