"""Self-tuned vertical weighted strips rejection sampling within Gibbs.

Modules: ``dist`` (scalar kernels and samplers), ``vws`` (strip proposals and
the self-tuned draw), ``sae`` (joint area-level model and its samplers),
``diagnostics`` (ESS and summaries), ``ingest`` (data preparation and
simulation), ``sim`` (study drivers) and ``cli``.
"""

from .chain import ChainOutput
from .diagnostics import autocorr, ess, multivariate_ess, summarize
from .dist import DegenerateIntervalError, InverseGammaParams, LognormalParams
from .estimator import JointSAE
from .ingest import delta_transform, load_dataset, simulate_dataset
from .sae import ModelData, ParamState, SamplerConfig, run_sampler
from .vws import IterationCapError, StripProposal, WeightedTarget, build_proposal

__all__ = [
    "ChainOutput", "DegenerateIntervalError", "InverseGammaParams", "IterationCapError", "JointSAE",
    "LognormalParams", "ModelData", "ParamState", "SamplerConfig", "StripProposal", "WeightedTarget",
    "autocorr", "build_proposal", "delta_transform", "ess", "load_dataset", "multivariate_ess",
    "run_sampler", "simulate_dataset", "summarize",
]
