"""Latent sum-of-components models: moments, identifiability checks, GMWM/GMM estimation."""
from .errors import *  # noqa: F401,F403
from .models import (BlockKind, BlockSpec, Domain, IdentLabel, LatentModel, ar1, build_model,
                     classify_model, drift, format_model, ma1, parse_model_text, qn, rw,
                     spatial_exp, spatial_gauss, wn)
from .moments import MomentKind, MomentVector, acvf, sdf, spatial_cov, wv_spectral, wv_theoretical
from .identifiability import (JacobianReport, Verdict, c10_deviation, conjecture32_check,
                              identifiability_report, moment_jacobian, rank_report)
from .simulate import SeedSpec, simulate_spatial_field, simulate_time_series
from .estimators import (FitOptions, FitResult, WvEstimate, fit_series, gmm_fit, gmwm_fit,
                         sample_acvf, wv_estimate)
from .harness import McConfig, McResult, emit_report, run_monte_carlo, summarize_mse

__version__ = "0.1.0"
