"""Python access to the wxscale C++ library."""

import json

from ._wxscale import (  # noqa: F401
    WxscaleError,
    analytic_optimum_n,
    area_weighted_rmse,
    canonical_channels,
    decomposed_swin_step,
    error_growth,
    fit_allocation,
    fit_isoflop_optimum,
    fit_power_law,
    latitude_weights,
    make_isoflop_family,
    run_cli,
    surface_loss,
    swin_step,
)
from ._wxscale import sweep_report_json as _sweep_report_json

__version__ = "0.1.0"


def sweep_report(runs_csv, metrics_csv, covariates="params,data,compute", kappa=6.0):
    """Two-stage fit report as a dict (covariate -> lead -> channel)."""
    return json.loads(_sweep_report_json(runs_csv, metrics_csv, covariates, kappa))
