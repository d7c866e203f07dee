"""Diffusion-based synthetic energy profiles (Python bindings)."""

from ._core import (
    Checkpoint,
    ConfigError,
    Error,
    FormatError,
    GmmModel,
    NumericError,
    ParseError,
    ShapeError,
    calibrate,
    cosine_alpha_bar,
    default_config,
    evaluate,
    generate,
    gfd,
    gmm_fit,
    gmm_sample,
    kl_marginal,
    ks_marginal,
    load_csv,
    mmd,
    run_cli,
    steps_per_day,
    synthesize_profiles,
    train,
    wd_marginal,
    write_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
