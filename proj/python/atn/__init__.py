"""Airway patch synthesis, refinement, measurement and survival analysis."""

from ._atn import (
    AirwayLabel,
    ConfigError,
    DataError,
    Error,
    NumericalError,
    augment,
    concordance_index,
    cox_fit,
    decode_label,
    encode_label,
    fit_ellipse,
    intertapering,
    intratapering,
    measure,
    measure_fwhm,
    refine,
    render_patch,
    sample_label,
    segment_volume,
    standardize,
)

__version__ = "0.1.0"

__all__ = [
    "AirwayLabel",
    "ConfigError",
    "DataError",
    "Error",
    "NumericalError",
    "augment",
    "concordance_index",
    "cox_fit",
    "decode_label",
    "encode_label",
    "fit_ellipse",
    "intertapering",
    "intratapering",
    "measure",
    "measure_fwhm",
    "refine",
    "render_patch",
    "sample_label",
    "segment_volume",
    "standardize",
]
