"""Asymmetric Talbot-Lau matter-wave interferometry toolkit.

Subsystems: geometry design (:mod:`talbotlau.physics`), detector-plane
pattern prediction (:mod:`talbotlau.wavesim`), emulsion grain synthesis
(:mod:`talbotlau.hitgen`), the statistical fringe pipeline
(:mod:`talbotlau.analysis`) and the batch CLI (:mod:`talbotlau.cli`).
"""

from .physics import (
    BeamModel,
    GratingSpec,
    InterferometerGeometry,
    ParticleState,
    ToleranceReport,
    de_broglie_wavelength_pm,
    design_geometry,
    diffraction_regime_indicator,
    fringe_period_um,
    grating_fourier_coefficients,
    resonance_ratio,
    rotation_contrast_factor,
    rotational_tolerance_urad,
    tolerance_report,
)
from .wavesim import (
    ComplexField,
    Grid1D,
    IntensityProfile,
    SimConfig,
    TalbotCarpet,
    apply_grating,
    contrast_vs_energy,
    contrast_vs_l2,
    fresnel_propagate,
    pattern_contrast,
    simulate_carpet,
    simulate_classical_pattern,
    simulate_quantum_pattern,
)
from .hitgen import (
    CarpetPattern,
    EmulsionFrame,
    ExposureConfig,
    HitSet,
    ParametricPattern,
    emulsion_to_lab,
    generate_exposure,
    generate_noise_grains,
    generate_signal_hits,
    read_hits,
    write_hits,
)
from .analysis import (
    AnalysisConfig,
    ContrastSummary,
    EllipseSelection,
    RayleighResult,
    View,
    ViewContrast,
    analyze_exposure,
    fit_scatter_peak,
    fold_and_fit,
    maximize_rayleigh,
    partition_views,
    rayleigh_statistic,
    subtract_noise,
    summarize,
)
from .config import RunConfig, load_config

__version__ = "0.1.0"

__all__ = [
    "AnalysisConfig", "BeamModel", "CarpetPattern", "ComplexField",
    "ContrastSummary", "EllipseSelection", "EmulsionFrame", "ExposureConfig",
    "GratingSpec", "Grid1D", "HitSet", "IntensityProfile",
    "InterferometerGeometry", "ParametricPattern", "ParticleState",
    "RayleighResult", "RunConfig", "SimConfig", "TalbotCarpet",
    "ToleranceReport", "View", "ViewContrast", "analyze_exposure",
    "apply_grating", "contrast_vs_energy", "contrast_vs_l2",
    "de_broglie_wavelength_pm", "design_geometry",
    "diffraction_regime_indicator", "emulsion_to_lab", "fit_scatter_peak",
    "fold_and_fit", "fresnel_propagate", "fringe_period_um",
    "generate_exposure", "generate_noise_grains", "generate_signal_hits",
    "grating_fourier_coefficients", "load_config", "maximize_rayleigh",
    "partition_views", "pattern_contrast", "rayleigh_statistic",
    "read_hits", "resonance_ratio", "rotation_contrast_factor",
    "rotational_tolerance_urad", "simulate_carpet",
    "simulate_classical_pattern", "simulate_quantum_pattern",
    "subtract_noise", "summarize", "tolerance_report", "write_hits",
]
