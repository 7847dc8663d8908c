"""Run configuration: dotted keys, paper-apparatus defaults, strict schema.

Config files are plain text, one ``section.key = value`` per line, ``#``
comments, UTF-8. Unknown keys are rejected. Units are baked into key names
(_um, _mm, _kev, _rad, _mrad, _nm) so nothing is ever inferred across the
five orders of magnitude separating grating periods from bench distances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .analysis import AnalysisConfig
from .errors import InputError
from .hitgen import EmulsionFrame, ExposureConfig, ParametricPattern
from .physics import BeamModel, GratingSpec, InterferometerGeometry, ParticleState
from .wavesim import SimConfig


@dataclass(frozen=True)
class _Key:
    type: type
    default: object
    help: str


# Defaults follow the published apparatus wherever it specifies a value;
# the rest are artifact choices documented here.
SCHEMA: dict[str, _Key] = {
    "geometry.d1_um": _Key(float, 1.210, "first grating period"),
    "geometry.d2_um": _Key(float, 1.004, "second grating period"),
    "geometry.d1_sigma_um": _Key(float, 0.001, "first grating period uncertainty"),
    "geometry.d2_sigma_um": _Key(float, 0.001, "second grating period uncertainty"),
    "geometry.open_fraction1": _Key(float, 0.5, "first grating open fraction"),
    "geometry.open_fraction2": _Key(float, 0.5, "second grating open fraction"),
    "geometry.offset1_um": _Key(float, 0.0, "first grating lateral offset"),
    "geometry.offset2_um": _Key(float, 0.0, "second grating lateral offset"),
    "geometry.l1_mm": _Key(float, 118.1, "grating separation"),
    "geometry.l2_mm": _Key(float, 576.0, "second grating to nominal detector plane"),
    "geometry.collimator_diameter1_mm": _Key(float, 2.0, "first collimator diameter"),
    "geometry.collimator_diameter2_mm": _Key(float, 2.0, "second collimator diameter"),
    "geometry.collimator_spacing_mm": _Key(float, 102.0, "collimator separation"),
    "beam.energy_kev": _Key(float, 14.0, "kinetic energy"),
    "beam.rest_energy_kev": _Key(float, 510.99895069, "rest energy (electron/positron)"),
    "beam.spot_fwhm_mm": _Key(float, 6.5, "beam spot FWHM at the detector"),
    "beam.angular_sigma_mrad": _Key(float, 0.8, "local angular spread after collimation"),
    "beam.coherence_ratio": _Key(float, 800.0, "l_det / lambda at the detector"),
    "beam.flux_per_s": _Key(float, 100.0, "detected rate"),
    "sim.num_points": _Key(int, 20480, "transverse grid points"),
    "sim.spacing_nm": _Key(float, 25.0, "grid spacing"),
    "sim.guard_fraction": _Key(float, 0.25, "guard band fraction per side"),
    "sim.num_tilt_samples": _Key(int, 64, "incoherent tilt samples"),
    "sim.tilt_distribution": _Key(str, "gaussian", "gaussian or uniform"),
    "sim.tilt_sigma_mrad": _Key(float, 0.8, "tilt sigma (gaussian) or half-width (uniform)"),
    "sim.seed": _Key(int, 12345, "simulation provenance seed"),
    "sim.z_detector_mm": _Key(float, 0.0, "detector plane; 0 means geometry.l2_mm"),
    "emulsion.tilt_angle_rad": _Key(float, math.pi / 4.0, "film tilt vs lab y axis"),
    "emulsion.l2_at_origin_mm": _Key(float, 578.94, "L2 at film Y = 0"),
    "emulsion.film_width_mm": _Key(float, 10.0, "scanned width along X"),
    "emulsion.film_height_mm": _Key(float, 14.0, "scanned height along Y"),
    "emulsion.film_center_x_mm": _Key(float, 0.0, "scan region center X"),
    "emulsion.film_center_y_mm": _Key(float, -8.4, "scan region center Y"),
    "emulsion.thickness_um": _Key(float, 50.0, "emulsion thickness"),
    "emulsion.y_sign": _Key(int, 1, "sign of the Y to L2 correlation, +1 or -1"),
    "exposure.target_grains_per_view": _Key(float, 11000.0, "signal grains in the central view"),
    "exposure.noise_density_per_1000um3": _Key(float, 5.8, "thermal grain density"),
    "exposure.implantation_mean_um": _Key(float, 2.0, "implantation depth mean"),
    "exposure.implantation_sigma_um": _Key(float, 1.0, "implantation depth sigma"),
    "exposure.beam_center_x_mm": _Key(float, 0.0, "beam spot center X on the film"),
    "exposure.beam_center_y_mm": _Key(float, -8.4, "beam spot center Y on the film"),
    "exposure.beam_fwhm_mm": _Key(float, 6.5, "beam spot FWHM on the film"),
    "exposure.seed": _Key(int, 20190503, "hit generation seed"),
    "pattern.kind": _Key(str, "parametric", "parametric or carpet"),
    "pattern.carpet_file": _Key(str, "", "carpet CSV path when kind = carpet"),
    "pattern.d3_um": _Key(float, 5.90, "parametric fringe period"),
    "pattern.amplitude": _Key(float, 0.491, "contrast envelope amplitude"),
    "pattern.baseline": _Key(float, 0.0, "contrast envelope baseline"),
    "pattern.center_l2_mm": _Key(float, 573.0, "contrast envelope center in L2"),
    "pattern.width_l2_mm": _Key(float, 2.121, "contrast envelope sigma in L2"),
    "pattern.phase_rad": _Key(float, 0.0, "fringe phase"),
    "pattern.alpha_rad": _Key(float, 0.0, "fringe angle in the film plane"),
    "analysis.view_width_um": _Key(float, 370.0, "view tile width"),
    "analysis.view_height_um": _Key(float, 294.0, "view tile height"),
    "analysis.crop_width_um": _Key(float, 340.0, "analysis area width"),
    "analysis.crop_height_um": _Key(float, 270.0, "analysis area height"),
    "analysis.alpha_min_rad": _Key(float, -0.05, "fringe angle search lower bound"),
    "analysis.alpha_max_rad": _Key(float, 0.05, "fringe angle search upper bound"),
    "analysis.d3_min_um": _Key(float, 5.7, "period search lower bound"),
    "analysis.d3_max_um": _Key(float, 6.1, "period search upper bound"),
    "analysis.min_hits_per_view": _Key(int, 100, "views below this are not analyzed"),
    "analysis.bins_per_period": _Key(int, 30, "fold histogram bins per period"),
    "analysis.fold_periods": _Key(int, 1, "fold over 1 or 3 periods"),
    "analysis.hist_bins": _Key(int, 60, "parameter histogram bins"),
    "analysis.band_width_mm": _Key(float, 1.0, "X band width for the contrast profile"),
    "analysis.d3_systematic_frac": _Key(float, 0.008, "pixel-size systematic on d3"),
    "analysis.min_views_for_scatter_fit": _Key(int, 50, "views needed for the population fit"),
    "run.threads": _Key(int, 1, "worker cap; results are independent of it"),
}


class RunConfig:
    """Immutable view of the effective configuration (defaults + overrides)."""

    def __init__(self, values: dict[str, object] | None = None):
        self._values = {k: spec.default for k, spec in SCHEMA.items()}
        for key, value in (values or {}).items():
            if key not in SCHEMA:
                raise InputError(f"unknown configuration key {key!r}")
            self._values[key] = _coerce(key, value)

    def __getitem__(self, key: str):
        try:
            return self._values[key]
        except KeyError:
            raise InputError(f"unknown configuration key {key!r}") from None

    def with_overrides(self, overrides: dict[str, object]) -> "RunConfig":
        merged = dict(self._values)
        for key, value in overrides.items():
            if key not in SCHEMA:
                raise InputError(f"unknown configuration key {key!r}")
            merged[key] = _coerce(key, value)
        return RunConfig(merged)

    # --- domain object builders ------------------------------------

    def particle(self) -> ParticleState:
        return ParticleState(self["beam.energy_kev"], self["beam.rest_energy_kev"])

    def geometry(self) -> InterferometerGeometry:
        return InterferometerGeometry(
            grating1=GratingSpec(
                self["geometry.d1_um"], self["geometry.open_fraction1"],
                self["geometry.offset1_um"],
            ),
            grating2=GratingSpec(
                self["geometry.d2_um"], self["geometry.open_fraction2"],
                self["geometry.offset2_um"],
            ),
            L1_mm=self["geometry.l1_mm"],
            L2_mm=self["geometry.l2_mm"],
            collimator_diameters_mm=(
                self["geometry.collimator_diameter1_mm"],
                self["geometry.collimator_diameter2_mm"],
            ),
            collimator_spacing_mm=self["geometry.collimator_spacing_mm"],
        )

    def beam(self) -> BeamModel:
        return BeamModel(
            particle=self.particle(),
            spot_fwhm_mm=self["beam.spot_fwhm_mm"],
            angular_sigma_mrad=self["beam.angular_sigma_mrad"],
            coherence_ratio_at_detector=self["beam.coherence_ratio"],
            flux_per_s=self["beam.flux_per_s"],
        )

    def sim_config(self, model: str | None = None, threads: int | None = None) -> SimConfig:
        return SimConfig(
            num_points=self["sim.num_points"],
            spacing_nm=self["sim.spacing_nm"],
            guard_fraction=self["sim.guard_fraction"],
            num_tilt_samples=self["sim.num_tilt_samples"],
            tilt_distribution=self["sim.tilt_distribution"],
            tilt_sigma_mrad=self["sim.tilt_sigma_mrad"],
            model=model or "quantum",
            rng_seed=self["sim.seed"],
            threads=threads if threads is not None else self["run.threads"],
        )

    def z_detector_mm(self) -> float:
        z = self["sim.z_detector_mm"]
        return z if z > 0.0 else self["geometry.l2_mm"]

    def emulsion_frame(self) -> EmulsionFrame:
        return EmulsionFrame(
            tilt_angle_rad=self["emulsion.tilt_angle_rad"],
            L2_at_origin_mm=self["emulsion.l2_at_origin_mm"],
            film_size_mm=(self["emulsion.film_width_mm"], self["emulsion.film_height_mm"]),
            film_center_mm=(
                self["emulsion.film_center_x_mm"],
                self["emulsion.film_center_y_mm"],
            ),
            thickness_um=self["emulsion.thickness_um"],
            Y_sign=self["emulsion.y_sign"],
        )

    def exposure_config(self, seed: int | None = None) -> ExposureConfig:
        return ExposureConfig(
            target_grains_per_view=self["exposure.target_grains_per_view"],
            noise_density_per_1000um3=self["exposure.noise_density_per_1000um3"],
            implantation_mean_um=self["exposure.implantation_mean_um"],
            implantation_sigma_um=self["exposure.implantation_sigma_um"],
            beam_center_mm=(
                self["exposure.beam_center_x_mm"],
                self["exposure.beam_center_y_mm"],
            ),
            beam_fwhm_mm=self["exposure.beam_fwhm_mm"],
            rng_seed=seed if seed is not None else self["exposure.seed"],
            view_width_um=self["analysis.view_width_um"],
            view_height_um=self["analysis.view_height_um"],
        )

    def parametric_pattern(self) -> ParametricPattern:
        return ParametricPattern(
            d3_um=self["pattern.d3_um"],
            amplitude=self["pattern.amplitude"],
            center_l2_mm=self["pattern.center_l2_mm"],
            width_l2_mm=self["pattern.width_l2_mm"],
            baseline=self["pattern.baseline"],
            phase_rad=self["pattern.phase_rad"],
            alpha_rad=self["pattern.alpha_rad"],
        )

    def analysis_config(self, threads: int | None = None) -> AnalysisConfig:
        return AnalysisConfig(
            view_width_um=self["analysis.view_width_um"],
            view_height_um=self["analysis.view_height_um"],
            crop_width_um=self["analysis.crop_width_um"],
            crop_height_um=self["analysis.crop_height_um"],
            alpha_min_rad=self["analysis.alpha_min_rad"],
            alpha_max_rad=self["analysis.alpha_max_rad"],
            d3_min_um=self["analysis.d3_min_um"],
            d3_max_um=self["analysis.d3_max_um"],
            min_hits_per_view=self["analysis.min_hits_per_view"],
            bins_per_period=self["analysis.bins_per_period"],
            fold_periods=self["analysis.fold_periods"],
            hist_bins=self["analysis.hist_bins"],
            band_width_mm=self["analysis.band_width_mm"],
            d3_systematic_frac=self["analysis.d3_systematic_frac"],
            min_views_for_scatter_fit=self["analysis.min_views_for_scatter_fit"],
            threads=threads if threads is not None else self["run.threads"],
        )

    # --- serialization ----------------------------------------------

    def dump(self) -> str:
        lines = ["# talbotlau configuration (effective values)"]
        for key in sorted(self._values):
            lines.append(f"{key} = {_format(self._values[key])}")
        return "\n".join(lines) + "\n"

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(self.dump())


def _coerce(key: str, value: object):
    spec = SCHEMA[key]
    if isinstance(value, str):
        text = value.strip()
        try:
            if spec.type is int:
                return int(text)
            if spec.type is float:
                return float(text)
        except ValueError:
            raise InputError(f"key {key!r} expects {spec.type.__name__}, got {text!r}") from None
        return text
    if spec.type is float and isinstance(value, (int, float)):
        return float(value)
    if spec.type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise InputError(f"key {key!r} expects int, got {value!r}")
        return int(value)
    if not isinstance(value, spec.type):
        raise InputError(f"key {key!r} expects {spec.type.__name__}, got {value!r}")
    return value


def _format(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``section.key = value`` lines into a raw override dict."""
    overrides: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InputError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in SCHEMA:
            raise InputError(f"unknown configuration key {key!r}", line=lineno)
        if key in overrides:
            raise InputError(f"duplicate configuration key {key!r}", line=lineno)
        overrides[key] = value
    return overrides


def load_config(path=None, overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the file, then explicit overrides."""
    values: dict[str, object] = {}
    if path is not None:
        with open(path, "r", encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    cfg = RunConfig(values)
    if overrides:
        cfg = cfg.with_overrides(overrides)
    return cfg
