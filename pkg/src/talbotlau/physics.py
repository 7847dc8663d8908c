"""Closed-form kinematics and geometry of the asymmetric two-grating interferometer.

Everything in this module is a pure function of its arguments: wavelength
conversion, the magnifying resonance design, the detector-plane fringe
period and the rotational alignment tolerance. Units are carried in field
and argument names (_kev, _um, _mm, _rad) rather than inferred.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constants import ELECTRON_REST_ENERGY_KEV, HC_KEV_PM, PM_PER_UM, UM_PER_MM
from .errors import DomainError

SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class ParticleState:
    """A massive particle defined by its kinetic energy.

    The rest energy defaults to the electron/positron value; the kinematics
    are species-agnostic.
    """

    kinetic_energy_kev: float
    rest_energy_kev: float = ELECTRON_REST_ENERGY_KEV

    def __post_init__(self):
        if not (self.kinetic_energy_kev > 0.0 and math.isfinite(self.kinetic_energy_kev)):
            raise DomainError(f"kinetic energy must be positive, got {self.kinetic_energy_kev}")
        if not (self.rest_energy_kev > 0.0 and math.isfinite(self.rest_energy_kev)):
            raise DomainError(f"rest energy must be positive, got {self.rest_energy_kev}")

    @property
    def momentum_kev(self) -> float:
        """Relativistic momentum times c, in keV."""
        ek, e0 = self.kinetic_energy_kev, self.rest_energy_kev
        return math.sqrt(2.0 * e0 * ek * (1.0 + ek / (2.0 * e0)))


@dataclass(frozen=True)
class GratingSpec:
    """Binary amplitude grating: period, open fraction, transverse offset, roll angle."""

    period_um: float
    open_fraction: float = 0.5
    lateral_offset_um: float = 0.0
    rotation_angle_rad: float = 0.0

    def __post_init__(self):
        if not self.period_um > 0.0:
            raise DomainError(f"grating period must be positive, got {self.period_um}")
        if not 0.0 < self.open_fraction < 1.0:
            raise DomainError(f"open fraction must lie in (0, 1), got {self.open_fraction}")


@dataclass(frozen=True)
class InterferometerGeometry:
    """The optical bench: two gratings, their separations and the collimators.

    The magnifying configuration requires ``grating1.period > grating2.period``.
    """

    grating1: GratingSpec
    grating2: GratingSpec
    L1_mm: float
    L2_mm: float
    collimator_diameters_mm: tuple[float, float] = (2.0, 2.0)
    collimator_spacing_mm: float = 102.0

    def __post_init__(self):
        if not (self.L1_mm > 0.0 and self.L2_mm > 0.0):
            raise DomainError("grating separations must be positive")
        if not self.grating1.period_um > self.grating2.period_um:
            raise DomainError(
                "magnifying configuration requires d1 > d2, got "
                f"d1={self.grating1.period_um} µm, d2={self.grating2.period_um} µm"
            )

    @property
    def collimator_acceptance_rad(self) -> float:
        """Geometric angular acceptance of the collimator pair."""
        d1, d2 = self.collimator_diameters_mm
        return (d1 + d2) / (2.0 * self.collimator_spacing_mm)


@dataclass(frozen=True)
class BeamModel:
    """Source statistics: energy, spot, angular spread and coherence ratio.

    ``coherence_ratio_at_detector`` is the dimensionless ratio of transverse
    coherence length at the detector plane to the de Broglie wavelength;
    it enters the rotational tolerance directly so no absolute coherence
    propagation model is needed.
    """

    particle: ParticleState
    spot_fwhm_mm: float = 6.5
    angular_sigma_mrad: float = 0.8
    coherence_ratio_at_detector: float = 800.0
    flux_per_s: float = 100.0

    def __post_init__(self):
        if not self.spot_fwhm_mm > 0.0:
            raise DomainError("beam spot FWHM must be positive")
        if self.angular_sigma_mrad < 0.0:
            raise DomainError("angular spread must be non-negative")
        if not self.coherence_ratio_at_detector > 0.0:
            raise DomainError("coherence ratio must be positive")


@dataclass(frozen=True)
class ToleranceReport:
    """Alignment tolerances of a designed geometry."""

    sigma_phi_urad: float
    resonance_ratio: float
    resonance_ratio_sigma: float
    L2_uncertainty_mm: float
    diffraction_regime_indicator: float

    def __post_init__(self):
        for name, value in vars(self).items():
            if not (math.isfinite(value) and value > 0.0):
                raise DomainError(f"tolerance report entry {name} must be finite and positive")


def de_broglie_wavelength_pm(particle: ParticleState) -> float:
    """Matter wavelength h/p in pm, with the relativistic momentum."""
    return HC_KEV_PM / particle.momentum_kev


def nonrelativistic_wavelength_pm(particle: ParticleState) -> float:
    """h/sqrt(2mE), exposed for use as an inequality oracle in tests."""
    return HC_KEV_PM / math.sqrt(2.0 * particle.rest_energy_kev * particle.kinetic_energy_kev)


def resonance_ratio(d1_um: float, d2_um: float) -> float:
    """The L1/L2 ratio at which fringe contrast survives full incoherence."""
    if not (d1_um > d2_um > 0.0):
        raise DomainError(
            f"no magnifying resonance: need d1 > d2 > 0, got d1={d1_um} µm, d2={d2_um} µm"
        )
    return d1_um / d2_um - 1.0


def resonance_ratio_sigma(
    d1_um: float, d2_um: float, d1_sigma_um: float = 0.001, d2_sigma_um: float = 0.001
) -> float:
    """Uncertainty on the resonance ratio propagated from the grating periods."""
    return math.hypot(d1_sigma_um / d2_um, d1_um * d2_sigma_um / d2_um**2)


def design_geometry(
    d1_um: float,
    d2_um: float,
    particle: ParticleState,
    open_fraction: float = 0.5,
    collimator_diameters_mm: tuple[float, float] = (2.0, 2.0),
    collimator_spacing_mm: float = 102.0,
) -> InterferometerGeometry:
    """Geometry of maximum contrast at the given energy: L1 = d1 d2 / λ.

    L2 follows from the resonance ratio, so the returned geometry satisfies
    the resonance condition by construction.
    """
    ratio = resonance_ratio(d1_um, d2_um)
    lam_um = de_broglie_wavelength_pm(particle) / PM_PER_UM
    l1_mm = d1_um * d2_um / lam_um / UM_PER_MM
    return InterferometerGeometry(
        grating1=GratingSpec(period_um=d1_um, open_fraction=open_fraction),
        grating2=GratingSpec(period_um=d2_um, open_fraction=open_fraction),
        L1_mm=l1_mm,
        L2_mm=l1_mm / ratio,
        collimator_diameters_mm=collimator_diameters_mm,
        collimator_spacing_mm=collimator_spacing_mm,
    )


def fringe_period_um(geometry: InterferometerGeometry) -> float:
    """Detector-plane fringe period from geometric moiré magnification.

    d3 = d2 (L1+L2)/L1; when the resonance condition holds this equals
    d1 d2 / (d1 - d2).
    """
    return geometry.grating2.period_um * (geometry.L1_mm + geometry.L2_mm) / geometry.L1_mm


def rotational_tolerance_urad(geometry: InterferometerGeometry, beam: BeamModel) -> float:
    """Standard deviation of the Gaussian contrast loss vs. relative grating roll.

    Computed from the dimensionless coherence ratio so the wavelength cancels:
    σφ = d2 (l_det/λ) / (√(2π) L2).
    """
    d2_mm = geometry.grating2.period_um / UM_PER_MM
    sigma_rad = d2_mm * beam.coherence_ratio_at_detector / (SQRT_2PI * geometry.L2_mm)
    return sigma_rad * 1.0e6


def rotation_contrast_factor(phi_rad: float, sigma_phi_rad: float) -> float:
    """Contrast retained at relative grating roll phi: exp(-phi²/2σφ²)."""
    if not sigma_phi_rad > 0.0:
        raise DomainError(f"sigma_phi must be positive, got {sigma_phi_rad}")
    return math.exp(-0.5 * (phi_rad / sigma_phi_rad) ** 2)


def diffraction_regime_indicator(
    geometry: InterferometerGeometry, particle: ParticleState
) -> float:
    """(L1 λ / d1) / d2 — above 1, single-slit diffraction between the
    gratings is not negligible and the wave description is required."""
    lam_um = de_broglie_wavelength_pm(particle) / PM_PER_UM
    walk_um = geometry.L1_mm * UM_PER_MM * lam_um / geometry.grating1.period_um
    return walk_um / geometry.grating2.period_um


def grating_fourier_coefficients(spec: GratingSpec, max_order: int) -> np.ndarray:
    """Fourier coefficients c_m, m = -max_order..max_order, of the binary mask.

    c_m = f sinc(π m f) exp(-2πi m offset/d) with sinc(x) = sin(x)/x.
    """
    if max_order < 0:
        raise DomainError(f"max_order must be >= 0, got {max_order}")
    m = np.arange(-max_order, max_order + 1)
    arg = np.pi * m * spec.open_fraction
    sinc = np.ones_like(arg)
    nz = m != 0
    sinc[nz] = np.sin(arg[nz]) / arg[nz]
    phase = np.exp(-2j * np.pi * m * spec.lateral_offset_um / spec.period_um)
    return spec.open_fraction * sinc * phase


def tolerance_report(
    geometry: InterferometerGeometry,
    beam: BeamModel,
    d1_sigma_um: float = 0.001,
    d2_sigma_um: float = 0.001,
) -> ToleranceReport:
    """Bundle the alignment tolerances of a geometry into one report."""
    d1 = geometry.grating1.period_um
    d2 = geometry.grating2.period_um
    ratio = resonance_ratio(d1, d2)
    ratio_sigma = resonance_ratio_sigma(d1, d2, d1_sigma_um, d2_sigma_um)
    return ToleranceReport(
        sigma_phi_urad=rotational_tolerance_urad(geometry, beam),
        resonance_ratio=ratio,
        resonance_ratio_sigma=ratio_sigma,
        L2_uncertainty_mm=geometry.L2_mm * ratio_sigma / ratio,
        diffraction_regime_indicator=diffraction_regime_indicator(geometry, beam.particle),
    )
