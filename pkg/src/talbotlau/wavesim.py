"""Numerical prediction of the detector-plane pattern.

Two models share one transverse grid:

* quantum — scalar paraxial wave optics through both gratings, incoherently
  averaged over the incident angular distribution;
* classical — straight-line ray transmission through the same gratings,
  with no wavelength anywhere.

Incident tilt is handled in the frame co-moving with the tilted ray: a plane
wave with tilt θ through fixed gratings is exactly equivalent to a normally
incident wave through gratings shifted by θ(L1+z) and θz (translation
covariance of the paraxial propagator). This keeps every field band-limited;
sampling the tilt carrier exp(2πiθx/λ) directly would alias at matter-wave
wavelengths for any realistic θ.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import ndtr, ndtri

from .constants import PM_PER_UM, UM_PER_MM
from .errors import ConfigurationError, DomainError, InputError
from .physics import (
    BeamModel,
    GratingSpec,
    InterferometerGeometry,
    ParticleState,
    de_broglie_wavelength_pm,
    design_geometry,
    fringe_period_um,
)

MIN_GRID_POINTS = 4096
MIN_SAMPLES_PER_PERIOD = 20
WALKOFF_GUARD_ORDERS = 5


@dataclass(frozen=True)
class Grid1D:
    """Uniform transverse grid; sample points sit at cell centers."""

    num_points: int
    spacing_nm: float
    guard_fraction: float = 0.25

    def __post_init__(self):
        if self.num_points < MIN_GRID_POINTS:
            raise ConfigurationError(
                f"grid needs at least {MIN_GRID_POINTS} points, got {self.num_points}"
            )
        if not self.spacing_nm > 0.0:
            raise ConfigurationError("grid spacing must be positive")
        if not 0.0 <= self.guard_fraction < 0.5:
            raise ConfigurationError("guard fraction must lie in [0, 0.5)")

    @property
    def spacing_um(self) -> float:
        return self.spacing_nm / 1.0e3

    @property
    def window_width_um(self) -> float:
        return self.num_points * self.spacing_um

    @property
    def guard_width_um(self) -> float:
        return self.guard_fraction * self.window_width_um

    def positions_um(self) -> np.ndarray:
        n = self.num_points
        return (np.arange(n) - n / 2 + 0.5) * self.spacing_um

    def emitted_slice(self) -> slice:
        """Index range of the physics window, guard bands excluded."""
        n_guard = int(round(self.guard_fraction * self.num_points))
        return slice(n_guard, self.num_points - n_guard)


@dataclass
class ComplexField:
    """Scalar paraxial field sampled on a grid."""

    grid: Grid1D
    amplitudes: np.ndarray
    wavelength_pm: float

    def __post_init__(self):
        if len(self.amplitudes) != self.grid.num_points:
            raise DomainError("amplitude array length must match the grid")

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2) * self.grid.spacing_um)


@dataclass
class IntensityProfile:
    """Transverse intensity at one plane, normalized to mean 1."""

    x_um: np.ndarray
    intensity: np.ndarray
    plane_z_mm: float


@dataclass
class TalbotCarpet:
    """Intensity profiles over a range of detector distances."""

    z_mm: np.ndarray
    profiles: list[IntensityProfile]

    def __post_init__(self):
        if len(self.z_mm) != len(self.profiles):
            raise DomainError("one profile per z plane required")
        if len(self.z_mm) > 1 and not np.all(np.diff(self.z_mm) > 0):
            raise DomainError("z values must be strictly increasing")


@dataclass(frozen=True)
class SimConfig:
    """Discretization and partial-coherence averaging controls.

    ``tilt_sigma_mrad`` is the Gaussian sigma or the uniform half-width of
    the incident angular distribution; ``None`` takes the beam's value.
    Tilt samples are stratified quantile midpoints, so identical
    configurations give bit-identical results; the seed is recorded for
    provenance and consumed by downstream generators, not by the averaging.
    """

    num_points: int = 20480
    spacing_nm: float = 25.0
    guard_fraction: float = 0.25
    num_tilt_samples: int = 64
    tilt_distribution: str = "gaussian"
    tilt_sigma_mrad: float | None = None
    model: str = "quantum"
    rng_seed: int = 12345
    threads: int = 1

    def __post_init__(self):
        if self.num_tilt_samples < 1:
            raise ConfigurationError("need at least one tilt sample")
        if self.tilt_distribution not in ("gaussian", "uniform"):
            raise ConfigurationError(f"unknown tilt distribution {self.tilt_distribution!r}")
        if self.model not in ("quantum", "classical"):
            raise ConfigurationError(f"unknown model {self.model!r}")
        if self.threads < 1:
            raise ConfigurationError("thread count must be >= 1")

    def make_grid(self) -> Grid1D:
        return Grid1D(self.num_points, self.spacing_nm, self.guard_fraction)


def grating_transmission(x_um: np.ndarray, spec: GratingSpec) -> np.ndarray:
    """Binary transmission of the grating at positions x: 1 in slits, 0 on bars.

    Slits of width f·d are centered on lateral_offset + m·d.
    """
    d = spec.period_um
    half_open = 0.5 * spec.open_fraction * d
    u = np.mod(x_um - spec.lateral_offset_um + half_open, d)
    return (u < 2.0 * half_open).astype(np.float64)


def apply_grating(field: ComplexField, spec: GratingSpec) -> ComplexField:
    """Multiply the field by the binary amplitude mask of the grating."""
    samples_per_period = spec.period_um / field.grid.spacing_um
    if samples_per_period < MIN_SAMPLES_PER_PERIOD:
        raise ConfigurationError(
            f"grid resolves only {samples_per_period:.1f} samples per grating period; "
            f"need at least {MIN_SAMPLES_PER_PERIOD}"
        )
    mask = grating_transmission(field.grid.positions_um(), spec)
    return ComplexField(field.grid, field.amplitudes * mask, field.wavelength_pm)


def fresnel_propagate(field: ComplexField, distance_mm: float) -> ComplexField:
    """Angular-spectrum paraxial propagation over the given distance.

    Transfer phase exp(-iπλz f²) per spatial frequency f; unit modulus, so
    total power is conserved to round-off.
    """
    if distance_mm < 0.0:
        raise DomainError(f"propagation distance must be >= 0, got {distance_mm} mm")
    lam_um = field.wavelength_pm / PM_PER_UM
    z_um = distance_mm * UM_PER_MM
    f = np.fft.fftfreq(field.grid.num_points, d=field.grid.spacing_um)
    transfer = np.exp(-1j * np.pi * lam_um * z_um * f * f)
    out = np.fft.ifft(np.fft.fft(field.amplitudes) * transfer)
    return ComplexField(field.grid, out, field.wavelength_pm)


def tilt_samples_rad(
    beam: BeamModel, geometry: InterferometerGeometry, config: SimConfig
) -> np.ndarray:
    """Deterministic stratified tilt samples (quantile midpoints), ascending.

    The Gaussian case is truncated at the collimator geometric acceptance;
    the uniform case uses the configured half-width directly.
    """
    sigma_mrad = (
        beam.angular_sigma_mrad if config.tilt_sigma_mrad is None else config.tilt_sigma_mrad
    )
    sigma = sigma_mrad * 1.0e-3
    k = config.num_tilt_samples
    q = (np.arange(k) + 0.5) / k
    if sigma == 0.0:
        return np.zeros(k)
    if config.tilt_distribution == "uniform":
        half = min(sigma, geometry.collimator_acceptance_rad)
        return half * (2.0 * q - 1.0)
    a = geometry.collimator_acceptance_rad / sigma
    lo, hi = ndtr(-a), ndtr(a)
    return sigma * ndtri(lo + q * (hi - lo))


def _map_ordered(fn, items, threads: int):
    if threads <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _check_walkoff(grid: Grid1D, lam_um: float, geometry: InterferometerGeometry) -> None:
    walkoff_um = (
        WALKOFF_GUARD_ORDERS * lam_um * geometry.L1_mm * UM_PER_MM / geometry.grating1.period_um
    )
    if grid.guard_width_um < walkoff_um:
        raise ConfigurationError(
            f"guard band of {grid.guard_width_um:.1f} µm cannot contain the "
            f"diffraction walk-off ({walkoff_um:.1f} µm); widen the window or guards"
        )


def _finish_profile(grid: Grid1D, intensity: np.ndarray, z_mm: float) -> IntensityProfile:
    keep = grid.emitted_slice()
    out = intensity[keep]
    mean = out.mean()
    if mean > 0.0:
        out = out / mean
    return IntensityProfile(grid.positions_um()[keep], out, z_mm)


def _quantum_intensity_one_tilt(
    grid: Grid1D,
    lam_pm: float,
    geometry: InterferometerGeometry,
    z_mm: float,
    tilt_rad: float,
) -> np.ndarray:
    # Tilt enters as grating shifts: G1 by θ(L1+z), G2 by θz (co-moving frame).
    shift1_um = tilt_rad * (geometry.L1_mm + z_mm) * UM_PER_MM
    shift2_um = tilt_rad * z_mm * UM_PER_MM
    g1 = replace(
        geometry.grating1, lateral_offset_um=geometry.grating1.lateral_offset_um + shift1_um
    )
    g2 = replace(
        geometry.grating2, lateral_offset_um=geometry.grating2.lateral_offset_um + shift2_um
    )
    field = ComplexField(grid, np.ones(grid.num_points, dtype=np.complex128), lam_pm)
    field = apply_grating(field, g1)
    field = fresnel_propagate(field, geometry.L1_mm)
    field = apply_grating(field, g2)
    field = fresnel_propagate(field, z_mm)
    return np.abs(field.amplitudes) ** 2


def simulate_quantum_pattern(
    geometry: InterferometerGeometry,
    beam: BeamModel,
    particle: ParticleState,
    z_detector_mm: float,
    config: SimConfig,
) -> IntensityProfile:
    """Incoherent average of the two-grating diffraction pattern over the
    incident angular distribution, at distance z behind the second grating."""
    if not z_detector_mm > 0.0:
        raise DomainError("detector distance must be positive")
    grid = config.make_grid()
    lam_pm = de_broglie_wavelength_pm(particle)
    _check_walkoff(grid, lam_pm / PM_PER_UM, geometry)
    tilts = tilt_samples_rad(beam, geometry, config)

    def one(tilt: float) -> np.ndarray:
        return _quantum_intensity_one_tilt(grid, lam_pm, geometry, z_detector_mm, tilt)

    stack = np.stack(_map_ordered(one, tilts, config.threads))
    return _finish_profile(grid, stack.sum(axis=0) / len(tilts), z_detector_mm)


def simulate_classical_pattern(
    geometry: InterferometerGeometry,
    beam: BeamModel,
    z_detector_mm: float,
    config: SimConfig | None = None,
) -> IntensityProfile:
    """Ballistic shadow pattern: each ray arriving at x with tilt θ is
    transmitted iff it back-projects into open slits of both gratings.
    No wavelength enters anywhere."""
    if not z_detector_mm > 0.0:
        raise DomainError("detector distance must be positive")
    config = config or SimConfig(model="classical")
    grid = config.make_grid()
    x = grid.positions_um()
    tilts = tilt_samples_rad(beam, geometry, config)

    def one(tilt: float) -> np.ndarray:
        x1 = x - tilt * (geometry.L1_mm + z_detector_mm) * UM_PER_MM
        x2 = x - tilt * z_detector_mm * UM_PER_MM
        return grating_transmission(x1, geometry.grating1) * grating_transmission(
            x2, geometry.grating2
        )

    stack = np.stack(_map_ordered(one, tilts, config.threads))
    return _finish_profile(grid, stack.sum(axis=0) / len(tilts), z_detector_mm)


def simulate_pattern(
    geometry: InterferometerGeometry,
    beam: BeamModel,
    particle: ParticleState,
    z_detector_mm: float,
    config: SimConfig,
) -> IntensityProfile:
    """Dispatch on config.model."""
    if config.model == "classical":
        return simulate_classical_pattern(geometry, beam, z_detector_mm, config)
    return simulate_quantum_pattern(geometry, beam, particle, z_detector_mm, config)


def simulate_carpet(
    geometry: InterferometerGeometry,
    beam: BeamModel,
    particle: ParticleState,
    z_values_mm: np.ndarray,
    config: SimConfig,
) -> TalbotCarpet:
    """One profile per detector plane, same grid throughout."""
    z_values_mm = np.asarray(z_values_mm, dtype=float)
    profiles = [simulate_pattern(geometry, beam, particle, z, config) for z in z_values_mm]
    return TalbotCarpet(z_values_mm, profiles)


def pattern_contrast(profile: IntensityProfile, period_um: float) -> tuple[float, float]:
    """First-harmonic contrast of the profile at the given period.

    C = 2|A1|/A0 with A_k the discrete Fourier amplitude at frequency
    k/period over an integer number of periods; returns (C, phase of A1).
    """
    x = profile.x_um
    spacing = x[1] - x[0]
    if period_um < 4.0 * spacing:
        raise DomainError(f"period {period_um} µm not resolved by spacing {spacing} µm")
    window = spacing * len(x)
    n_periods = int(window / period_um)
    if n_periods < 10:
        raise DomainError(
            f"window of {window:.1f} µm covers only {n_periods} periods; need at least 10"
        )
    n_keep = int(round(n_periods * period_um / spacing))
    n_keep = min(n_keep, len(x))
    xs = x[:n_keep]
    ys = profile.intensity[:n_keep]
    a0 = ys.mean()
    if a0 <= 0.0:
        raise DomainError("profile mean must be positive")
    a1 = np.mean(ys * np.exp(-2j * np.pi * xs / period_um))
    return 2.0 * abs(a1) / a0, float(np.angle(a1))


def dominant_period_um(profile: IntensityProfile) -> float:
    """Period of the strongest non-DC Fourier component.

    The spectrum is zero-padded eightfold and the peak refined with a
    parabola, so the estimate does not snap to the bare frequency grid."""
    y = profile.intensity - profile.intensity.mean()
    spacing = profile.x_um[1] - profile.x_um[0]
    n_pad = 8 * len(y)
    amp = np.abs(np.fft.rfft(y, n=n_pad))
    freqs = np.fft.rfftfreq(n_pad, d=spacing)
    k = int(np.argmax(amp[1:]) + 1)
    if 1 <= k < len(amp) - 1:
        am, a0, ap = amp[k - 1], amp[k], amp[k + 1]
        denom = am - 2.0 * a0 + ap
        delta = 0.0 if denom == 0.0 else 0.5 * (am - ap) / denom
        delta = float(np.clip(delta, -0.5, 0.5))
    else:
        delta = 0.0
    f_peak = (k + delta) * (freqs[1] - freqs[0])
    return 1.0 / f_peak


def contrast_vs_l2(
    geometry: InterferometerGeometry,
    beam: BeamModel,
    particle: ParticleState,
    z_values_mm: np.ndarray,
    config: SimConfig,
) -> list[tuple[float, float]]:
    """Fringe contrast at the geometric fringe period for each plane of a z scan."""
    d3 = fringe_period_um(geometry)
    carpet = simulate_carpet(geometry, beam, particle, z_values_mm, config)
    return [
        (float(z), pattern_contrast(p, d3)[0]) for z, p in zip(carpet.z_mm, carpet.profiles)
    ]


def _refined_peak(z: np.ndarray, c: np.ndarray) -> tuple[float, float]:
    """Peak location and value from samples, parabolic interpolation inside."""
    i = int(np.argmax(c))
    if 0 < i < len(c) - 1:
        cm, c0, cp = c[i - 1], c[i], c[i + 1]
        denom = cm - 2.0 * c0 + cp
        if denom < 0.0:
            delta = 0.5 * (cm - cp) / denom
            delta = float(np.clip(delta, -0.5, 0.5))
            step = z[1] - z[0]
            return float(z[i] + delta * step), float(c0 - 0.25 * (cm - cp) * delta)
    return float(z[i]), float(c[i])


@dataclass(frozen=True)
class EnergyScanPoint:
    """Peak contrast of the z scan at one energy, with both normalizations."""

    energy_kev: float
    contrast: float
    z_peak_mm: float
    normalized: float
    normalized_self: float


def contrast_vs_energy(
    geometry: InterferometerGeometry,
    beam: BeamModel,
    energies_kev: list[float],
    config: SimConfig,
    z_halfwidth_mm: float = 8.0,
    z_step_mm: float = 0.5,
    design_energy_kev: float | None = None,
) -> list[EnergyScanPoint]:
    """Peak z-scan contrast per energy for the fixed geometry.

    ``normalized`` divides by the design-energy peak (the resonance value);
    ``normalized_self`` divides by the peak contrast the same model reaches
    at that energy when the geometry is redesigned for it.
    """
    if not energies_kev:
        raise DomainError("need at least one energy")
    design_e = beam.particle.kinetic_energy_kev if design_energy_kev is None else design_energy_kev

    def scan(geom: InterferometerGeometry, energy: float) -> tuple[float, float]:
        n = 2 * int(round(z_halfwidth_mm / z_step_mm)) + 1
        z = geom.L2_mm + (np.arange(n) - (n - 1) / 2) * z_step_mm
        pts = contrast_vs_l2(geom, beam, ParticleState(energy), z, config)
        zv = np.array([p[0] for p in pts])
        cv = np.array([p[1] for p in pts])
        z_pk, c_pk = _refined_peak(zv, cv)
        return c_pk, z_pk

    cache: dict[float, tuple[float, float]] = {}

    def fixed_scan(energy: float) -> tuple[float, float]:
        if energy not in cache:
            cache[energy] = scan(geometry, energy)
        return cache[energy]

    c_design, _ = fixed_scan(design_e)
    d1 = geometry.grating1.period_um
    d2 = geometry.grating2.period_um
    points = []
    for e in energies_kev:
        c_peak, z_peak = fixed_scan(e)
        redesigned = design_geometry(
            d1,
            d2,
            ParticleState(e),
            open_fraction=geometry.grating1.open_fraction,
            collimator_diameters_mm=geometry.collimator_diameters_mm,
            collimator_spacing_mm=geometry.collimator_spacing_mm,
        )
        c_best, _ = scan(redesigned, e)
        points.append(
            EnergyScanPoint(
                energy_kev=e,
                contrast=c_peak,
                z_peak_mm=z_peak,
                normalized=c_peak / c_design,
                normalized_self=c_peak / c_best,
            )
        )
    return points


ENERGY_SCAN_HEADER = "energy_kev,contrast,z_peak_mm,normalized,normalized_self"


def write_energy_scan_csv(points: list[EnergyScanPoint], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(ENERGY_SCAN_HEADER + "\n")
        for p in points:
            fh.write(
                f"{p.energy_kev:.6g},{p.contrast:.9g},{p.z_peak_mm:.6g},"
                f"{p.normalized:.9g},{p.normalized_self:.9g}\n"
            )


def read_energy_scan_csv(path) -> list[EnergyScanPoint]:
    points = []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != ENERGY_SCAN_HEADER:
            raise InputError(f"unexpected energy-scan header {header!r}", line=1)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 5:
                raise InputError("expected five comma-separated fields", line=lineno)
            try:
                points.append(EnergyScanPoint(*(float(p) for p in parts)))
            except ValueError:
                raise InputError(f"non-numeric field in {line!r}", line=lineno) from None
    return points


def write_pattern_csv(profile: IntensityProfile, path) -> None:
    mean = profile.intensity.mean()
    scale = 1.0 / mean if mean > 0.0 else 1.0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x_um,intensity\n")
        for x, i in zip(profile.x_um, profile.intensity):
            fh.write(f"{x:.4f},{i * scale:.9g}\n")


def read_pattern_csv(path, plane_z_mm: float = float("nan")) -> IntensityProfile:
    xs, ys = [], []
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "x_um,intensity":
            raise InputError(f"unexpected pattern header {header!r}", line=1)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise InputError("expected two comma-separated fields", line=lineno)
            try:
                xs.append(float(parts[0]))
                ys.append(float(parts[1]))
            except ValueError:
                raise InputError(f"non-numeric field in {line!r}", line=lineno) from None
    return IntensityProfile(np.asarray(xs), np.asarray(ys), plane_z_mm)


def write_carpet_csv(carpet: TalbotCarpet, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("z_mm,x_um,intensity\n")
        for z, profile in zip(carpet.z_mm, carpet.profiles):
            for x, i in zip(profile.x_um, profile.intensity):
                fh.write(f"{z:.4f},{x:.4f},{i:.9g}\n")


def read_carpet_csv(path) -> TalbotCarpet:
    data: dict[float, list[tuple[float, float]]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != "z_mm,x_um,intensity":
            raise InputError(f"unexpected carpet header {header!r}", line=1)
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise InputError("expected three comma-separated fields", line=lineno)
            try:
                z, x, i = float(parts[0]), float(parts[1]), float(parts[2])
            except ValueError:
                raise InputError(f"non-numeric field in {line!r}", line=lineno) from None
            data.setdefault(z, []).append((x, i))
    z_sorted = sorted(data)
    profiles = []
    for z in z_sorted:
        rows = data[z]
        xs = np.array([r[0] for r in rows])
        ys = np.array([r[1] for r in rows])
        profiles.append(IntensityProfile(xs, ys, z))
    return TalbotCarpet(np.asarray(z_sorted), profiles)
