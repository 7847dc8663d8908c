"""Monte Carlo synthesis of emulsion grain data.

Signal grains are drawn from a fringe pattern evaluated on the tilted film
(the film's Y coordinate maps to detector distance L2), with a Gaussian
beam envelope in (X, Y) and a truncated-Gaussian implantation depth in Z.
Noise grains are a uniform Poisson process over the film volume.

Generation is partitioned into the same view tiles the analysis uses, each
tile driven by its own counter-based RNG stream derived from
(seed, channel, ix, iy), so the output is identical no matter how the tiles
are scheduled. One grain is generated per particle.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy.special import ndtr, ndtri

from .errors import DomainError, InputError
from .wavesim import TalbotCarpet

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
_CH_SIGNAL = 0
_CH_NOISE = 1

KIND_SIGNAL = 0
KIND_NOISE = 1


@dataclass(frozen=True)
class EmulsionFrame:
    """Tilted film geometry and its mapping to detector distance.

    The film plane carries coordinates (X, Y) in µm; Y is correlated with
    the detector distance via L2(Y) = L2_at_origin + Y_sign · Y sin(tilt).
    The film covers a rectangle of ``film_size`` centered on
    ``film_center`` (the scanned region need not contain Y = 0).
    """

    tilt_angle_rad: float = math.pi / 4.0
    L2_at_origin_mm: float = 578.94
    film_size_mm: tuple[float, float] = (10.0, 14.0)
    film_center_mm: tuple[float, float] = (0.0, -8.4)
    thickness_um: float = 50.0
    Y_sign: int = 1

    def __post_init__(self):
        if not 0.0 < self.tilt_angle_rad < math.pi / 2.0:
            raise DomainError("tilt angle must lie in (0, π/2)")
        if not self.thickness_um > 0.0:
            raise DomainError("emulsion thickness must be positive")
        if self.Y_sign not in (1, -1):
            raise DomainError("Y_sign must be +1 or -1")

    @property
    def x_bounds_um(self) -> tuple[float, float]:
        half = self.film_size_mm[0] * 500.0
        cx = self.film_center_mm[0] * 1000.0
        return (cx - half, cx + half)

    @property
    def y_bounds_um(self) -> tuple[float, float]:
        half = self.film_size_mm[1] * 500.0
        cy = self.film_center_mm[1] * 1000.0
        return (cy - half, cy + half)


def emulsion_to_lab(frame: EmulsionFrame, y_um):
    """Map film Y (µm) to (L2 in mm, laboratory transverse y in µm)."""
    y_um = np.asarray(y_um, dtype=float)
    l2_mm = frame.L2_at_origin_mm + frame.Y_sign * y_um * math.sin(frame.tilt_angle_rad) / 1000.0
    y_lab_um = y_um * math.cos(frame.tilt_angle_rad)
    return l2_mm, y_lab_um


def lab_to_emulsion(frame: EmulsionFrame, l2_mm) -> np.ndarray:
    """Inverse of :func:`emulsion_to_lab` for the L2 coordinate."""
    l2_mm = np.asarray(l2_mm, dtype=float)
    return (l2_mm - frame.L2_at_origin_mm) * 1000.0 / (
        frame.Y_sign * math.sin(frame.tilt_angle_rad)
    )


@dataclass(frozen=True)
class ExposureConfig:
    """Controls of one synthetic exposure."""

    target_grains_per_view: float = 11000.0
    noise_density_per_1000um3: float = 5.8
    implantation_mean_um: float = 2.0
    implantation_sigma_um: float = 1.0
    beam_center_mm: tuple[float, float] = (0.0, -8.4)
    beam_fwhm_mm: float = 6.5
    rng_seed: int = 20190503
    view_width_um: float = 370.0
    view_height_um: float = 294.0

    def __post_init__(self):
        for name in ("target_grains_per_view", "noise_density_per_1000um3",
                     "implantation_sigma_um", "beam_fwhm_mm",
                     "view_width_um", "view_height_um"):
            if not getattr(self, name) > 0.0:
                raise DomainError(f"{name} must be positive")
        if self.implantation_mean_um < 0.0:
            raise DomainError("implantation mean must be non-negative")


@dataclass
class HitSet:
    """Grain coordinates in the emulsion frame, µm.

    ``kind`` tags generator truth (signal/noise) and is stripped on export;
    files read back always carry ``kind=None``.
    """

    x_um: np.ndarray
    y_um: np.ndarray
    z_um: np.ndarray
    kind: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.x_um)

    @staticmethod
    def empty(with_kind: bool = False) -> "HitSet":
        e = np.empty(0)
        return HitSet(e, e.copy(), e.copy(), np.empty(0, dtype=np.int8) if with_kind else None)

    @staticmethod
    def concatenate(parts: list["HitSet"]) -> "HitSet":
        if not parts:
            return HitSet.empty()
        kinds = None
        if all(p.kind is not None for p in parts):
            kinds = np.concatenate([p.kind for p in parts])
        return HitSet(
            np.concatenate([p.x_um for p in parts]),
            np.concatenate([p.y_um for p in parts]),
            np.concatenate([p.z_um for p in parts]),
            kinds,
        )

    def select(self, mask: np.ndarray) -> "HitSet":
        return HitSet(
            self.x_um[mask],
            self.y_um[mask],
            self.z_um[mask],
            None if self.kind is None else self.kind[mask],
        )


class ParametricPattern:
    """Analytic fringe model: I(X, Y) = 1 + C(L2) sin(2π X(α)/d3 + φ0).

    The contrast envelope C(L2) = baseline + amplitude · Gaussian(center,
    width) lives in detector-distance space; X(α) = X cos α - Y sin α allows
    injecting a known fringe angle.
    """

    def __init__(
        self,
        d3_um: float = 5.90,
        amplitude: float = 0.491,
        center_l2_mm: float = 573.0,
        width_l2_mm: float = 2.121,
        baseline: float = 0.0,
        phase_rad: float = 0.0,
        alpha_rad: float = 0.0,
    ):
        if not d3_um > 0.0:
            raise DomainError("fringe period must be positive")
        if amplitude < 0.0 or baseline < 0.0 or not width_l2_mm > 0.0:
            raise DomainError("envelope parameters must be non-negative, width positive")
        if amplitude + baseline >= 1.0:
            raise InputError(
                f"pattern would be non-positive: peak contrast {amplitude + baseline} >= 1"
            )
        self.d3_um = d3_um
        self.amplitude = amplitude
        self.center_l2_mm = center_l2_mm
        self.width_l2_mm = width_l2_mm
        self.baseline = baseline
        self.phase_rad = phase_rad
        self.alpha_rad = alpha_rad

    def contrast_at(self, l2_mm) -> np.ndarray:
        u = (np.asarray(l2_mm, dtype=float) - self.center_l2_mm) / self.width_l2_mm
        return self.baseline + self.amplitude * np.exp(-0.5 * u * u)

    def intensity(self, x_um, y_um, l2_mm) -> np.ndarray:
        c = self.contrast_at(l2_mm)
        xr = np.asarray(x_um) * math.cos(self.alpha_rad) - np.asarray(y_um) * math.sin(
            self.alpha_rad
        )
        return 1.0 + c * np.sin(2.0 * np.pi * xr / self.d3_um + self.phase_rad)

    @property
    def max_intensity(self) -> float:
        return 1.0 + self.baseline + self.amplitude


class CarpetPattern:
    """Fringe model interpolated from a simulated carpet (z ↔ L2, x ↔ X)."""

    def __init__(self, carpet: TalbotCarpet):
        if len(carpet.z_mm) < 2:
            raise InputError("carpet needs at least two planes for interpolation")
        self.z_mm = np.asarray(carpet.z_mm, dtype=float)
        self.x_um = carpet.profiles[0].x_um
        self.matrix = np.stack([p.intensity for p in carpet.profiles])
        if np.min(self.matrix) <= 0.0:
            raise InputError("carpet intensity must be positive everywhere")

    def intensity(self, x_um, y_um, l2_mm) -> np.ndarray:
        x = np.asarray(x_um, dtype=float)
        z = np.asarray(l2_mm, dtype=float)
        if np.any(x < self.x_um[0]) or np.any(x > self.x_um[-1]):
            raise InputError(
                "film X range exceeds the simulated carpet window; "
                "widen the simulation window or shrink the film"
            )
        if np.any(z < self.z_mm[0]) or np.any(z > self.z_mm[-1]):
            raise InputError("film L2 range exceeds the simulated carpet z range")
        idx = np.clip(np.searchsorted(self.z_mm, z) - 1, 0, len(self.z_mm) - 2)
        frac = (z - self.z_mm[idx]) / (self.z_mm[idx + 1] - self.z_mm[idx])
        out = np.empty_like(x)
        for plane in np.unique(idx):
            sel = idx == plane
            lo = np.interp(x[sel], self.x_um, self.matrix[plane])
            hi = np.interp(x[sel], self.x_um, self.matrix[plane + 1])
            out[sel] = lo + frac[sel] * (hi - lo)
        return out

    @property
    def max_intensity(self) -> float:
        return float(np.max(self.matrix))


def _tile_stream(seed: int, channel: int, ix: int, iy: int) -> np.random.Generator:
    offset = 1 << 31
    seq = np.random.SeedSequence([seed, channel, ix + offset, iy + offset])
    return np.random.Generator(np.random.Philox(seq))


def _truncated_normal(rng, mean, sigma, lo, hi, size) -> np.ndarray:
    a = ndtr((lo - mean) / sigma)
    b = ndtr((hi - mean) / sigma)
    u = rng.random(size)
    return mean + sigma * ndtri(a + u * (b - a))


def _film_tiles(frame: EmulsionFrame, w_um: float, h_um: float):
    """Yield (ix, iy, clipped bounds) of view tiles intersecting the film."""
    x0, x1 = frame.x_bounds_um
    y0, y1 = frame.y_bounds_um
    eps = 1e-9
    for iy in range(math.floor(y0 / h_um), math.floor((y1 - eps) / h_um) + 1):
        ty0, ty1 = max(iy * h_um, y0), min((iy + 1) * h_um, y1)
        if ty1 <= ty0:
            continue
        for ix in range(math.floor(x0 / w_um), math.floor((x1 - eps) / w_um) + 1):
            tx0, tx1 = max(ix * w_um, x0), min((ix + 1) * w_um, x1)
            if tx1 <= tx0:
                continue
            yield ix, iy, (tx0, tx1), (ty0, ty1)


def generate_signal_hits(pattern, frame: EmulsionFrame, exposure: ExposureConfig) -> HitSet:
    """Sample signal grains by rejection against the fringe pattern.

    Proposals follow the Gaussian beam envelope, restricted per view tile;
    a proposal at (X, Y) is accepted with probability I(X; L2(Y))/I_max.
    The proposal intensity is calibrated so the expected accepted count in
    the tile containing the beam center equals ``target_grains_per_view``.
    """
    sx = exposure.beam_fwhm_mm * 1000.0 * FWHM_TO_SIGMA
    sy = sx
    bx = exposure.beam_center_mm[0] * 1000.0
    by = exposure.beam_center_mm[1] * 1000.0
    w, h = exposure.view_width_um, exposure.view_height_um
    i_max = pattern.max_intensity

    def tile_mass(tx, ty):
        px = ndtr((tx[1] - bx) / sx) - ndtr((tx[0] - bx) / sx)
        py = ndtr((ty[1] - by) / sy) - ndtr((ty[0] - by) / sy)
        return px * py

    cx, cy = math.floor(bx / w), math.floor(by / h)
    central = [t for t in _film_tiles(frame, w, h) if t[0] == cx and t[1] == cy]
    if not central:
        raise DomainError("beam center lies outside the film")
    p_central = tile_mass(central[0][2], central[0][3])
    if p_central <= 0.0:
        raise DomainError("beam envelope has no mass in the central view")
    n_proposals = exposure.target_grains_per_view * i_max / p_central

    parts = []
    for ix, iy, tx, ty in _film_tiles(frame, w, h):
        lam = n_proposals * tile_mass(tx, ty)
        rng = _tile_stream(exposure.rng_seed, _CH_SIGNAL, ix, iy)
        n = int(rng.poisson(lam))
        if n == 0:
            continue
        xs = _truncated_normal(rng, bx, sx, tx[0], tx[1], n)
        ys = _truncated_normal(rng, by, sy, ty[0], ty[1], n)
        u = rng.random(n)
        zs = _truncated_normal(
            rng,
            exposure.implantation_mean_um,
            exposure.implantation_sigma_um,
            0.0,
            frame.thickness_um,
            n,
        )
        l2, _ = emulsion_to_lab(frame, ys)
        intensity = pattern.intensity(xs, ys, l2)
        if np.any(intensity <= 0.0):
            raise InputError("pattern intensity must be positive everywhere")
        keep = u * i_max < intensity
        parts.append(
            HitSet(xs[keep], ys[keep], zs[keep], np.zeros(int(keep.sum()), dtype=np.int8))
        )
    return HitSet.concatenate(parts) if parts else HitSet.empty(with_kind=True)


def generate_noise_grains(
    frame: EmulsionFrame,
    region_um: tuple[tuple[float, float], tuple[float, float]],
    noise_density_per_1000um3: float,
    rng: np.random.Generator | int,
) -> HitSet:
    """Uniform Poisson background over a region: count ~ Poisson(ρ · volume),
    positions uniform in the region and over the full emulsion depth."""
    if not noise_density_per_1000um3 > 0.0:
        raise DomainError("noise density must be positive")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(rng), _CH_NOISE])))
    (x0, x1), (y0, y1) = region_um
    volume = max(x1 - x0, 0.0) * max(y1 - y0, 0.0) * frame.thickness_um
    n = int(rng.poisson(noise_density_per_1000um3 / 1000.0 * volume))
    if n == 0:
        return HitSet.empty(with_kind=True)
    xs = x0 + (x1 - x0) * rng.random(n)
    ys = y0 + (y1 - y0) * rng.random(n)
    zs = frame.thickness_um * rng.random(n)
    return HitSet(xs, ys, zs, np.ones(n, dtype=np.int8))


def generate_exposure(pattern, frame: EmulsionFrame, exposure: ExposureConfig) -> HitSet:
    """One full exposure: signal plus volumetric noise, per-tile streams."""
    parts = [generate_signal_hits(pattern, frame, exposure)]
    w, h = exposure.view_width_um, exposure.view_height_um
    for ix, iy, tx, ty in _film_tiles(frame, w, h):
        rng = _tile_stream(exposure.rng_seed, _CH_NOISE, ix, iy)
        parts.append(generate_noise_grains(frame, (tx, ty), exposure.noise_density_per_1000um3, rng))
    return HitSet.concatenate(parts)


def write_hits(hits: HitSet, path) -> None:
    """CSV export: header X_um,Y_um,Z_um, fixed-point 3 decimals, LF endings.

    The generator-truth kind tag is deliberately not written."""
    frame = pd.DataFrame(
        {"X_um": hits.x_um, "Y_um": hits.y_um, "Z_um": hits.z_um}
    )
    frame.to_csv(path, index=False, float_format="%.3f", lineterminator="\n")


def read_hits(path) -> HitSet:
    """Parse a hit CSV; malformed rows raise :class:`InputError` naming the line."""
    try:
        frame = pd.read_csv(
            path, dtype={"X_um": np.float64, "Y_um": np.float64, "Z_um": np.float64}
        )
    except (ValueError, pd.errors.ParserError):
        _locate_parse_error(path)
        raise InputError("hit file could not be parsed")  # pragma: no cover
    if list(frame.columns) != ["X_um", "Y_um", "Z_um"]:
        raise InputError(f"unexpected hit-file header {list(frame.columns)!r}", line=1)
    if frame.isna().any().any():
        _locate_parse_error(path)
    return HitSet(
        frame["X_um"].to_numpy(),
        frame["Y_um"].to_numpy(),
        frame["Z_um"].to_numpy(),
        None,
    )


def _locate_parse_error(path) -> None:
    with open(path, "r", encoding="utf-8") as fh:
        fh.readline()
        for lineno, line in enumerate(fh, start=2):
            stripped = line.strip()
            if not stripped:
                continue
            fields = stripped.split(",")
            if len(fields) != 3:
                raise InputError(
                    f"expected 3 comma-separated fields, got {len(fields)}", line=lineno
                )
            for token in fields:
                try:
                    float(token)
                except ValueError:
                    raise InputError(f"non-numeric field {token!r}", line=lineno) from None
    raise InputError("hit file could not be parsed")
