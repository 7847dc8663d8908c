"""Statistical fringe pipeline for emulsion hit data.

Per view: a grid-plus-golden-section maximization of the Rayleigh test
statistic locates the fringe angle and period; views consistent with the
population peak (an axis-aligned 3σ ellipse from Gaussian fits to the two
parameter histograms) are cropped, depth-selected around the fitted
implantation peak, folded modulo the period and fitted with a first-harmonic
sinusoid; the volumetric noise floor measured in the emulsion bulk is
subtracted from the contrast. Exposure level: the per-view contrasts in a
band across the beam are fitted with a Gaussian envelope over Y, which maps
to the detector distance of peak contrast.

Every step is deterministic; per-view work is independent and may run in
parallel without changing any output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NumericalError, ViewSkip
from .fitting import GaussianFit, SinusoidFit, fit_gaussian_constant, fit_sinusoid
from .hitgen import EmulsionFrame, HitSet, emulsion_to_lab

GOLDEN_INV = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class AnalysisConfig:
    """Knobs of the fringe pipeline; defaults follow the apparatus values."""

    view_width_um: float = 370.0
    view_height_um: float = 294.0
    crop_width_um: float = 340.0
    crop_height_um: float = 270.0
    alpha_min_rad: float = -0.05
    alpha_max_rad: float = 0.05
    d3_min_um: float = 5.7
    d3_max_um: float = 6.1
    min_hits_per_view: int = 100
    min_hits_for_fold: int = 500
    min_hits_for_z_fit: int = 50
    bins_per_period: int = 30
    fold_periods: int = 1
    hist_bins: int = 60
    band_width_mm: float = 1.0
    d3_systematic_frac: float = 0.008
    min_views_for_scatter_fit: int = 50
    min_views_in_band: int = 10
    peak_significance: float = 5.0
    z_bin_um: float = 0.25
    min_bulk_hits: int = 20
    threads: int = 1


@dataclass
class View:
    """One analysis tile and the hits inside it."""

    ix: int
    iy: int
    x0_um: float
    y0_um: float
    width_um: float
    height_um: float
    x_um: np.ndarray
    y_um: np.ndarray
    z_um: np.ndarray

    @property
    def n_hits(self) -> int:
        return len(self.x_um)

    @property
    def x_center_um(self) -> float:
        return self.x0_um + 0.5 * self.width_um

    @property
    def y_center_um(self) -> float:
        return self.y0_um + 0.5 * self.height_um


@dataclass(frozen=True)
class RayleighResult:
    alpha_star_rad: float
    d3_star_um: float
    r_star: float
    n_hits: int


@dataclass
class EllipseSelection:
    """Axis-aligned 3σ acceptance region in the (α*, d3*) plane."""

    alpha_center_rad: float
    alpha_sigma_rad: float
    d3_center_um: float
    d3_sigma_um: float
    background_level: float
    alpha_fit: GaussianFit
    d3_fit: GaussianFit
    degenerate: bool = False

    @property
    def semi_axes(self) -> tuple[float, float]:
        return (3.0 * self.alpha_sigma_rad, 3.0 * self.d3_sigma_um)

    def contains(self, result: RayleighResult) -> bool:
        a, d = self.semi_axes
        u = (result.alpha_star_rad - self.alpha_center_rad) / a
        v = (result.d3_star_um - self.d3_center_um) / d
        return u * u + v * v <= 1.0


@dataclass
class ViewContrast:
    """Per-view analysis outcome; unselected views report zero contrast."""

    ix: int
    iy: int
    x_center_um: float
    y_center_um: float
    n_hits: int
    alpha_star_rad: float = math.nan
    d3_star_um: float = math.nan
    r_star: float = math.nan
    selected: bool = False
    contrast: float = 0.0
    contrast_err: float = 0.0
    phase_rad: float = math.nan
    n_signal_est: float = 0.0
    n_noise_est: float = 0.0
    skip_reason: str = ""


@dataclass
class FoldResult:
    contrast_raw: float
    phase_rad: float
    fit: SinusoidFit
    bin_centers_um: np.ndarray
    counts: np.ndarray


@dataclass
class ProfileFit:
    """Gaussian-with-baseline fit of contrast vs Y."""

    c_max: float
    c_max_err: float
    y0_mm: float
    y0_err_mm: float
    width_mm: float
    baseline: float
    degenerate: bool
    fit: GaussianFit | None


@dataclass
class ContrastSummary:
    """Exposure-level results in reporting units."""

    energy_kev: float
    periodicity_found: bool
    n_hits: int
    n_views: int
    n_views_analyzed: int
    n_views_selected: int
    d3_um: float = math.nan
    d3_stat_um: float = math.nan
    d3_syst_um: float = math.nan
    alpha_rad: float = math.nan
    contrast_max: float = math.nan
    contrast_max_err: float = math.nan
    y0_mm: float = math.nan
    y0_err_mm: float = math.nan
    l2_peak_mm: float = math.nan
    l2_peak_err_mm: float = math.nan
    band_center_x_um: float = math.nan
    profile_width_mm: float = math.nan
    profile_baseline: float = math.nan
    note: str = ""


@dataclass
class ExposureAnalysis:
    views: list[ViewContrast]
    selection: EllipseSelection | None
    summary: ContrastSummary


def grid_shape(
    width_um: float, height_um: float, view_width_um: float = 370.0, view_height_um: float = 294.0
) -> tuple[int, int]:
    """Number of complete view tiles covering a scan area, (nx, ny)."""
    return int(width_um // view_width_um), int(height_um // view_height_um)


def partition_views(
    hits: HitSet, view_width_um: float = 370.0, view_height_um: float = 294.0
) -> list[View]:
    """Tile the film into views anchored at the coordinate origin.

    Tiles are half-open in both axes, so a hit exactly on a boundary belongs
    to the higher-index tile's lower edge, i.e. to exactly one view.
    Views are returned sorted by (iy, ix).
    """
    if len(hits) == 0:
        raise DomainError("cannot partition an empty hit set")
    ix = np.floor_divide(hits.x_um, view_width_um).astype(np.int64)
    iy = np.floor_divide(hits.y_um, view_height_um).astype(np.int64)
    order = np.lexsort((ix, iy))
    ix_s, iy_s = ix[order], iy[order]
    boundaries = np.nonzero((np.diff(ix_s) != 0) | (np.diff(iy_s) != 0))[0] + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(order)]])
    views = []
    xs, ys, zs = hits.x_um[order], hits.y_um[order], hits.z_um[order]
    for s, e in zip(starts, ends):
        views.append(
            View(
                ix=int(ix_s[s]),
                iy=int(iy_s[s]),
                x0_um=float(ix_s[s] * view_width_um),
                y0_um=float(iy_s[s] * view_height_um),
                width_um=view_width_um,
                height_um=view_height_um,
                x_um=xs[s:e],
                y_um=ys[s:e],
                z_um=zs[s:e],
            )
        )
    return views


def rayleigh_statistic(x_um: np.ndarray, y_um: np.ndarray, alpha_rad: float, d3_um: float) -> float:
    """R = |n⁻¹ Σ exp(2πi X(α)/d3)| with X(α) = X cos α - Y sin α."""
    n = len(x_um)
    if n == 0:
        raise DomainError("Rayleigh statistic is undefined for zero hits")
    xr = x_um * math.cos(alpha_rad) - y_um * math.sin(alpha_rad)
    return float(np.abs(np.mean(np.exp(2j * np.pi * xr / d3_um))))


def _golden_max(fn, lo: float, hi: float, tol: float) -> tuple[float, float]:
    a, b = lo, hi
    c = b - GOLDEN_INV * (b - a)
    d = a + GOLDEN_INV * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN_INV * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN_INV * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def _binned_rayleigh_row(x, y, alpha, inv_d3, bin_width):
    """R over the d3 grid at one angle, from a position histogram.

    Binning the rotated positions (bin ≪ d3) turns the n-term phase sums
    into sums over occupied bins; the sub-permille attenuation is flat in
    d3, so the located maximum cell is unaffected.
    """
    xr = x * math.cos(alpha) - y * math.sin(alpha)
    lo = xr.min()
    idx = ((xr - lo) * (1.0 / bin_width)).astype(np.int64)
    counts = np.bincount(idx)
    centers = lo + (np.arange(len(counts)) + 0.5) * bin_width
    occupied = counts > 0
    counts = counts[occupied].astype(np.float64)
    centers = centers[occupied]
    phases = 2.0 * np.pi * inv_d3[:, None] * centers[None, :]
    re = (np.cos(phases) * counts).sum(axis=1)
    im = (np.sin(phases) * counts).sum(axis=1)
    return np.hypot(re, im) / len(x)


def maximize_rayleigh(
    view: View,
    alpha_range: tuple[float, float] = (-0.05, 0.05),
    d3_range: tuple[float, float] = (5.7, 6.1),
    config: AnalysisConfig | None = None,
    grid_refine: int = 1,
) -> RayleighResult:
    """Grid search over (α, d3) followed by alternate golden-section sweeps.

    Coordinates are view-centered, so the angle decouples from the global
    fringe phase. The grid is pitched at the decoherence scale of the view
    (period step d3²/(4W), angle step d3/(4H)); the refinement is three
    alternating 1-D golden-section maximizations of the exact statistic.
    The whole procedure is deterministic.
    """
    config = config or AnalysisConfig()
    if view.n_hits == 0:
        raise DomainError("cannot maximize the Rayleigh statistic of an empty view")
    x = view.x_um - view.x_center_um
    y = view.y_um - view.y_center_um

    d3_mid = 0.5 * (d3_range[0] + d3_range[1])
    alpha_step = d3_mid / (4.0 * view.height_um)
    d3_step = d3_range[0] ** 2 / (4.0 * view.width_um)
    n_alpha = max(2, grid_refine * int(math.ceil((alpha_range[1] - alpha_range[0]) / alpha_step)) + 1)
    n_d3 = max(2, grid_refine * int(math.ceil((d3_range[1] - d3_range[0]) / d3_step)) + 1)
    alphas = np.linspace(alpha_range[0], alpha_range[1], n_alpha)
    d3s = np.linspace(d3_range[0], d3_range[1], n_d3)

    inv_d3 = 1.0 / d3s
    bin_width = d3_range[0] / 128.0
    best = (-1.0, alphas[0], d3s[0])
    for a in alphas:
        r = _binned_rayleigh_row(x, y, a, inv_d3, bin_width)
        k = int(np.argmax(r))
        if r[k] > best[0]:
            best = (float(r[k]), float(a), float(d3s[k]))

    _, a_best, d_best = best
    alpha_grid_step = alphas[1] - alphas[0]
    d3_grid_step = d3s[1] - d3s[0]
    for _ in range(3):
        lo = max(alpha_range[0], a_best - alpha_grid_step)
        hi = min(alpha_range[1], a_best + alpha_grid_step)
        a_best, _ = _golden_max(
            lambda a: rayleigh_statistic(x, y, a, d_best), lo, hi, tol=1e-5
        )
        xr = x * math.cos(a_best) - y * math.sin(a_best)
        lo = max(d3_range[0], d_best - d3_grid_step)
        hi = min(d3_range[1], d_best + d3_grid_step)
        d_best, r_best = _golden_max(
            lambda d: float(np.abs(np.mean(np.exp(2j * np.pi * xr / d)))), lo, hi, tol=2e-5
        )
    return RayleighResult(
        alpha_star_rad=a_best, d3_star_um=d_best, r_star=r_best, n_hits=view.n_hits
    )


def fit_scatter_peak(
    results: list[RayleighResult],
    alpha_range: tuple[float, float] = (-0.05, 0.05),
    d3_range: tuple[float, float] = (5.7, 6.1),
    config: AnalysisConfig | None = None,
) -> EllipseSelection:
    """Gaussian-plus-constant fits to the α* and d3* histograms.

    The acceptance ellipse is axis-aligned with semi-axes 3σ from the two
    fits. A fully degenerate population (all results identical) is reported
    with the bin width as the σ floor and ``degenerate=True``.
    """
    config = config or AnalysisConfig()
    if len(results) < config.min_views_for_scatter_fit:
        raise DomainError(
            f"need at least {config.min_views_for_scatter_fit} views, got {len(results)}"
        )
    alphas = np.array([r.alpha_star_rad for r in results])
    d3s = np.array([r.d3_star_um for r in results])
    bins = config.hist_bins
    a_counts, a_edges = np.histogram(alphas, bins=bins, range=alpha_range)
    d_counts, d_edges = np.histogram(d3s, bins=bins, range=d3_range)
    a_centers = 0.5 * (a_edges[:-1] + a_edges[1:])
    d_centers = 0.5 * (d_edges[:-1] + d_edges[1:])

    degenerate = np.ptp(alphas) == 0.0 and np.ptp(d3s) == 0.0
    if degenerate:
        a_bw = a_edges[1] - a_edges[0]
        d_bw = d_edges[1] - d_edges[0]
        dummy = GaussianFit(
            amplitude=float(len(results)), center=float(alphas[0]), sigma=a_bw,
            baseline=0.0, cov=np.zeros((4, 4)), converged=True, n_iter=0, degenerate=True,
        )
        dummy_d = replace_center_sigma(dummy, float(d3s[0]), d_bw)
        return EllipseSelection(
            alpha_center_rad=float(alphas[0]),
            alpha_sigma_rad=a_bw,
            d3_center_um=float(d3s[0]),
            d3_sigma_um=d_bw,
            background_level=0.0,
            alpha_fit=dummy,
            d3_fit=dummy_d,
            degenerate=True,
        )

    try:
        a_fit = fit_gaussian_constant(a_centers, a_counts.astype(float))
        d_fit = fit_gaussian_constant(d_centers, d_counts.astype(float))
    except NumericalError as exc:
        raise NumericalError(
            "scatter-peak fit did not converge",
            diagnostics={
                "alpha_hist": (a_centers, a_counts),
                "d3_hist": (d_centers, d_counts),
                **exc.diagnostics,
            },
        ) from exc
    return EllipseSelection(
        alpha_center_rad=a_fit.center,
        alpha_sigma_rad=a_fit.sigma,
        d3_center_um=d_fit.center,
        d3_sigma_um=d_fit.sigma,
        background_level=0.5 * (a_fit.baseline + d_fit.baseline),
        alpha_fit=a_fit,
        d3_fit=d_fit,
    )


def replace_center_sigma(fit: GaussianFit, center: float, sigma: float) -> GaussianFit:
    return GaussianFit(
        amplitude=fit.amplitude, center=center, sigma=sigma, baseline=fit.baseline,
        cov=fit.cov, converged=fit.converged, n_iter=fit.n_iter, degenerate=fit.degenerate,
    )


@dataclass
class TrimmedView:
    """Hits surviving the spatial crop and implantation-depth window."""

    x_um: np.ndarray
    y_um: np.ndarray
    z_fit: GaussianFit
    z_window_um: tuple[float, float]
    crop_area_um2: float
    bulk_density_per_um3: float
    n_bulk: int
    window_volume_um3: float

    @property
    def z_window_width_um(self) -> float:
        return self.z_window_um[1] - self.z_window_um[0]


def fit_implantation_depth(
    z_um: np.ndarray, thickness_um: float, bin_um: float = 0.25
) -> GaussianFit:
    """Gaussian-plus-constant fit to the depth histogram."""
    n_bins = max(int(round(thickness_um / bin_um)), 4)
    counts, edges = np.histogram(z_um, bins=n_bins, range=(0.0, thickness_um))
    centers = 0.5 * (edges[:-1] + edges[1:])
    return fit_gaussian_constant(centers, counts.astype(float))


def select_and_trim(
    view: View,
    selection: EllipseSelection,
    result: RayleighResult,
    thickness_um: float,
    config: AnalysisConfig | None = None,
    fallback_bulk_density: float | None = None,
) -> TrimmedView:
    """Restrict a view to the centered analysis area and a ±1σ depth window
    around the fitted implantation peak; measure the bulk noise density from
    depths at least 3σ away from the peak.

    Raises :class:`ViewSkip` when the view fails the ellipse membership, the
    depth fit, or is empty after trimming.
    """
    config = config or AnalysisConfig()
    if not selection.contains(result):
        raise ViewSkip("outside the (alpha*, d3*) acceptance ellipse")
    half_w = 0.5 * config.crop_width_um
    half_h = 0.5 * config.crop_height_um
    cx, cy = view.x_center_um, view.y_center_um
    inside = (
        (np.abs(view.x_um - cx) <= half_w)
        & (np.abs(view.y_um - cy) <= half_h)
    )
    if inside.sum() < config.min_hits_for_z_fit:
        raise ViewSkip(f"only {int(inside.sum())} hits in the analysis area")
    z = view.z_um[inside]
    try:
        z_fit = fit_implantation_depth(z, thickness_um, config.z_bin_um)
    except NumericalError as exc:
        raise ViewSkip(f"implantation depth fit failed: {exc}") from exc
    if not (0.0 <= z_fit.center <= thickness_um) or z_fit.sigma <= 0.0:
        raise ViewSkip("implantation depth fit is unphysical")

    z_lo = max(z_fit.center - z_fit.sigma, 0.0)
    z_hi = min(z_fit.center + z_fit.sigma, thickness_um)
    in_window = inside.copy()
    in_window[inside] = (z >= z_lo) & (z <= z_hi)

    bulk_lo = max(z_fit.center - 3.0 * z_fit.sigma, 0.0)
    bulk_hi = min(z_fit.center + 3.0 * z_fit.sigma, thickness_um)
    bulk_depth = bulk_lo + (thickness_um - bulk_hi)
    crop_area = config.crop_width_um * config.crop_height_um
    bulk_mask = (z < bulk_lo) | (z > bulk_hi)
    n_bulk = int(bulk_mask.sum())
    if bulk_depth > 0.0 and n_bulk >= config.min_bulk_hits:
        bulk_density = n_bulk / (crop_area * bulk_depth)
    elif fallback_bulk_density is not None:
        bulk_density = fallback_bulk_density
    else:
        raise ViewSkip("too sparse to measure the bulk noise density")
    return TrimmedView(
        x_um=view.x_um[in_window],
        y_um=view.y_um[in_window],
        z_fit=z_fit,
        z_window_um=(z_lo, z_hi),
        crop_area_um2=crop_area,
        bulk_density_per_um3=bulk_density,
        n_bulk=n_bulk,
        window_volume_um3=crop_area * (z_hi - z_lo),
    )


def fold_exposure(
    alpha_rad: float,
    d3_um: float,
    fold_periods: int,
    n_bins: int,
    region_width_um: float,
    region_height_um: float,
    anchor_um: float = 0.0,
    oversample: int = 64,
) -> np.ndarray:
    """Relative acceptance of each fold bin for a rectangular region.

    The rotated coordinate X(α) of a uniform rectangle has a trapezoidal
    marginal centered on ``anchor_um``; folding it modulo the period leaves
    a few-percent exposure ripple whenever the region spans a non-integer
    number of periods, which would leak into the fitted first harmonic.
    Normalizing the fold histogram by this (analytic, deterministic)
    acceptance removes the bias for signal and noise alike. Returned with
    mean 1.
    """
    a1 = region_width_um * abs(math.cos(alpha_rad))
    a2 = region_height_um * abs(math.sin(alpha_rad))
    half_support = 0.5 * (a1 + a2)
    flat = 0.5 * abs(a1 - a2)
    ramp_width = half_support - flat  # = min(a1, a2)

    def marginal(x):
        ax = np.abs(x - anchor_um)
        return np.clip((half_support - ax) / max(ramp_width, 1e-12), 0.0, 1.0)

    period = fold_periods * d3_um
    u = (np.arange(n_bins * oversample) + 0.5) * period / (n_bins * oversample)
    k_lo = math.floor((anchor_um - half_support) / period) - 1
    k_hi = math.ceil((anchor_um + half_support) / period) + 1
    total = np.zeros_like(u)
    for k in range(k_lo, k_hi + 1):
        total += marginal(u + k * period)
    exposure = total.reshape(n_bins, oversample).mean(axis=1)
    mean = exposure.mean()
    if mean <= 0.0:
        raise DomainError("fold exposure vanished; region smaller than one period")
    return exposure / mean


def fold_and_fit(
    x_um: np.ndarray,
    y_um: np.ndarray,
    center: tuple[float, float],
    alpha_star_rad: float,
    d3_star_um: float,
    bins_per_period: int = 30,
    fold_periods: int = 1,
    min_hits: int = 500,
    region_size_um: tuple[float, float] | None = None,
) -> FoldResult:
    """Histogram X(α*) mod (fold_periods · d3*) and fit the first harmonic.

    The model a + p sin + q cos is linear and solved in closed form;
    contrast_raw = √(p²+q²)/a with errors from the Poisson covariance.
    Bin counts are normalized by the geometric fold acceptance of the
    region (see :func:`fold_exposure`); the region extent defaults to the
    bounding box of the hits.
    """
    if fold_periods not in (1, 3):
        raise DomainError("fold_periods must be 1 or 3")
    n = len(x_um)
    if n < min_hits:
        raise ViewSkip(f"only {n} hits to fold; need {min_hits}")
    xr = (x_um - center[0]) * math.cos(alpha_star_rad) - (y_um - center[1]) * math.sin(
        alpha_star_rad
    )
    span = fold_periods * d3_star_um
    folded = np.mod(xr, span)
    n_bins = bins_per_period * fold_periods
    counts, edges = np.histogram(folded, bins=n_bins, range=(0.0, span))
    centers = 0.5 * (edges[:-1] + edges[1:])
    if region_size_um is None:
        region_size_um = (float(np.ptp(x_um)), float(np.ptp(y_um)))
    anchor = 0.5 * (float(xr.min()) + float(xr.max()))
    exposure = fold_exposure(
        alpha_star_rad, d3_star_um, fold_periods, n_bins,
        region_size_um[0], region_size_um[1], anchor_um=anchor,
    )
    fit = fit_sinusoid(centers, counts.astype(float), d3_star_um, exposure=exposure)
    if fit.a <= 0.0:
        raise ViewSkip("unphysical fold fit: non-positive mean level")
    return FoldResult(
        contrast_raw=fit.amplitude / fit.a,
        phase_rad=fit.phase_rad,
        fit=fit,
        bin_centers_um=centers,
        counts=counts,
    )


def subtract_noise(
    contrast_raw: float,
    mean_per_bin: float,
    bulk_density_per_um3: float,
    region_volume_um3: float,
    n_bins: int,
) -> tuple[float, float]:
    """Refer the fitted amplitude to the signal-only mean level.

    Returns (corrected contrast, expected noise counts per bin). The total
    mean is a = s + b with b the expected noise per bin, so the corrected
    contrast is a·contrast_raw/(a - b).
    """
    b_noise = bulk_density_per_um3 * region_volume_um3 / n_bins
    if mean_per_bin <= b_noise:
        raise ViewSkip(
            f"signal-free view: mean {mean_per_bin:.2f}/bin vs noise {b_noise:.2f}/bin"
        )
    return contrast_raw * mean_per_bin / (mean_per_bin - b_noise), b_noise


def _refine_on_trimmed(
    x_um: np.ndarray,
    y_um: np.ndarray,
    center: tuple[float, float],
    alpha0: float,
    d30: float,
    view_width_um: float,
    view_height_um: float,
) -> tuple[float, float]:
    """Sharpen (α*, d3*) on the depth-trimmed hits before folding.

    The depth window removes most of the volumetric noise, so the trimmed
    sample localizes the fringe parameters better than the full view; this
    suppresses the amplitude attenuation that per-view parameter scatter
    would otherwise imprint on the folded fit.
    """
    x = x_um - center[0]
    y = y_um - center[1]
    a_step = d30 / (4.0 * view_height_um)
    d_step = d30**2 / (4.0 * view_width_um)
    a_best, d_best = alpha0, d30
    for _ in range(3):
        a_best, _ = _golden_max(
            lambda a: rayleigh_statistic(x, y, a, d_best),
            a_best - a_step, a_best + a_step, tol=1e-5,
        )
        xr = x * math.cos(a_best) - y * math.sin(a_best)
        d_best, _ = _golden_max(
            lambda d: float(np.abs(np.mean(np.exp(2j * np.pi * xr / d)))),
            d_best - d_step, d_best + d_step, tol=2e-5,
        )
    return a_best, d_best


def analyze_view(
    view: View,
    selection: EllipseSelection,
    result: RayleighResult,
    thickness_um: float,
    config: AnalysisConfig,
    fallback_bulk_density: float | None = None,
) -> ViewContrast:
    """Full per-view chain: trim, refine, fold, fit, noise-correct."""
    out = ViewContrast(
        ix=view.ix,
        iy=view.iy,
        x_center_um=view.x_center_um,
        y_center_um=view.y_center_um,
        n_hits=view.n_hits,
        alpha_star_rad=result.alpha_star_rad,
        d3_star_um=result.d3_star_um,
        r_star=result.r_star,
    )
    try:
        trimmed = select_and_trim(
            view, selection, result, thickness_um, config, fallback_bulk_density
        )
        alpha_fold, d3_fold = _refine_on_trimmed(
            trimmed.x_um,
            trimmed.y_um,
            (view.x_center_um, view.y_center_um),
            result.alpha_star_rad,
            result.d3_star_um,
            view.width_um,
            view.height_um,
        )
        fold = fold_and_fit(
            trimmed.x_um,
            trimmed.y_um,
            (view.x_center_um, view.y_center_um),
            alpha_fold,
            d3_fold,
            config.bins_per_period,
            config.fold_periods,
            config.min_hits_for_fold,
            region_size_um=(config.crop_width_um, config.crop_height_um),
        )
        n_bins = config.bins_per_period * config.fold_periods
        contrast, b_noise = subtract_noise(
            fold.contrast_raw,
            fold.fit.a,
            trimmed.bulk_density_per_um3,
            trimmed.window_volume_um3,
            n_bins,
        )
    except ViewSkip as skip:
        out.skip_reason = skip.reason
        return out

    # error propagation through C = amp/(a - b): fit covariance in (a, p, q)
    # plus the Poisson error of the bulk-density estimate
    a = fold.fit.a
    amp = fold.fit.amplitude
    s = a - b_noise
    if amp > 0.0:
        grad = np.array([-amp / s**2, fold.fit.p / (amp * s), fold.fit.q / (amp * s)])
        var = float(grad @ fold.fit.cov @ grad)
    else:
        var = float(fold.fit.cov[1, 1]) / s**2
    if trimmed.n_bulk > 0:
        sigma_b = b_noise / math.sqrt(trimmed.n_bulk)
        var += (amp / s**2) ** 2 * sigma_b**2
    out.selected = True
    out.contrast = contrast
    out.contrast_err = math.sqrt(max(var, 0.0))
    out.phase_rad = fold.phase_rad
    out.n_noise_est = b_noise * n_bins
    out.n_signal_est = s * n_bins
    return out


def contrast_profile_fit(
    y_center_mm: np.ndarray,
    contrast: np.ndarray,
    contrast_err: np.ndarray,
    min_points: int = 10,
) -> ProfileFit:
    """Gaussian-plus-baseline fit of contrast vs Y for the band views.

    A fit whose amplitude is consistent with zero (or that fails to
    converge) is flagged degenerate: the peak position is unidentifiable.
    """
    if len(y_center_mm) < min_points:
        raise DomainError(f"need at least {min_points} band views, got {len(y_center_mm)}")
    w = 1.0 / np.maximum(np.asarray(contrast_err, dtype=float), 1e-6) ** 2
    try:
        fit = fit_gaussian_constant(
            np.asarray(y_center_mm, dtype=float), np.asarray(contrast, dtype=float), weights=w
        )
    except NumericalError:
        return ProfileFit(
            c_max=float(np.max(contrast)), c_max_err=math.nan, y0_mm=math.nan,
            y0_err_mm=math.nan, width_mm=math.nan, baseline=math.nan,
            degenerate=True, fit=None,
        )
    err = fit.errors()
    amp_err = err[0] if np.isfinite(err[0]) else math.inf
    if fit.amplitude <= 0.0 or fit.amplitude < 2.0 * amp_err:
        return ProfileFit(
            c_max=fit.peak_value, c_max_err=amp_err, y0_mm=fit.center, y0_err_mm=err[1],
            width_mm=fit.sigma, baseline=fit.baseline, degenerate=True, fit=fit,
        )
    # C_max = A + B: propagate with the A-B covariance
    var_peak = fit.cov[0, 0] + fit.cov[3, 3] + 2.0 * fit.cov[0, 3]
    return ProfileFit(
        c_max=fit.peak_value,
        c_max_err=math.sqrt(max(var_peak, 0.0)),
        y0_mm=fit.center,
        y0_err_mm=err[1],
        width_mm=fit.sigma,
        baseline=fit.baseline,
        degenerate=False,
        fit=fit,
    )


def _no_periodicity_summary(
    energy_kev: float, views: list[View], analyzed: int, note: str
) -> ContrastSummary:
    return ContrastSummary(
        energy_kev=energy_kev,
        periodicity_found=False,
        n_hits=sum(v.n_hits for v in views),
        n_views=len(views),
        n_views_analyzed=analyzed,
        n_views_selected=0,
        note=note,
    )


def analyze_exposure(
    hits: HitSet,
    frame: EmulsionFrame,
    config: AnalysisConfig | None = None,
    energy_kev: float = math.nan,
) -> ExposureAnalysis:
    """Run the full pipeline on one exposure's hits."""
    config = config or AnalysisConfig()
    views = partition_views(hits, config.view_width_um, config.view_height_um)
    eligible = [v for v in views if v.n_hits >= config.min_hits_per_view]
    alpha_range = (config.alpha_min_rad, config.alpha_max_rad)
    d3_range = (config.d3_min_um, config.d3_max_um)

    def run(view: View) -> RayleighResult:
        return maximize_rayleigh(view, alpha_range, d3_range, config)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(run, eligible))
    else:
        results = [run(v) for v in eligible]

    placeholder_rows = {
        (v.ix, v.iy): ViewContrast(
            ix=v.ix, iy=v.iy, x_center_um=v.x_center_um, y_center_um=v.y_center_um,
            n_hits=v.n_hits, skip_reason="below the per-view hit threshold",
        )
        for v in views
    }

    def finish(summary: ContrastSummary, selection=None) -> ExposureAnalysis:
        rows = sorted(placeholder_rows.values(), key=lambda r: (r.iy, r.ix))
        return ExposureAnalysis(views=rows, selection=selection, summary=summary)

    for v, r in zip(eligible, results):
        row = placeholder_rows[(v.ix, v.iy)]
        row.alpha_star_rad = r.alpha_star_rad
        row.d3_star_um = r.d3_star_um
        row.r_star = r.r_star
        row.skip_reason = ""

    if len(results) < config.min_views_for_scatter_fit:
        return finish(
            _no_periodicity_summary(
                energy_kev, views, len(results),
                f"only {len(results)} analyzable views; no population fit",
            )
        )

    try:
        selection = fit_scatter_peak(results, alpha_range, d3_range, config)
    except NumericalError as exc:
        return finish(
            _no_periodicity_summary(
                energy_kev, views, len(results), f"no consistent periodicity: {exc}"
            )
        )
    significant = selection.degenerate or (
        _fit_significance(selection.alpha_fit) >= config.peak_significance
        and _fit_significance(selection.d3_fit) >= config.peak_significance
    )
    if not significant:
        return finish(
            _no_periodicity_summary(
                energy_kev, views, len(results),
                "no consistent periodicity: parameter histograms are structureless",
            ),
        )

    # global fallback noise density from all bulk hits (used for sparse views)
    global_bulk = _global_bulk_density(hits, views, frame.thickness_um, config)

    for v, r in zip(eligible, results):
        row = analyze_view(v, selection, r, frame.thickness_um, config, global_bulk)
        placeholder_rows[(v.ix, v.iy)] = row

    rows = sorted(placeholder_rows.values(), key=lambda r: (r.iy, r.ix))
    selected = [r for r in rows if r.selected]

    d3_stat = selection.d3_fit.errors()[1]
    summary = ContrastSummary(
        energy_kev=energy_kev,
        periodicity_found=True,
        n_hits=len(hits),
        n_views=len(views),
        n_views_analyzed=len(results),
        n_views_selected=len(selected),
        d3_um=selection.d3_center_um,
        d3_stat_um=float(d3_stat) if np.isfinite(d3_stat) else math.nan,
        d3_syst_um=config.d3_systematic_frac * selection.d3_center_um,
        alpha_rad=selection.alpha_center_rad,
    )
    if not selected:
        summary.note = "no views passed selection"
        return ExposureAnalysis(views=rows, selection=selection, summary=summary)

    weights = np.array([max(r.contrast, 0.0) for r in selected])
    xs = np.array([r.x_center_um for r in selected])
    band_center = float(np.average(xs, weights=weights)) if weights.sum() > 0 else float(
        np.mean(xs)
    )
    summary.band_center_x_um = band_center
    half_band = 0.5 * config.band_width_mm * 1000.0
    band = [r for r in selected if abs(r.x_center_um - band_center) <= half_band]
    if len(band) < config.min_views_in_band:
        summary.note = f"only {len(band)} selected views in the band; no profile fit"
        return ExposureAnalysis(views=rows, selection=selection, summary=summary)

    profile = contrast_profile_fit(
        np.array([r.y_center_um for r in band]) / 1000.0,
        np.array([r.contrast for r in band]),
        np.array([r.contrast_err for r in band]),
        config.min_views_in_band,
    )
    if profile.degenerate:
        summary.note = "contrast profile is flat; peak position unidentifiable"
        summary.contrast_max = profile.c_max
        return ExposureAnalysis(views=rows, selection=selection, summary=summary)

    summary.contrast_max = profile.c_max
    summary.contrast_max_err = profile.c_max_err
    summary.y0_mm = profile.y0_mm
    summary.y0_err_mm = profile.y0_err_mm
    summary.profile_width_mm = profile.width_mm
    summary.profile_baseline = profile.baseline
    l2_peak, _ = emulsion_to_lab(frame, profile.y0_mm * 1000.0)
    summary.l2_peak_mm = float(l2_peak)
    summary.l2_peak_err_mm = abs(profile.y0_err_mm) * math.sin(frame.tilt_angle_rad)
    return ExposureAnalysis(views=rows, selection=selection, summary=summary)


def _fit_significance(fit: GaussianFit) -> float:
    err = fit.errors()[0]
    if not np.isfinite(err) or err == 0.0:
        return math.inf if fit.amplitude > 0 else 0.0
    return fit.amplitude / err


def _global_bulk_density(
    hits: HitSet, views: list[View], thickness_um: float, config: AnalysisConfig
) -> float | None:
    """Film-wide noise density from depths far from the implantation peak."""
    try:
        z_fit = fit_implantation_depth(hits.z_um, thickness_um, config.z_bin_um)
    except NumericalError:
        return None
    lo = max(z_fit.center - 3.0 * z_fit.sigma, 0.0)
    hi = min(z_fit.center + 3.0 * z_fit.sigma, thickness_um)
    depth = lo + (thickness_um - hi)
    if depth <= 0.0:
        return None
    n = int(np.sum((hits.z_um < lo) | (hits.z_um > hi)))
    area = len(views) * config.view_width_um * config.view_height_um
    return n / (area * depth)


# --- report files ---------------------------------------------------


VIEW_TABLE_HEADER = (
    "ix,iy,X_center_um,Y_center_um,n_hits,alpha_star_rad,d3_star_um,R_star,"
    "selected,contrast,contrast_err,phase_rad"
)


def write_view_table(rows: list[ViewContrast], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(VIEW_TABLE_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r.ix},{r.iy},{r.x_center_um:.1f},{r.y_center_um:.1f},{r.n_hits},"
                f"{r.alpha_star_rad:.6g},{r.d3_star_um:.6g},{r.r_star:.6g},"
                f"{1 if r.selected else 0},{r.contrast:.6g},{r.contrast_err:.6g},"
                f"{r.phase_rad:.6g}\n"
            )


_SUMMARY_FIELDS = [
    ("energy_kev", float),
    ("periodicity_found", bool),
    ("n_hits", int),
    ("n_views", int),
    ("n_views_analyzed", int),
    ("n_views_selected", int),
    ("d3_um", float),
    ("d3_stat_um", float),
    ("d3_syst_um", float),
    ("alpha_rad", float),
    ("contrast_max", float),
    ("contrast_max_err", float),
    ("y0_mm", float),
    ("y0_err_mm", float),
    ("l2_peak_mm", float),
    ("l2_peak_err_mm", float),
    ("band_center_x_um", float),
    ("profile_width_mm", float),
    ("profile_baseline", float),
    ("note", str),
]


def write_summary(summary: ContrastSummary, path) -> None:
    """Key-value exposure report, parseable by :func:`read_summary`."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("# talbotlau exposure summary\n")
        for name, kind in _SUMMARY_FIELDS:
            value = getattr(summary, name)
            if kind is bool:
                text = "true" if value else "false"
            elif kind is float:
                text = repr(float(value))
            else:
                text = str(value)
            fh.write(f"{name} = {text}\n")


def read_summary(path) -> ContrastSummary:
    from .errors import InputError

    values: dict[str, object] = {}
    kinds = dict(_SUMMARY_FIELDS)
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise InputError(f"expected 'key = value', got {line!r}", line=lineno)
            key, text = (p.strip() for p in line.split("=", 1))
            if key not in kinds:
                raise InputError(f"unknown summary key {key!r}", line=lineno)
            kind = kinds[key]
            try:
                if kind is bool:
                    values[key] = text == "true"
                elif kind is str:
                    values[key] = text
                else:
                    values[key] = kind(text)
            except ValueError:
                raise InputError(f"bad value for {key!r}: {text!r}", line=lineno) from None
    missing = [name for name, _ in _SUMMARY_FIELDS if name not in values and name != "note"]
    if missing:
        raise InputError(f"summary file is missing keys: {', '.join(missing)}")
    values.setdefault("note", "")
    return ContrastSummary(**values)  # type: ignore[arg-type]


# --- exposure comparison ------------------------------------------------


@dataclass
class ComparisonRow:
    energy_kev: float
    contrast: float
    contrast_err: float
    normalized: float
    normalized_err: float
    quantum_model: float = math.nan
    classical_model: float = math.nan


@dataclass
class Comparison:
    rows: list[ComparisonRow]
    verdict: str
    reference_energy_kev: float


def summarize(
    summaries: list[ContrastSummary],
    quantum_curve: list[tuple[float, float]] | None = None,
    classical_curve: list[tuple[float, float]] | None = None,
) -> Comparison:
    """Normalized contrast-vs-energy table plus the model-compatibility verdict.

    Contrasts are normalized to the exposure with the highest peak contrast
    (the resonance value). The verdict is quantum-compatible when the
    contrast strictly decreases with decreasing energy beyond combined 3σ,
    classical-compatible when all exposures agree within 3σ, and
    inconclusive otherwise.
    """
    if len(summaries) < 2:
        return Comparison(rows=[], verdict="insufficient data", reference_energy_kev=math.nan)
    usable = [s for s in summaries if s.periodicity_found and np.isfinite(s.contrast_max)]
    if len(usable) < 2:
        return Comparison(rows=[], verdict="insufficient data", reference_energy_kev=math.nan)
    ordered = sorted(usable, key=lambda s: -s.energy_kev)
    ref = max(ordered, key=lambda s: s.contrast_max)

    def interp(curve, e):
        if not curve:
            return math.nan
        es = np.array([p[0] for p in curve])
        cs = np.array([p[1] for p in curve])
        order = np.argsort(es)
        return float(np.interp(e, es[order], cs[order]))

    rows = []
    for s in ordered:
        norm = s.contrast_max / ref.contrast_max
        if s is ref:
            norm_err = 0.0
        else:
            norm_err = norm * math.hypot(
                s.contrast_max_err / s.contrast_max,
                ref.contrast_max_err / ref.contrast_max,
            )
        rows.append(
            ComparisonRow(
                energy_kev=s.energy_kev,
                contrast=s.contrast_max,
                contrast_err=s.contrast_max_err,
                normalized=norm,
                normalized_err=norm_err,
                quantum_model=interp(quantum_curve, s.energy_kev),
                classical_model=interp(classical_curve, s.energy_kev),
            )
        )

    decreasing = True
    flat = True
    for hi, lo in zip(ordered[:-1], ordered[1:]):
        delta = hi.contrast_max - lo.contrast_max
        sigma = math.hypot(hi.contrast_max_err, lo.contrast_max_err)
        if not delta > 3.0 * sigma:
            decreasing = False
        if abs(delta) > 3.0 * sigma:
            flat = False
    if decreasing:
        verdict = "quantum-compatible"
    elif flat:
        verdict = "classical-compatible"
    else:
        verdict = "inconclusive"
    return Comparison(rows=rows, verdict=verdict, reference_energy_kev=ref.energy_kev)
