"""Small least-squares machinery shared by the analysis pipeline.

The sinusoid fit is linear and solved in closed form. The Gaussian-plus-
constant fit uses a coarse grid over (center, width) with the amplitude and
baseline solved linearly at each node, followed by Gauss-Newton refinement
with an analytic Jacobian. Parameter spaces are small enough that no
external optimizer is warranted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError

GN_MAX_ITER = 200
GN_STEP_TOL = 1.0e-6


@dataclass
class SinusoidFit:
    """a + p sin(2πx/T) + q cos(2πx/T) fitted to binned counts."""

    a: float
    p: float
    q: float
    cov: np.ndarray
    residuals: np.ndarray

    @property
    def amplitude(self) -> float:
        return float(np.hypot(self.p, self.q))

    @property
    def phase_rad(self) -> float:
        """Phase φ such that the modulation is amplitude·sin(2πx/T + φ)."""
        return float(np.arctan2(self.q, self.p))

    def amplitude_variance(self) -> float:
        amp = self.amplitude
        if amp == 0.0:
            return float(self.cov[1, 1])
        g = np.array([0.0, self.p / amp, self.q / amp])
        return float(g @ self.cov @ g)


def fit_sinusoid(
    x: np.ndarray, counts: np.ndarray, period: float, exposure: np.ndarray | None = None
) -> SinusoidFit:
    """Closed-form linear least squares of a + p sin + q cos.

    ``exposure`` is the relative acceptance of each bin (mean 1); counts are
    normalized by it before fitting. The estimate is unweighted (the
    harmonic basis is orthogonal on a uniform grid, so weighting by the
    observed counts would only add the usual downward Poisson-weighting
    bias); the covariance is the sandwich form with Poisson bin variances
    σ² = max(N, 1) propagated through the normalization.
    """
    if exposure is None:
        y = np.asarray(counts, dtype=float)
        sigma2 = np.maximum(counts, 1.0)
    else:
        y = counts / exposure
        sigma2 = np.maximum(counts, 1.0) / exposure**2
    arg = 2.0 * np.pi * x / period
    design = np.column_stack([np.ones_like(x), np.sin(arg), np.cos(arg)])
    normal = design.T @ design
    try:
        beta = np.linalg.solve(normal, design.T @ y)
        normal_inv = np.linalg.inv(normal)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"sinusoid fit is singular: {exc}") from exc
    cov = normal_inv @ (design.T * sigma2[None, :]) @ design @ normal_inv
    residuals = y - design @ beta
    return SinusoidFit(a=float(beta[0]), p=float(beta[1]), q=float(beta[2]),
                       cov=cov, residuals=residuals)


@dataclass
class GaussianFit:
    """B + A exp(-(x-mu)²/(2 sigma²)) fitted by grid + Gauss-Newton."""

    amplitude: float
    center: float
    sigma: float
    baseline: float
    cov: np.ndarray
    converged: bool
    n_iter: int
    degenerate: bool = False

    @property
    def peak_value(self) -> float:
        return self.amplitude + self.baseline

    def errors(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.cov), 0.0, None))


def _gauss_model(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    a, mu, sig, b = params
    return b + a * np.exp(-0.5 * ((x - mu) / sig) ** 2)


def _gauss_jacobian(params: np.ndarray, x: np.ndarray) -> np.ndarray:
    a, mu, sig, _ = params
    u = (x - mu) / sig
    e = np.exp(-0.5 * u * u)
    return np.column_stack([e, a * e * u / sig, a * e * u * u / sig, np.ones_like(x)])


def _linear_amp_baseline(x, y, w, mu, sig):
    e = np.exp(-0.5 * ((x - mu) / sig) ** 2)
    d = np.column_stack([e, np.ones_like(x)])
    wd = d * w[:, None]
    try:
        beta = np.linalg.solve(d.T @ wd, wd.T @ y)
    except np.linalg.LinAlgError:
        return None
    resid = y - d @ beta
    return beta[0], beta[1], float(np.sum(w * resid * resid))


def fit_gaussian_constant(
    x: np.ndarray,
    y: np.ndarray,
    weights: np.ndarray | None = None,
    center_grid: np.ndarray | None = None,
    sigma_grid: np.ndarray | None = None,
) -> GaussianFit:
    """Gaussian-plus-constant least squares.

    ``weights`` are 1/σ²; Poisson weights on the counts by default. The
    coarse grid defaults to every sample position for the center and a
    geometric ladder spanning the data range for the width. Raises
    :class:`NumericalError` when Gauss-Newton fails to converge.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = 1.0 / np.maximum(y, 1.0) if weights is None else np.asarray(weights, dtype=float)
    span = x.max() - x.min()
    if center_grid is None:
        center_grid = x
    if sigma_grid is None:
        step = span / max(len(x) - 1, 1)
        sigma_grid = step * np.array([1.0, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0])
        sigma_grid = sigma_grid[sigma_grid <= span]
        if len(sigma_grid) == 0:
            sigma_grid = np.array([span if span > 0 else 1.0])

    best = None
    for mu in center_grid:
        for sig in sigma_grid:
            sol = _linear_amp_baseline(x, y, w, mu, sig)
            if sol is None:
                continue
            a, b, chi2 = sol
            if best is None or chi2 < best[0]:
                best = (chi2, np.array([a, mu, sig, b]))
    if best is None:
        raise NumericalError("gaussian grid search found no solvable node")

    chi2, params = best
    scales = np.array([
        max(abs(params[0]), 1e-12),
        max(span, 1e-12),
        max(span, 1e-12),
        max(abs(params[3]), max(abs(params[0]), 1e-12)),
    ])
    converged = False
    n_iter = 0
    for n_iter in range(1, GN_MAX_ITER + 1):
        resid = y - _gauss_model(params, x)
        jac = _gauss_jacobian(params, x)
        wj = jac * w[:, None]
        try:
            step = np.linalg.solve(jac.T @ wj, wj.T @ resid)
        except np.linalg.LinAlgError:
            break
        # halve the step until chi² stops increasing
        damping = 1.0
        for _ in range(12):
            trial = params + damping * step
            trial[2] = abs(trial[2])
            if trial[2] == 0.0:
                trial[2] = scales[2] * 1e-6
            r = y - _gauss_model(trial, x)
            trial_chi2 = float(np.sum(w * r * r))
            if trial_chi2 <= chi2 * (1.0 + 1e-12):
                break
            damping *= 0.5
        else:
            break
        params, chi2 = trial, trial_chi2
        if np.max(np.abs(damping * step) / scales) < GN_STEP_TOL:
            converged = True
            break
    if not converged:
        raise NumericalError(
            "gaussian fit did not converge",
            diagnostics={"x": x, "y": y, "params": params, "chi2": chi2, "iterations": n_iter},
        )
    jac = _gauss_jacobian(params, x)
    wj = jac * w[:, None]
    try:
        cov = np.linalg.inv(jac.T @ wj)
    except np.linalg.LinAlgError:
        cov = np.full((4, 4), np.nan)
    return GaussianFit(
        amplitude=float(params[0]),
        center=float(params[1]),
        sigma=float(abs(params[2])),
        baseline=float(params[3]),
        cov=cov,
        converged=True,
        n_iter=n_iter,
    )
