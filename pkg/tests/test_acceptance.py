"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
lines; the whole module takes around ten minutes at the default grids.
"""

import hashlib

import numpy as np
import pytest

from conftest import synth_fringe_hits
from talbotlau import analysis as an
from talbotlau import physics as ph
from talbotlau import wavesim as ws
from talbotlau.cli import main as cli_main

ENERGIES_KEV = [14.0, 11.0, 9.0, 8.0]
TRUE_CONTRASTS = {14.0: 0.491, 11.0: 0.436, 9.0: 0.267, 8.0: 0.144}
NOISE_DENSITIES = {14.0: 5.8, 11.0: 7.0, 9.0: 7.4, 8.0: 6.2}
TRUE_Y0_MM = -8.4
TRUE_L2_MM = 573.0

EXPOSURE_ARGS = [
    "--set", "emulsion.film_width_mm=1.48",
    "--set", "emulsion.film_height_mm=12.0",
    "--set", "pattern.center_l2_mm=573.0",
    "--set", "pattern.width_l2_mm=2.121",
    "--set", "emulsion.l2_at_origin_mm=578.94",
]


def ok(n, message):
    print(f"[criterion {n}] PASS: {message}")


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def designed():
    particle = ph.ParticleState(14.0)
    geometry = ph.design_geometry(1.210, 1.004, particle)
    beam = ph.BeamModel(particle=particle)
    return particle, geometry, beam


@pytest.fixture(scope="module")
def exposures(tmp_path_factory):
    """Four synthetic exposures generated and analyzed through the CLI."""
    tmp = tmp_path_factory.mktemp("acceptance")
    results = {}
    for e in ENERGIES_KEV:
        hits = tmp / f"hits_{e:g}.csv"
        out_dir = tmp / f"out_{e:g}"
        args = EXPOSURE_ARGS + [
            "--set", f"beam.energy_kev={e:g}",
            "--set", f"pattern.amplitude={TRUE_CONTRASTS[e]}",
            "--set", f"exposure.noise_density_per_1000um3={NOISE_DENSITIES[e]}",
        ]
        assert cli_main(["generate", *args, "--seed", str(1000 + int(e)),
                         "--out", str(hits)]) == 0
        assert cli_main(["analyze", "--hits", str(hits), *args,
                         "--out-dir", str(out_dir)]) == 0
        results[e] = {
            "hits": hits,
            "out_dir": out_dir,
            "args": args,
            "summary": an.read_summary(out_dir / "summary.txt"),
        }
    return results


def test_criterion_1_wavelength():
    particle = ph.ParticleState(14.0)
    lam = ph.de_broglie_wavelength_pm(particle)
    assert abs(lam - 10.30) <= 0.05
    nonrel = ph.nonrelativistic_wavelength_pm(particle)
    assert abs(nonrel - 10.30) > 0.05  # fails at the third digit (10.37)
    assert nonrel == pytest.approx(10.37, abs=0.01)
    ok(1, f"lambda = {lam:.4f} pm (non-relativistic {nonrel:.4f} pm correctly fails)")


def test_criterion_2_geometry(designed):
    _, geometry, _ = designed
    assert 117.8 <= geometry.L1_mm <= 118.4
    assert 571.0 <= geometry.L2_mm <= 581.0
    d3 = ph.fringe_period_um(geometry)
    assert abs(d3 - 5.90) <= 0.04
    ok(2, f"L1 = {geometry.L1_mm:.2f} mm, L2 = {geometry.L2_mm:.2f} mm, d3 = {d3:.3f} um")


def test_criterion_3_tolerance(designed):
    _, geometry, beam = designed
    sigma = ph.rotational_tolerance_urad(geometry, beam)
    assert sigma == pytest.approx(556.0, rel=0.05)
    factor = ph.rotation_contrast_factor(70e-6, sigma * 1e-6)
    assert factor > 0.99
    ok(3, f"sigma_phi = {sigma:.1f} urad, contrast factor at 70 urad = {factor:.4f}")


def test_criterion_4_propagator():
    grid = ws.Grid1D(4096, 25.0, 0.0)
    field = ws.apply_grating(
        ws.ComplexField(grid, np.ones(grid.num_points, complex), 10.3),
        ph.GratingSpec(1.0, 0.5),
    )
    p0 = field.power
    hop = field
    for _ in range(10):
        hop = ws.fresnel_propagate(hop, 41.7)
    drift = abs(hop.power - p0) / p0
    assert drift < 1e-10

    d_um, lam_pm = 1.0, 10.3
    tgrid = ws.Grid1D(256 * 64, d_um / 256 * 1e3, 0.0)
    masked = ws.apply_grating(
        ws.ComplexField(tgrid, np.ones(tgrid.num_points, complex), lam_pm),
        ph.GratingSpec(d_um, 0.5),
    )
    z_talbot = 2.0 * d_um**2 / (lam_pm / 1e6) / 1e3
    out = ws.fresnel_propagate(masked, z_talbot)
    i0 = np.abs(masked.amplitudes) ** 2
    i1 = np.abs(out.amplitudes) ** 2
    residual = np.linalg.norm(i1 - i0) / np.linalg.norm(i0)
    assert residual < 1e-6
    ok(4, f"power drift {drift:.2e} over 10 hops; Talbot revival residual {residual:.2e}")


def test_criterion_5_quantum_pattern(designed):
    particle, geometry, beam = designed
    cfg = ws.SimConfig()  # default grid
    d3 = ph.fringe_period_um(geometry)
    profile = ws.simulate_quantum_pattern(geometry, beam, particle, geometry.L2_mm, cfg)
    period = ws.dominant_period_um(profile)
    contrast, _ = ws.pattern_contrast(profile, d3)
    assert abs(period - d3) / d3 <= 0.01
    assert contrast > 0.3

    z = geometry.L2_mm + np.arange(-10, 11) * 1.0
    pts = ws.contrast_vs_l2(geometry, beam, particle, z, cfg)
    zv = np.array([p[0] for p in pts])
    cv = np.array([p[1] for p in pts])
    z_peak, _ = ws._refined_peak(zv, cv)
    assert abs(z_peak - geometry.L2_mm) <= 5.0
    ok(5, f"dominant period {period:.4f} um, contrast {contrast:.3f}, "
          f"z-scan peak at {z_peak:.2f} mm (designed {geometry.L2_mm:.2f} mm)")


def test_criterion_6_classical_exclusion(designed):
    particle, geometry, beam = designed
    cfg_cl = ws.SimConfig(model="classical")
    patterns = []
    for e in (8.0, 14.0):
        b = ph.BeamModel(particle=ph.ParticleState(e))
        patterns.append(ws.simulate_classical_pattern(geometry, b, geometry.L2_mm, cfg_cl))
    assert np.array_equal(patterns[0].intensity, patterns[1].intensity)

    cfg_cl_scan = ws.SimConfig(model="classical", num_tilt_samples=48)
    cl_points = ws.contrast_vs_energy(
        geometry, beam, ENERGIES_KEV, cfg_cl_scan, z_halfwidth_mm=6.0, z_step_mm=0.5
    )
    for p in cl_points:
        assert abs(p.normalized - 1.0) < 1e-9

    cfg_q = ws.SimConfig(num_tilt_samples=48)
    q_points = ws.contrast_vs_energy(
        geometry, beam, ENERGIES_KEV, cfg_q, z_halfwidth_mm=6.0, z_step_mm=0.5
    )
    norms = [p.normalized for p in q_points]  # ordered 14, 11, 9, 8
    assert all(a > b for a, b in zip(norms, norms[1:]))
    ok(6, "classical patterns bit-identical and ratio 1; quantum normalized contrast "
          + " > ".join(f"{n:.3f}" for n in norms))


def test_criterion_7_end_to_end_recovery(exposures):
    l2_peaks = []
    lines = []
    for e in ENERGIES_KEV:
        s = exposures[e]["summary"]
        assert s.periodicity_found, f"{e} keV: no periodicity found"
        assert abs(s.contrast_max - TRUE_CONTRASTS[e]) <= 0.02, (
            f"{e} keV: contrast {s.contrast_max:.4f} vs truth {TRUE_CONTRASTS[e]}"
        )
        assert 5.85 <= s.d3_um <= 5.95, f"{e} keV: d3 {s.d3_um:.4f}"
        assert abs(s.y0_mm - TRUE_Y0_MM) <= 0.5, f"{e} keV: Y0 {s.y0_mm:.3f}"
        l2_peaks.append(s.l2_peak_mm)
        lines.append(f"{e:g} keV: C {s.contrast_max:.3f} ({TRUE_CONTRASTS[e]:.3f})")
    common = float(np.mean(l2_peaks))
    for e, l2 in zip(ENERGIES_KEV, l2_peaks):
        assert abs(l2 - common) <= 1.0, f"{e} keV: L2 {l2:.2f} vs common {common:.2f}"
        assert abs(l2 - TRUE_L2_MM) <= 1.0
    ok(7, "; ".join(lines) + f"; common L2 = {common:.2f} mm")


def test_criterion_8_rayleigh_statistics():
    x = 5.9 * np.arange(500) + 1.0
    r_periodic = an.rayleigh_statistic(x, np.zeros_like(x), 0.0, 5.9)
    assert r_periodic == pytest.approx(1.0, abs=1e-12)

    n, trials = 10_000, 1000
    failures = 0
    for batch in range(10):
        rng = np.random.Generator(np.random.Philox(1234 + batch))
        xs = rng.uniform(0.0, 3700.0, size=(trials // 10, n))
        r = np.abs(np.exp(2j * np.pi * xs / 5.9).mean(axis=1))
        failures += int(np.sum(r >= 0.03))
    assert failures <= trials // 100  # >= 99% below the exp(-n r²) tail point

    hits = synth_fringe_hits(100_000, contrast=0.5, seed=77, view_w=5900.0, view_h=294.0)
    r_mean = an.rayleigh_statistic(hits.x_um, np.zeros(len(hits)), 0.0, 5.90)
    assert abs(r_mean - 0.25) <= 0.01
    ok(8, f"R = {r_periodic:.12f} on periodic data; {failures}/1000 uniform trials "
          f"above 0.03; R = {r_mean:.4f} at C = 0.5")


def test_criterion_9_estimator_bias():
    # full analyzer chain: per-view maximization, population selection
    # ellipse, trim, fold, noise subtraction
    biases = {}
    for contrast in (0.1, 0.3, 0.5):
        views, results = [], []
        for k in range(100):
            hits = synth_fringe_hits(
                11000, contrast=contrast, noise_density_per_1000um3=5.8,
                seed=10_000 + k,
            )
            views.append(
                an.View(0, 0, 0.0, 0.0, 370.0, 294.0, hits.x_um, hits.y_um, hits.z_um)
            )
            results.append(an.maximize_rayleigh(views[-1]))
        selection = an.fit_scatter_peak(results)
        estimates = []
        for view, result in zip(views, results):
            row = an.analyze_view(view, selection, result, 50.0, an.AnalysisConfig())
            if row.selected:
                estimates.append(row.contrast)
        assert len(estimates) >= 80, "selection dropped too many views"
        biases[contrast] = float(np.mean(estimates)) - contrast
        assert abs(biases[contrast]) <= 0.01, (
            f"C = {contrast}: mean bias {biases[contrast]:+.4f}"
        )
    ok(9, "mean bias " + ", ".join(f"{c}: {b:+.4f}" for c, b in biases.items()))


def test_criterion_10_determinism(exposures, tmp_path):
    e = 14.0
    record = exposures[e]
    hits2 = tmp_path / "hits_again.csv"
    assert cli_main(["generate", *record["args"], "--seed", str(1000 + int(e)),
                     "--out", str(hits2)]) == 0
    assert sha(hits2) == sha(record["hits"])

    out2 = tmp_path / "again"
    assert cli_main(["analyze", "--hits", str(hits2), *record["args"],
                     "--out-dir", str(out2), "--threads", "2"]) == 0
    for name in ("views.csv", "summary.txt"):
        assert sha(out2 / name) == sha(record["out_dir"] / name)

    sim_digests = []
    for name in ("p1.csv", "p2.csv"):
        out_file = tmp_path / name
        assert cli_main([
            "simulate", "--model", "quantum", "--set", "sim.num_points=8192",
            "--set", "sim.num_tilt_samples=8", "--out", str(out_file),
        ]) == 0
        sim_digests.append(sha(out_file))
    assert sim_digests[0] == sim_digests[1]
    ok(10, "regenerated hits, re-analysis with --threads 2, and repeated simulate "
           "are byte-identical")
