"""Batch command-line front door.

Subcommands: design, simulate, generate, analyze, compare. Every command is
deterministic given its flags, config and seed; the effective configuration
is echoed next to the outputs so any run can be replayed exactly.

Exit codes: 0 success, 1 usage, 2 input/parse, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import analysis as an
from . import hitgen as hg
from . import physics as ph
from . import wavesim as ws
from .config import load_config
from .errors import ConfigurationError, DomainError, InputError, NumericalError
from .svgfig import SvgFigure

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="talbotlau", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="design the resonant geometry and print tolerances")
    p.add_argument("--d1-um", type=float, required=True)
    p.add_argument("--d2-um", type=float, required=True)
    p.add_argument("--energy-kev", type=float, required=True)
    p.add_argument("--coherence-ratio", type=float, default=800.0)
    p.add_argument("--report", help="also write the report to this file")

    p = sub.add_parser("simulate", help="predict the detector-plane pattern")
    p.add_argument("--config", help="configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--model", choices=["quantum", "classical"], default="quantum")
    p.add_argument("--z-scan", metavar="Z0,Z1,N", help="carpet over n planes in [z0, z1] mm")
    p.add_argument("--energy-scan", metavar="E1,E2,...", help="peak contrast per energy (keV)")
    p.add_argument("--normalize", choices=["design", "self"], default="design")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("generate", help="synthesize an emulsion hit file")
    p.add_argument("--config", help="configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--pattern", help="carpet CSV to sample instead of the parametric model")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)

    p = sub.add_parser("analyze", help="run the fringe pipeline on a hit file")
    p.add_argument("--hits", required=True)
    p.add_argument("--config", help="configuration file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--plots", action="store_true")
    p.add_argument("--threads", type=int, default=None)

    p = sub.add_parser("compare", help="contrast vs energy table and verdict")
    p.add_argument("--summaries", nargs="+", required=True)
    p.add_argument("--quantum-curve")
    p.add_argument("--classical-curve")
    p.add_argument("--out", required=True)
    return parser


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    overrides = {}
    for pair in pairs:
        if "=" not in pair:
            raise UsageError(f"--set expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        overrides[key.strip()] = value.strip()
    return overrides


def cmd_design(args) -> int:
    particle = ph.ParticleState(args.energy_kev)
    geometry = ph.design_geometry(args.d1_um, args.d2_um, particle)
    beam = ph.BeamModel(particle=particle, coherence_ratio_at_detector=args.coherence_ratio)
    report = ph.tolerance_report(geometry, beam)
    lines = [
        f"lambda_db_pm = {ph.de_broglie_wavelength_pm(particle):.4f}",
        f"L1_mm = {geometry.L1_mm:.4f}",
        f"L2_mm = {geometry.L2_mm:.4f}",
        f"d3_um = {ph.fringe_period_um(geometry):.4f}",
        f"resonance_ratio = {report.resonance_ratio:.6f}",
        f"resonance_ratio_sigma = {report.resonance_ratio_sigma:.6f}",
        f"L2_uncertainty_mm = {report.L2_uncertainty_mm:.3f}",
        f"sigma_phi_urad = {report.sigma_phi_urad:.2f}",
        f"diffraction_regime_indicator = {report.diffraction_regime_indicator:.6f}",
    ]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    return EXIT_OK


def _echo_config(cfg, out_path) -> None:
    stem, _ = os.path.splitext(out_path)
    cfg.write(stem + ".config.txt")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, _parse_overrides(args.set))
    geometry = cfg.geometry()
    beam = cfg.beam()
    particle = cfg.particle()
    sim = cfg.sim_config(model=args.model, threads=args.threads)
    d3 = ph.fringe_period_um(geometry)

    if args.energy_scan:
        energies = [float(t) for t in args.energy_scan.split(",") if t.strip()]
        points = ws.contrast_vs_energy(geometry, beam, energies, sim)
        if args.normalize == "self":
            points = [
                ws.EnergyScanPoint(p.energy_kev, p.contrast, p.z_peak_mm,
                                   p.normalized_self, p.normalized_self)
                for p in points
            ]
        ws.write_energy_scan_csv(points, args.out)
        for p in points:
            sys.stdout.write(
                f"E = {p.energy_kev:g} keV: contrast = {p.contrast:.4f} "
                f"at z = {p.z_peak_mm:.2f} mm, normalized = {p.normalized:.4f}\n"
            )
        _echo_config(cfg, args.out)
        return EXIT_OK

    if args.z_scan:
        try:
            z0, z1, n = args.z_scan.split(",")
            z_values = np.linspace(float(z0), float(z1), int(n))
        except ValueError:
            raise UsageError(f"--z-scan expects Z0,Z1,N, got {args.z_scan!r}") from None
        carpet = ws.simulate_carpet(geometry, beam, particle, z_values, sim)
        ws.write_carpet_csv(carpet, args.out)
        contrasts = [ws.pattern_contrast(p, d3)[0] for p in carpet.profiles]
        k = int(np.argmax(contrasts))
        sys.stdout.write(
            f"carpet over {len(z_values)} planes; peak contrast {contrasts[k]:.4f} "
            f"at z = {carpet.z_mm[k]:.2f} mm (fringe period {d3:.4f} um)\n"
        )
        _echo_config(cfg, args.out)
        return EXIT_OK

    z_det = cfg.z_detector_mm()
    profile = ws.simulate_pattern(geometry, beam, particle, z_det, sim)
    ws.write_pattern_csv(profile, args.out)
    contrast, _ = ws.pattern_contrast(profile, d3)
    sys.stdout.write(
        f"pattern at z = {z_det:.2f} mm: contrast at d3 = {contrast:.4f}, "
        f"dominant period = {ws.dominant_period_um(profile):.4f} um\n"
    )
    _echo_config(cfg, args.out)
    return EXIT_OK


def cmd_generate(args) -> int:
    cfg = load_config(args.config, _parse_overrides(args.set))
    frame = cfg.emulsion_frame()
    exposure = cfg.exposure_config(seed=args.seed)
    carpet_file = args.pattern or (
        cfg["pattern.carpet_file"] if cfg["pattern.kind"] == "carpet" else ""
    )
    if cfg["pattern.kind"] not in ("parametric", "carpet"):
        raise InputError(f"unknown pattern.kind {cfg['pattern.kind']!r}")
    if cfg["pattern.kind"] == "carpet" and not carpet_file:
        raise UsageError("pattern.kind = carpet requires --pattern or pattern.carpet_file")
    if carpet_file:
        pattern = hg.CarpetPattern(ws.read_carpet_csv(carpet_file))
    else:
        pattern = cfg.parametric_pattern()
    hits = hg.generate_exposure(pattern, frame, exposure)
    hg.write_hits(hits, args.out)
    n_signal = int(np.sum(hits.kind == hg.KIND_SIGNAL))
    n_noise = int(np.sum(hits.kind == hg.KIND_NOISE))
    sys.stdout.write(f"signal = {n_signal}, noise = {n_noise}, total = {len(hits)}\n")
    _echo_config(cfg, args.out)
    return EXIT_OK


def _plot_scatter(result: an.ExposureAnalysis, cfg, path) -> None:
    rows = [r for r in result.views if math.isfinite(r.alpha_star_rad)]
    fig = SvgFigure(
        xlim=(cfg["analysis.alpha_min_rad"], cfg["analysis.alpha_max_rad"]),
        ylim=(cfg["analysis.d3_min_um"], cfg["analysis.d3_max_um"]),
        title="optimal angle and period per view",
        xlabel="alpha* (rad)",
        ylabel="d3* (um)",
    )
    fig.circles([r.alpha_star_rad for r in rows], [r.d3_star_um for r in rows], radius=2.0)
    sel = result.selection
    if sel is not None:
        a, d = sel.semi_axes
        fig.ellipse(sel.alpha_center_rad, sel.d3_center_um, a, d)
    fig.save(path)


def _plot_one_histogram(values, value_range, bins, fit, title, xlabel, path) -> None:
    counts, edges = np.histogram(values, bins=bins, range=value_range)
    fig = SvgFigure(
        xlim=(edges[0], edges[-1]),
        ylim=(0.0, max(float(counts.max()), 1.0) * 1.1),
        title=title,
        xlabel=xlabel,
        ylabel="views per bin",
    )
    centers = 0.5 * (edges[:-1] + edges[1:])
    fig.polyline(centers, counts, color="#1f77b4")
    if fit is not None and not fit.degenerate:
        xs = np.linspace(edges[0], edges[-1], 200)
        ys = fit.baseline + fit.amplitude * np.exp(-0.5 * ((xs - fit.center) / fit.sigma) ** 2)
        fig.polyline(xs, ys, color="#d62728")
    fig.save(path)


def _plot_histograms(result: an.ExposureAnalysis, cfg, path_alpha, path_d3) -> None:
    rows = [r for r in result.views if math.isfinite(r.alpha_star_rad)]
    sel = result.selection
    _plot_one_histogram(
        np.array([r.alpha_star_rad for r in rows]),
        (cfg["analysis.alpha_min_rad"], cfg["analysis.alpha_max_rad"]),
        cfg["analysis.hist_bins"],
        sel.alpha_fit if sel is not None else None,
        "optimal angle histogram", "alpha* (rad)", path_alpha,
    )
    _plot_one_histogram(
        np.array([r.d3_star_um for r in rows]),
        (cfg["analysis.d3_min_um"], cfg["analysis.d3_max_um"]),
        cfg["analysis.hist_bins"],
        sel.d3_fit if sel is not None else None,
        "optimal period histogram", "d3* (um)", path_d3,
    )


def _plot_heatmap(result: an.ExposureAnalysis, cfg, path) -> None:
    rows = result.views
    w = cfg["analysis.view_width_um"]
    h = cfg["analysis.view_height_um"]
    xs0 = [r.ix * w for r in rows]
    ys0 = [r.iy * h for r in rows]
    xs1 = [(r.ix + 1) * w for r in rows]
    ys1 = [(r.iy + 1) * h for r in rows]
    values = [r.contrast if r.selected else 0.0 for r in rows]
    fig = SvgFigure(
        xlim=(min(xs0), max(xs1)),
        ylim=(min(ys0), max(ys1)),
        title="contrast heatmap (excluded views at zero)",
        xlabel="X (um)",
        ylabel="Y (um)",
    )
    fig.cells(xs0, ys0, xs1, ys1, values)
    fig.save(path)


def _plot_profile(result: an.ExposureAnalysis, cfg, path) -> None:
    rows = [r for r in result.views if r.selected]
    band_center = result.summary.band_center_x_um
    half = 0.5 * cfg["analysis.band_width_mm"] * 1000.0
    if math.isfinite(band_center):
        rows = [r for r in rows if abs(r.x_center_um - band_center) <= half]
    ys = [r.y_center_um / 1000.0 for r in rows]
    cs = [r.contrast for r in rows]
    es = [r.contrast_err for r in rows]
    if rows:
        ylim = (0.0, max(max(c + e for c, e in zip(cs, es)), 0.1) * 1.15)
        xlim = (min(ys), max(ys))
    else:
        ylim, xlim = (0.0, 1.0), (-1.0, 1.0)
    fig = SvgFigure(
        xlim=xlim, ylim=ylim, title="contrast vs Y in the band",
        xlabel="Y (mm)", ylabel="contrast",
    )
    if rows:
        fig.circles(ys, cs)
        fig.error_bars(ys, cs, es)
    s = result.summary
    if rows and math.isfinite(s.y0_mm) and math.isfinite(s.profile_width_mm):
        xs = np.linspace(xlim[0], xlim[1], 200)
        curve = s.profile_baseline + (s.contrast_max - s.profile_baseline) * np.exp(
            -0.5 * ((xs - s.y0_mm) / s.profile_width_mm) ** 2
        )
        fig.polyline(xs, curve, color="#2ca02c")
    fig.save(path)


def cmd_analyze(args) -> int:
    cfg = load_config(args.config, _parse_overrides(args.set))
    hits = hg.read_hits(args.hits)
    frame = cfg.emulsion_frame()
    analysis_cfg = cfg.analysis_config(threads=args.threads)
    result = an.analyze_exposure(hits, frame, analysis_cfg, energy_kev=cfg["beam.energy_kev"])

    os.makedirs(args.out_dir, exist_ok=True)
    an.write_view_table(result.views, os.path.join(args.out_dir, "views.csv"))
    an.write_summary(result.summary, os.path.join(args.out_dir, "summary.txt"))
    cfg.write(os.path.join(args.out_dir, "effective_config.txt"))
    if args.plots:
        _plot_scatter(result, cfg, os.path.join(args.out_dir, "scatter.svg"))
        _plot_histograms(
            result, cfg,
            os.path.join(args.out_dir, "profile.svg"),
            os.path.join(args.out_dir, "period_hist.svg"),
        )
        _plot_heatmap(result, cfg, os.path.join(args.out_dir, "heatmap.svg"))
        _plot_profile(result, cfg, os.path.join(args.out_dir, "contrast_vs_y.svg"))

    s = result.summary
    if s.periodicity_found:
        sys.stdout.write(
            f"d3 = {s.d3_um:.4f} +- {s.d3_stat_um:.4f} (stat) +- {s.d3_syst_um:.4f} (syst) um\n"
        )
        if math.isfinite(s.contrast_max):
            sys.stdout.write(
                f"contrast_max = {s.contrast_max:.4f} +- {s.contrast_max_err:.4f} "
                f"at Y0 = {s.y0_mm:.3f} +- {s.y0_err_mm:.3f} mm "
                f"(L2 = {s.l2_peak_mm:.3f} mm)\n"
            )
        if s.note:
            sys.stdout.write(f"note: {s.note}\n")
    else:
        sys.stdout.write(f"no consistent periodicity found: {s.note}\n")
    sys.stdout.write(
        f"views = {s.n_views}, analyzed = {s.n_views_analyzed}, selected = {s.n_views_selected}\n"
    )
    return EXIT_OK


def _read_curve(path) -> list[tuple[float, float]] | None:
    if not path:
        return None
    return [(p.energy_kev, p.normalized) for p in ws.read_energy_scan_csv(path)]


def cmd_compare(args) -> int:
    if len(args.summaries) < 2:
        sys.stderr.write("insufficient data: need at least two exposure summaries\n")
        return EXIT_USAGE
    summaries = [an.read_summary(p) for p in args.summaries]
    comparison = an.summarize(
        summaries, _read_curve(args.quantum_curve), _read_curve(args.classical_curve)
    )
    lines = [
        "# contrast vs energy",
        f"reference_energy_kev = {comparison.reference_energy_kev:g}",
        f"verdict = {comparison.verdict}",
        "energy_kev,contrast,contrast_err,normalized,normalized_err,"
        "quantum_model,classical_model",
    ]
    for r in comparison.rows:
        lines.append(
            f"{r.energy_kev:g},{r.contrast:.6g},{r.contrast_err:.6g},"
            f"{r.normalized:.6g},{r.normalized_err:.6g},"
            f"{r.quantum_model:.6g},{r.classical_model:.6g}"
        )
    text = "\n".join(lines) + "\n"
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    sys.stdout.write(text)

    stem, _ = os.path.splitext(args.out)
    if comparison.rows:
        es = [r.energy_kev for r in comparison.rows]
        fig = SvgFigure(
            xlim=(min(es) - 0.5, max(es) + 0.5),
            ylim=(0.0, 1.2),
            title="normalized contrast vs energy",
            xlabel="energy (keV)",
            ylabel="C / C(resonance)",
        )
        fig.circles(es, [r.normalized for r in comparison.rows])
        fig.error_bars(es, [r.normalized for r in comparison.rows],
                       [r.normalized_err for r in comparison.rows])
        q = [(r.energy_kev, r.quantum_model) for r in comparison.rows
             if math.isfinite(r.quantum_model)]
        c = [(r.energy_kev, r.classical_model) for r in comparison.rows
             if math.isfinite(r.classical_model)]
        if q:
            q.sort()
            fig.polyline([p[0] for p in q], [p[1] for p in q], color="#2ca02c")
        if c:
            c.sort()
            fig.polyline([p[0] for p in c], [p[1] for p in c], color="#7f7f7f", dash="6,4")
        fig.save(stem + ".svg")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        handler = {
            "design": cmd_design,
            "simulate": cmd_simulate,
            "generate": cmd_generate,
            "analyze": cmd_analyze,
            "compare": cmd_compare,
        }[args.command]
        return handler(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (InputError, DomainError, ConfigurationError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_INPUT
    except NumericalError as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERICAL


def entrypoint() -> None:
    sys.exit(main())
