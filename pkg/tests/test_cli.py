import hashlib
import xml.etree.ElementTree as ET

import pytest

from talbotlau import analysis as an
from talbotlau.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def digest(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def kv(text):
    out = {}
    for line in text.strip().splitlines():
        if "=" in line:
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


SMALL_SIM = [
    "--set", "sim.num_points=8192",
    "--set", "sim.num_tilt_samples=8",
]

SMALL_FILM = [
    "--set", "emulsion.film_width_mm=1.48",
    "--set", "emulsion.film_height_mm=3.5",
    "--set", "exposure.target_grains_per_view=2500",
    "--set", "exposure.noise_density_per_1000um3=1.0",
    "--set", "analysis.min_views_for_scatter_fit=30",
]


class TestDesign:
    def test_paper_numbers(self, capsys, tmp_path):
        report = tmp_path / "design.txt"
        code, out, _ = run(
            capsys, "design", "--d1-um", "1.210", "--d2-um", "1.004",
            "--energy-kev", "14", "--coherence-ratio", "800",
            "--report", str(report),
        )
        assert code == 0
        values = kv(out)
        assert float(values["lambda_db_pm"]) == pytest.approx(10.30, abs=0.05)
        assert 117.8 <= float(values["L1_mm"]) <= 118.4
        assert 571.0 <= float(values["L2_mm"]) <= 581.0
        assert float(values["d3_um"]) == pytest.approx(5.90, abs=0.04)
        assert float(values["sigma_phi_urad"]) == pytest.approx(556.0, rel=0.05)
        assert report.read_text() == out

    def test_no_resonance_is_error(self, capsys):
        code, _, err = run(capsys, "design", "--d1-um", "1.0", "--d2-um", "1.0",
                           "--energy-kev", "14")
        assert code == 2
        assert "no magnifying resonance" in err

    def test_zero_energy_is_error(self, capsys):
        code, _, err = run(capsys, "design", "--d1-um", "1.2", "--d2-um", "1.0",
                           "--energy-kev", "0")
        assert code == 2
        assert "energy" in err

    def test_missing_flag_is_usage_error(self, capsys):
        code, _, err = run(capsys, "design", "--d1-um", "1.2")
        assert code == 1


class TestSimulate:
    def test_quantum_pattern_contrast_floor(self, capsys, tmp_path):
        out_file = tmp_path / "pattern.csv"
        code, out, _ = run(capsys, "simulate", "--model", "quantum",
                           *SMALL_SIM, "--out", str(out_file))
        assert code == 0
        contrast = float(out.split("contrast at d3 =")[1].split(",")[0])
        assert contrast > 0.3
        assert out_file.exists()
        assert (tmp_path / "pattern.config.txt").exists()

    def test_classical_files_identical_across_energies(self, capsys, tmp_path):
        files = []
        for e in ("8", "14"):
            out_file = tmp_path / f"cl{e}.csv"
            code, _, _ = run(capsys, "simulate", "--model", "classical",
                             *SMALL_SIM, "--set", f"beam.energy_kev={e}",
                             "--out", str(out_file))
            assert code == 0
            files.append(digest(out_file))
        assert files[0] == files[1]

    def test_z_scan_carpet(self, capsys, tmp_path):
        out_file = tmp_path / "carpet.csv"
        code, out, _ = run(
            capsys, "simulate", "--model", "quantum", *SMALL_SIM,
            "--set", "geometry.l1_mm=118.0038563354474",
            "--set", "geometry.l2_mm=575.1255910717922",
            "--z-scan", "571,579,9", "--out", str(out_file),
        )
        assert code == 0
        peak_z = float(out.split("at z =")[1].split("mm")[0])
        assert abs(peak_z - 575.13) <= 5.0
        header = out_file.read_text().splitlines()[0]
        assert header == "z_mm,x_um,intensity"

    def test_bad_z_scan_is_usage_error(self, capsys, tmp_path):
        code, _, err = run(capsys, "simulate", "--z-scan", "nope",
                           "--out", str(tmp_path / "x.csv"))
        assert code == 1

    def test_unresolved_grid_is_config_error(self, capsys, tmp_path):
        code, _, err = run(
            capsys, "simulate", "--set", "sim.spacing_nm=200", "--set", "sim.num_points=4096",
            "--out", str(tmp_path / "x.csv"),
        )
        assert code == 2
        assert "samples per grating period" in err


class TestGenerate:
    def test_same_seed_same_bytes(self, capsys, tmp_path):
        digests = []
        for name in ("a.csv", "b.csv"):
            out_file = tmp_path / name
            code, out, _ = run(capsys, "generate", *SMALL_FILM, "--seed", "5",
                               "--out", str(out_file))
            assert code == 0
            assert "signal =" in out and "noise =" in out
            digests.append(digest(out_file))
        assert digests[0] == digests[1]

    def test_different_seed_different_bytes(self, capsys, tmp_path):
        digests = []
        for seed in ("5", "6"):
            out_file = tmp_path / f"s{seed}.csv"
            code, _, _ = run(capsys, "generate", *SMALL_FILM, "--seed", seed,
                             "--out", str(out_file))
            assert code == 0
            digests.append(digest(out_file))
        assert digests[0] != digests[1]

    def test_carpet_kind_without_file_is_usage_error(self, capsys, tmp_path):
        code, _, err = run(capsys, "generate", "--set", "pattern.kind=carpet",
                           "--out", str(tmp_path / "x.csv"))
        assert code == 1
        assert "carpet" in err


@pytest.fixture(scope="module")
def generated_exposure(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli-exposure")
    hits = tmp / "hits.csv"
    code = main(["generate", *SMALL_FILM, "--seed", "5", "--out", str(hits)])
    assert code == 0
    return hits


class TestAnalyze:
    def test_full_pipeline_outputs(self, capsys, generated_exposure, tmp_path):
        out_dir = tmp_path / "out"
        code, out, _ = run(
            capsys, "analyze", "--hits", str(generated_exposure), *SMALL_FILM,
            "--out-dir", str(out_dir), "--plots",
        )
        assert code == 0
        summary = an.read_summary(out_dir / "summary.txt")
        assert summary.periodicity_found
        assert 5.85 <= summary.d3_um <= 5.95
        views_lines = (out_dir / "views.csv").read_text().splitlines()
        assert views_lines[0] == an.VIEW_TABLE_HEADER
        assert len(views_lines) > 30
        for name in ("scatter.svg", "profile.svg", "heatmap.svg", "contrast_vs_y.svg"):
            tree = ET.parse(out_dir / name)
            assert len(list(tree.getroot().iter())) > 5
        assert (out_dir / "effective_config.txt").exists()

    def test_noise_only_reports_no_periodicity(self, capsys, tmp_path):
        hits = tmp_path / "noise.csv"
        code, _, _ = run(
            capsys, "generate", *SMALL_FILM, "--set", "pattern.amplitude=0.0",
            "--set", "exposure.noise_density_per_1000um3=6.0",
            "--set", "exposure.target_grains_per_view=600",
            "--seed", "9", "--out", str(hits),
        )
        assert code == 0
        out_dir = tmp_path / "out"
        code, out, _ = run(capsys, "analyze", "--hits", str(hits), *SMALL_FILM,
                           "--out-dir", str(out_dir))
        assert code == 0
        assert "no consistent periodicity" in out
        summary = an.read_summary(out_dir / "summary.txt")
        assert not summary.periodicity_found

    def test_parse_error_exit_code(self, capsys, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("X_um,Y_um,Z_um\n1.0,2.0,3.0\n1.0,zap,3.0\n")
        code, _, err = run(capsys, "analyze", "--hits", str(bad),
                           "--out-dir", str(tmp_path / "o"))
        assert code == 2
        assert "line 3" in err

    def test_deterministic_outputs_and_threads(self, capsys, generated_exposure, tmp_path):
        digests = []
        for name, threads in (("o1", "1"), ("o2", "1"), ("o4", "4")):
            out_dir = tmp_path / name
            code, _, _ = run(
                capsys, "analyze", "--hits", str(generated_exposure), *SMALL_FILM,
                "--out-dir", str(out_dir), "--plots", "--threads", threads,
            )
            assert code == 0
            digests.append(
                tuple(
                    digest(out_dir / f)
                    for f in ("views.csv", "summary.txt", "scatter.svg", "heatmap.svg")
                )
            )
        assert digests[0] == digests[1] == digests[2]


class TestCompare:
    @staticmethod
    def _summary_file(tmp_path, name, e, c, err=0.006):
        s = an.ContrastSummary(
            energy_kev=e, periodicity_found=True, n_hits=1000, n_views=100,
            n_views_analyzed=90, n_views_selected=60, d3_um=5.85, d3_stat_um=0.001,
            d3_syst_um=0.047, alpha_rad=0.0, contrast_max=c, contrast_max_err=err,
            y0_mm=-8.4, y0_err_mm=0.1, l2_peak_mm=573.0, l2_peak_err_mm=0.07,
        )
        path = tmp_path / name
        an.write_summary(s, path)
        return path

    def test_paper_contrasts_quantum_verdict(self, capsys, tmp_path):
        paths = [
            self._summary_file(tmp_path, f"s{e}.txt", e, c)
            for e, c in ((14.0, 0.491), (11.0, 0.436), (9.0, 0.267), (8.0, 0.144))
        ]
        out = tmp_path / "table.txt"
        code, stdout, _ = run(capsys, "compare", "--summaries", *map(str, paths),
                              "--out", str(out))
        assert code == 0
        assert "verdict = quantum-compatible" in stdout
        assert (tmp_path / "table.svg").exists()
        tree = ET.parse(tmp_path / "table.svg")
        assert len(list(tree.getroot().iter())) > 5

    def test_equal_contrasts_classical_verdict(self, capsys, tmp_path):
        paths = [
            self._summary_file(tmp_path, "a.txt", 14.0, 0.30),
            self._summary_file(tmp_path, "b.txt", 8.0, 0.299),
        ]
        out = tmp_path / "table.txt"
        code, stdout, _ = run(capsys, "compare", "--summaries", *map(str, paths),
                              "--out", str(out))
        assert code == 0
        assert "verdict = classical-compatible" in stdout

    def test_single_summary_insufficient(self, capsys, tmp_path):
        path = self._summary_file(tmp_path, "only.txt", 14.0, 0.4)
        code, _, err = run(capsys, "compare", "--summaries", str(path),
                           "--out", str(tmp_path / "t.txt"))
        assert code != 0
        assert "insufficient" in err

    def test_model_curves_joined(self, capsys, tmp_path):
        from talbotlau import wavesim as ws

        paths = [
            self._summary_file(tmp_path, "a.txt", 14.0, 0.491),
            self._summary_file(tmp_path, "b.txt", 8.0, 0.144),
        ]
        qc = tmp_path / "q.csv"
        cc = tmp_path / "c.csv"
        ws.write_energy_scan_csv(
            [ws.EnergyScanPoint(14.0, 0.8, 575.1, 1.0, 1.0),
             ws.EnergyScanPoint(8.0, 0.4, 575.1, 0.5, 0.5)], qc)
        ws.write_energy_scan_csv(
            [ws.EnergyScanPoint(14.0, 0.8, 575.1, 1.0, 1.0),
             ws.EnergyScanPoint(8.0, 0.8, 575.1, 1.0, 1.0)], cc)
        out = tmp_path / "table.txt"
        code, stdout, _ = run(
            capsys, "compare", "--summaries", *map(str, paths),
            "--quantum-curve", str(qc), "--classical-curve", str(cc), "--out", str(out),
        )
        assert code == 0
        rows = [l for l in stdout.splitlines() if l.startswith("8,")]
        assert rows and ",0.5," in rows[0]
