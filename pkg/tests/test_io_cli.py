import os
import subprocess
import sys

import numpy as np
import pytest

from passlqr import io as pio
from passlqr.certify import PassivityMode
from passlqr.cli import main
from passlqr.errors import PlantFormatError
from passlqr.pipeline import PipelineOptions, run_pipeline

PLANT_TEXT = """# passlqr plant
name = coupled_two_state
mode = nonstrict
A = [[-2, -1], [-1, -3]]
B_u = [[1], [2]]
B_d = [[2], [1]]
C = [[0, 1]]
D = [[0]]
Q = [[1, 0], [0, 1]]
R = [[2]]
"""


@pytest.fixture()
def plant_file(tmp_path):
    path = tmp_path / "plant.txt"
    path.write_text(PLANT_TEXT)
    return str(path)


@pytest.fixture()
def easy_plant_file(tmp_path, easy_plant):
    path = tmp_path / "easy.txt"
    pio.save_plant(str(path), easy_plant, PassivityMode.nonstrict())
    return str(path)


class TestPlantFormat:
    def test_round_trip_is_identity(self, demo_plant, nonstrict):
        text = pio.plant_to_text(demo_plant, nonstrict)
        plant, mode = pio.plant_from_text(text)
        assert pio.plant_to_text(plant, mode) == text
        for f in ("A", "B_u", "B_d", "C", "D", "Q", "R"):
            assert np.array_equal(getattr(plant, f), getattr(demo_plant, f))

    def test_seventeen_digit_fidelity(self, nonstrict):
        from passlqr.plant import LtiPlant
        value = 0.1 + 0.2    # not representable in short decimal
        plant = LtiPlant(A=[[-value]], B_u=[[1.0]], B_d=[[1.0]], C=[[1.0]],
                         D=[[0.0]], Q=[[np.pi]], R=[[1.0 / 3.0]])
        text = pio.plant_to_text(plant, nonstrict)
        again, _ = pio.plant_from_text(text)
        assert again.A[0, 0] == plant.A[0, 0]
        assert again.Q[0, 0] == plant.Q[0, 0]
        assert again.R[0, 0] == plant.R[0, 0]

    def test_ragged_matrix_rejected(self):
        with pytest.raises(PlantFormatError):
            pio.plant_from_text(PLANT_TEXT.replace("[[-2, -1], [-1, -3]]",
                                                   "[[-2, -1], [-1]]"))

    def test_missing_field(self):
        bad = "\n".join(ln for ln in PLANT_TEXT.splitlines() if not ln.startswith("R"))
        with pytest.raises(PlantFormatError, match="missing plant fields"):
            pio.plant_from_text(bad)

    def test_line_number_in_error(self):
        bad = PLANT_TEXT.replace("R = [[2]]", "R = [[2oops]]")
        with pytest.raises(PlantFormatError, match="line"):
            pio.plant_from_text(bad)

    def test_indefinite_q_rejected(self):
        bad = PLANT_TEXT.replace("Q = [[1, 0], [0, 1]]", "Q = [[-1, 0], [0, 1]]")
        with pytest.raises(PlantFormatError, match="semidefinite"):
            pio.plant_from_text(bad)


class TestArtifactRoundTrips:
    @pytest.fixture(scope="class")
    def artifacts(self, demo_plant, nonstrict, tmp_path_factory):
        out = tmp_path_factory.mktemp("run")
        options = PipelineOptions(edge=0.4, search_box=np.array([[-4.0, 0.0], [-2.0, 2.0]]),
                                  seed=0)
        ledger, artifacts = run_pipeline(demo_plant, nonstrict, options,
                                         out_dir=str(out), plant_file="plant.txt")
        return out, ledger, artifacts

    def test_atlas_round_trip(self, artifacts, nonstrict):
        out, _, arts = artifacts
        text = (out / "atlas.csv").read_text()
        region, mode = pio.region_from_text(text)
        assert pio.region_to_text(region, mode) == text
        assert region.coords == arts["region"].coords
        for a, b in zip(region.cubes, arts["region"].cubes):
            assert np.array_equal(a.certificate.P, b.certificate.P)

    def test_polytope_round_trip(self, artifacts):
        out, _, arts = artifacts
        text = (out / "polytope.txt").read_text()
        poly = pio.polytope_from_text(text)
        assert pio.polytope_to_text(poly) == text
        assert np.array_equal(poly.G, arts["polytope"].G)
        assert np.array_equal(poly.h, arts["polytope"].h)

    def test_trajectory_round_trip(self, artifacts):
        out, _, arts = artifacts
        text = (out / "trajectory.csv").read_text()
        traj = pio.trajectory_from_text(text)
        assert pio.trajectory_to_text(traj, 1, 2) == text
        assert traj.termination == arts["trajectory"].termination
        assert np.array_equal(traj.terminal_gain, arts["trajectory"].terminal_gain)
        assert len(traj.samples) == len(arts["trajectory"].samples)

    def test_ledger_references_exist(self, artifacts):
        out, ledger, _ = artifacts
        entries = pio.load_ledger(str(out / "ledger.txt"))
        assert entries["run_hash"] == ledger.run_hash
        for key in ("atlas_file", "polytope_file", "trajectory_file"):
            assert (out / entries[key]).exists()

    def test_cube_count_recorded(self, artifacts):
        _, ledger, arts = artifacts
        assert ledger.n_cubes == len(arts["region"].cubes)
        assert ledger.f_hat >= ledger.f_star


class TestReproducibility:
    def test_identical_hash_across_runs_and_workers(self, demo_plant, nonstrict):
        box = np.array([[-1.6, 0.0], [-0.4, 1.2]])
        runs = []
        for workers in (1, 2, 1):
            options = PipelineOptions(edge=0.4, search_box=box, seed=0, workers=workers)
            ledger, _ = run_pipeline(demo_plant, nonstrict, options)
            runs.append(ledger)
        assert runs[0].run_hash == runs[1].run_hash == runs[2].run_hash
        assert runs[0].config_hash == runs[1].config_hash

    def test_seed_changes_hash(self, demo_plant, nonstrict):
        box = np.array([[-1.6, 0.0], [-0.4, 1.2]])
        a, _ = run_pipeline(demo_plant, nonstrict, PipelineOptions(edge=0.4, search_box=box, seed=0))
        b, _ = run_pipeline(demo_plant, nonstrict, PipelineOptions(edge=0.4, search_box=box, seed=1))
        assert a.config_hash != b.config_hash


class TestCli:
    def test_check_pass(self, plant_file, capsys):
        assert main(["check", "--plant", plant_file, "--gain", "[[-0.5, 0]]"]) == 0
        assert "PASS" in capsys.readouterr().out

    def test_check_fail(self, plant_file, capsys):
        assert main(["check", "--plant", plant_file, "--gain", "[[0.5, 0]]"]) == 1
        assert "FAIL" in capsys.readouterr().out

    def test_check_optimal_gain_fails(self, plant_file, capsys):
        # the unconstrained optimum sits outside the passivating set
        assert main(["check", "--plant", plant_file, "--gain", "[[0.048, 0.143]]"]) == 1

    def test_malformed_gain_exit_2(self, plant_file):
        assert main(["check", "--plant", plant_file, "--gain", "[[1, 2], [3]]"]) == 2

    def test_malformed_plant_exit_2(self, tmp_path):
        bad = tmp_path / "bad.txt"
        bad.write_text(PLANT_TEXT.replace("[[1], [2]]", "[[1], [2, 3]]"))
        assert main(["check", "--plant", str(bad), "--gain", "[[0, 0]]"]) == 2

    def test_missing_file_exit_2(self):
        assert main(["check", "--plant", "/does/not/exist", "--gain", "[[0, 0]]"]) == 2

    def test_module_entry_point(self, plant_file):
        proc = subprocess.run([sys.executable, "-m", "passlqr", "check",
                               "--plant", plant_file, "--gain", "[[-0.5, 0]]"],
                              capture_output=True, text=True)
        assert proc.returncode == 0
        assert "PASS" in proc.stdout

    def test_find_gain(self, plant_file, capsys):
        assert main(["find-gain", "--plant", plant_file]) == 0
        assert "K =" in capsys.readouterr().out

    def test_stage_chain(self, plant_file, tmp_path, capsys):
        out = str(tmp_path / "stages")
        assert main(["explore", "--plant", plant_file, "--seed-gain", "[[-0.8, 0.4]]",
                     "--edge", "0.4", "--box=-1.6..0,-0.4..1.2", "--out", out]) == 0
        assert main(["approx", "--plant", plant_file,
                     "--atlas", os.path.join(out, "atlas.csv"), "--out", out]) == 0
        assert main(["optimize", "--plant", plant_file,
                     "--polytope", os.path.join(out, "polytope.txt"), "--out", out]) == 0
        assert os.path.exists(os.path.join(out, "trajectory.csv"))
        assert "converged" in capsys.readouterr().out

    def test_pipeline_short_circuit(self, easy_plant_file, tmp_path, capsys):
        out = str(tmp_path / "easy")
        assert main(["pipeline", "--plant", easy_plant_file, "--out", out]) == 0
        assert "short-circuited" in capsys.readouterr().out
        entries = pio.load_ledger(os.path.join(out, "ledger.txt"))
        assert entries["already_passive"] == "true"
        assert float(entries["f_hat"]) == pytest.approx(float(entries["f_star"]))

    def test_explore_box_must_cover_seed(self, plant_file, tmp_path):
        code = main(["explore", "--plant", plant_file, "--seed-gain", "[[-0.8, 0.4]]",
                     "--edge", "0.4", "--box=-4..-3,-2..2", "--out", str(tmp_path)])
        assert code == 2

    def test_explore_rejected_seed_cube_aborts(self, plant_file, tmp_path, capsys):
        # seed certifies but its cube crosses the region boundary
        code = main(["explore", "--plant", plant_file, "--seed-gain", "[[-0.2, -1.58]]",
                     "--edge", "0.4", "--box=-4..0,-2..2", "--out", str(tmp_path)])
        assert code == 1
        assert "vertex reports" in capsys.readouterr().err


class TestPlot:
    @pytest.fixture(scope="class")
    def finished_run(self, demo_plant, nonstrict, tmp_path_factory):
        out = tmp_path_factory.mktemp("plotrun")
        options = PipelineOptions(edge=0.4, search_box=np.array([[-1.6, 0.0], [-0.4, 1.2]]),
                                  seed=0)
        run_pipeline(demo_plant, nonstrict, options, out_dir=str(out), plant_file="plant.txt")
        pio.save_plant(str(out / "plant.txt"), demo_plant, nonstrict)
        return out

    def test_plot_without_raster(self, finished_run, capsys):
        code = main(["plot", "--ledger", str(finished_run / "ledger.txt"), "--no-raster",
                     "--raster", "41"])
        assert code == 0
        svg = finished_run / "figure.svg"
        assert svg.exists()
        head = svg.read_text()[:400]
        assert "<svg" in head and 'version="1.1"' in head

    def test_plot_with_raster(self, finished_run, tmp_path):
        out = str(tmp_path / "fig")
        code = main(["plot", "--ledger", str(finished_run / "ledger.txt"),
                     "--raster", "31", "--passivity-raster", "13",
                     "--window=-1.4..0.2,-0.6..1.4", "--out", out])
        assert code == 0
        assert os.path.exists(os.path.join(out, "figure.svg"))

    def test_dimension_unsupported(self, easy_plant, tmp_path):
        # 2x2 gain: four parameters cannot be drawn in the plane
        out = tmp_path / "easyplot"
        pio.save_plant(str(tmp_path / "easy.txt"), easy_plant, PassivityMode.nonstrict())
        ledger, _ = run_pipeline(easy_plant, PassivityMode.nonstrict(),
                                 PipelineOptions(seed=0), out_dir=str(out),
                                 plant_file=str(tmp_path / "easy.txt"))
        code = main(["plot", "--ledger", str(out / "ledger.txt")])
        assert code == 2
