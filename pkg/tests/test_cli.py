import csv

import numpy as np
import pytest

from hingetrack import cli
from hingetrack.scenario import Scenario, save_scenario


@pytest.fixture
def short_scenario(tmp_path):
    path = tmp_path / "scenario.yaml"
    save_scenario(Scenario(movement="mo-M", duration=1.0, seed=21), path)
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestCsvIo:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "data.csv"
        cols = [np.arange(5.0), np.linspace(-1, 1, 5)]
        cli.write_csv(path, ["a", "b"], cols)
        back = cli.read_csv(path, ["a", "b"])
        assert np.allclose(back[:, 0], cols[0])
        assert np.allclose(back[:, 1], cols[1])

    def test_full_precision(self, tmp_path):
        path = tmp_path / "pi.csv"
        cli.write_csv(path, ["x"], [np.array([np.pi])])
        back = cli.read_csv(path, ["x"])
        assert back[0, 0] == np.pi

    def test_wrong_header_raises(self, tmp_path):
        path = tmp_path / "data.csv"
        cli.write_csv(path, ["a"], [np.zeros(2)])
        with pytest.raises(cli.CliError, match="header"):
            cli.read_csv(path, ["b"])

    def test_corrupt_row_names_location(self, tmp_path):
        path = tmp_path / "data.csv"
        cli.write_csv(path, ["a", "b"], [np.zeros(4), np.ones(4)])
        lines = path.read_text().splitlines()
        lines[3] = "only_one_field"
        path.write_text("\n".join(lines) + "\n")
        # Rows are reported as 1-based file line numbers (header is line 1).
        with pytest.raises(cli.CliError, match="row 4.*last valid row is 3"):
            cli.read_csv(path, ["a", "b"])


class TestVerbs:
    def test_simulate_outputs(self, short_scenario, tmp_path, capsys):
        out = tmp_path / "sim"
        rc = cli.main(["simulate", "--scenario", str(short_scenario),
                       "--out", str(out)])
        assert rc == cli.EXIT_OK
        for name in ("trajectory.csv", "measurements.csv", "scenario.yaml",
                     "rates.png"):
            assert (out / name).exists()
        rows = _rows(out / "trajectory.csv")
        assert rows[0] == cli.TRAJECTORY_HEADER
        assert len(rows) == 1 + 101  # header + duration/ts + 1 samples

    def test_simulate_seed_override_changes_motion(self, short_scenario, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        cli.main(["simulate", "--scenario", str(short_scenario),
                  "--out", str(out_a)])
        cli.main(["simulate", "--scenario", str(short_scenario),
                  "--out", str(out_b), "--seed", "99"])
        rows_a = _rows(out_a / "measurements.csv")
        rows_b = _rows(out_b / "measurements.csv")
        assert rows_a[-1] != rows_b[-1]

    def test_analyze_outputs(self, short_scenario, tmp_path):
        out = tmp_path / "ana"
        rc = cli.main(["analyze", "--scenario", str(short_scenario),
                       "--out", str(out)])
        assert rc == cli.EXIT_OK
        for name in ("projections.csv", "verdicts.csv", "projections.png"):
            assert (out / name).exists()
        rows = _rows(out / "verdicts.csv")
        assert rows[0] == cli.VERDICTS_HEADER
        # mo-M stays observable at every instant.
        assert all(r[-1] == "1" for r in rows[1:])

    @pytest.mark.slow
    def test_estimate_outputs(self, short_scenario, tmp_path):
        out = tmp_path / "est"
        rc = cli.main(["estimate", "--scenario", str(short_scenario),
                       "--out", str(out), "--mode", "m2"])
        assert rc == cli.EXIT_OK
        for name in ("estimates.csv", "errors.csv", "errors.png"):
            assert (out / name).exists()
        est = cli.read_csv(out / "estimates.csv", cli.ESTIMATES_HEADER)
        assert est.shape[0] == 101
        # Unit quaternions in every row.
        for base in (1, 5, 9):
            norms = np.linalg.norm(est[:, base:base + 4], axis=1)
            assert np.allclose(norms, 1.0, atol=1e-9)

    @pytest.mark.slow
    def test_estimate_reuses_existing_measurements(self, short_scenario, tmp_path):
        out = tmp_path / "est"
        cli.main(["simulate", "--scenario", str(short_scenario),
                  "--out", str(out)])
        mtime = (out / "measurements.csv").stat().st_mtime_ns
        rc = cli.main(["estimate", "--scenario", str(short_scenario),
                       "--out", str(out), "--mode", "m2"])
        assert rc == cli.EXIT_OK
        assert (out / "measurements.csv").stat().st_mtime_ns == mtime


class TestExitCodes:
    def test_missing_scenario_is_io_error(self, tmp_path, capsys):
        rc = cli.main(["simulate", "--scenario", str(tmp_path / "nope.yaml"),
                       "--out", str(tmp_path / "o")])
        assert rc == cli.EXIT_IO
        assert "error" in capsys.readouterr().err

    def test_unknown_verb_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["frobnicate"])
        assert exc.value.code == cli.EXIT_USAGE

    def test_bad_mode_is_usage_error(self, short_scenario, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["estimate", "--scenario", str(short_scenario),
                      "--out", str(tmp_path / "o"), "--mode", "m9"])
        assert exc.value.code == cli.EXIT_USAGE

    def test_bad_bool_is_usage_error(self, short_scenario, tmp_path):
        with pytest.raises(SystemExit) as exc:
            cli.main(["estimate", "--scenario", str(short_scenario),
                      "--out", str(tmp_path / "o"), "--rates-free", "maybe"])
        assert exc.value.code == cli.EXIT_USAGE

    def test_corrupt_measurements_is_io_error(self, short_scenario, tmp_path,
                                              capsys):
        out = tmp_path / "est"
        cli.main(["simulate", "--scenario", str(short_scenario),
                  "--out", str(out)])
        path = out / "measurements.csv"
        lines = path.read_text().splitlines()
        lines[5] = "bad,row"
        path.write_text("\n".join(lines) + "\n")
        rc = cli.main(["estimate", "--scenario", str(short_scenario),
                       "--out", str(out), "--mode", "m2"])
        assert rc == cli.EXIT_IO
        assert "row 6" in capsys.readouterr().err
