"""
Tests for the mallows-avoid command line.
"""

import json
import math
import os
import shutil
import tempfile
import unittest
from unittest import mock

from mallows_avoid.__main__ import main
from mallows_avoid.domains.core import identity
from mallows_avoid.domains.oracle import SuiteResult, ValidationReport
from mallows_avoid.domains.theory import LOG4, partition_limit
from mallows_avoid.utils.io import read_csv, read_json, read_permutation


class CliTestCase(unittest.TestCase):
    """Shared temp directory and thread cap."""

    def setUp(self):
        """Set up test environment."""
        self.temp_dir = tempfile.mkdtemp()
        self.env = mock.patch.dict(os.environ, {"MALLOWS_AVOID_THREADS": "1"})
        self.env.start()
        os.environ.pop("MALLOWS_AVOID_CONFIG", None)

    def tearDown(self):
        """Clean up test environment."""
        self.env.stop()
        shutil.rmtree(self.temp_dir)

    def path(self, *parts):
        return os.path.join(self.temp_dir, *parts)

    def settings_file(self, settings):
        path = self.path("settings.json")
        with open(path, "w") as f:
            json.dump({"settings": settings}, f)
        return path


class TestSample(CliTestCase):
    """Tests for the sample subcommand."""

    def sample(self, out, *extra):
        return main(
            ["sample", "--pattern", "321", "--n", "12", "--beta", "2", "--steps", "5000",
             "--seed", "7", "--out", out, *extra]
        )

    def test_zero_steps_writes_identity(self):
        """Test the outputs of a run without steps."""
        out = self.path("zero")
        code = main(
            ["sample", "--pattern", "231", "--n", "5", "--beta", "1", "--steps", "0",
             "--seed", "0", "--out", out]
        )
        self.assertEqual(code, 0)
        self.assertEqual(read_permutation(os.path.join(out, "permutation.csv")), identity(5))
        meta = read_json(os.path.join(out, "metadata.json"))
        self.assertEqual(meta["command"], "sample")
        self.assertEqual(meta["final_inv"], 0)
        self.assertEqual(meta["init"], "minimal")
        self.assertIn("numpy", meta["versions"]["dependencies"])
        self.assertEqual(meta["outputs"], ["permutation.csv", "metadata.json"])

    def test_replay_from_metadata(self):
        """Test that a metadata record reproduces its run byte for byte."""
        first = self.path("first")
        self.assertEqual(self.sample(first), 0)
        second = self.path("second")
        code = main(["--config", os.path.join(first, "metadata.json"), "sample", "--out", second])
        self.assertEqual(code, 0)
        with open(os.path.join(first, "permutation.csv")) as a, open(os.path.join(second, "permutation.csv")) as b:
            self.assertEqual(a.read(), b.read())

    def test_streams(self):
        """Test thinned states and the coupling table."""
        out = self.path("streams")
        code = self.sample(out, "--thin", "1000", "--coupling-check", "--checkpoints", "4")
        self.assertEqual(code, 0)
        thinned = read_csv(os.path.join(out, "thinned.csv"))
        self.assertEqual([row["step"] for row in thinned], ["1000", "2000", "3000", "4000", "5000"])
        coupling = read_csv(os.path.join(out, "coupling.csv"))
        self.assertEqual(len(coupling), 5)
        meta = read_json(os.path.join(out, "metadata.json"))
        self.assertIn("coupling", meta)
        self.assertIn("thinned.csv", meta["outputs"])

    def test_usage_errors(self):
        """Test invalid and missing values."""
        out = self.path("bad")
        self.assertEqual(
            main(["sample", "--pattern", "231", "--n", "0", "--beta", "1", "--steps", "1",
                  "--seed", "0", "--out", out]),
            2,
        )
        self.assertEqual(
            main(["sample", "--pattern", "231", "--n", "5", "--beta", "1", "--steps", "1", "--seed", "0"]),
            2,
        )
        with self.assertRaises(SystemExit) as ctx:
            main(["sample", "--pattern", "111"])
        self.assertEqual(ctx.exception.code, 2)

    def test_io_errors(self):
        """Test an output path that is a file and a missing overlay."""
        blocker = self.path("file")
        with open(blocker, "w") as f:
            f.write("x")
        self.assertEqual(self.sample(blocker), 3)
        code = main(["--config", self.path("missing.json"), "sample", "--out", self.path("o")])
        self.assertEqual(code, 3)


class TestLimit(CliTestCase):
    """Tests for the limit subcommand."""

    def test_231(self):
        """Test curve, weights and the x* summary."""
        out = self.path("l231")
        self.assertEqual(main(["limit", "--pattern", "231", "--beta", "3", "--grid", "50", "--out", out]), 0)
        curve = read_csv(os.path.join(out, "curve.csv"))
        self.assertEqual(len(curve), 51)
        self.assertAlmostEqual(float(curve[-1]["f"]), 1.0, places=9)
        weights = read_csv(os.path.join(out, "weights.csv"))
        self.assertEqual(list(weights[0]), ["x", "curve_weight", "antidiagonal_weight"])
        summary = read_json(os.path.join(out, "summary.json"))
        x_star = math.log((1.0 + math.e**3) / 2.0) / 3.0
        self.assertAlmostEqual(summary["x_star"], x_star, places=12)
        self.assertAlmostEqual(summary["antidiagonal_mass_closed_form"], 2.0 * x_star - 1.0, places=12)
        masses = [c["mass"] for c in summary["components"]]
        self.assertAlmostEqual(sum(masses), 1.0, places=6)
        self.assertAlmostEqual(masses[1], 2.0 * x_star - 1.0, places=6)

    def test_321(self):
        """Test the logistic densities and component masses."""
        out = self.path("l321")
        self.assertEqual(main(["limit", "--pattern", "321", "--beta", "2", "--grid", "20", "--out", out]), 0)
        for row in read_csv(os.path.join(out, "measure.csv")):
            self.assertAlmostEqual(float(row["rho1"]) + float(row["rho2"]), 1.0, places=12)
        summary = read_json(os.path.join(out, "summary.json"))
        for component in summary["components"]:
            self.assertAlmostEqual(component["mass"], 0.5, places=6)
        self.assertFalse(os.path.exists(os.path.join(out, "weights.csv")))

    def test_flipped_pattern(self):
        """Test that 132 reports the 231 curve at -beta."""
        out = self.path("l132")
        self.assertEqual(main(["limit", "--pattern", "132", "--beta", "2", "--grid", "10", "--out", out]), 0)
        summary = read_json(os.path.join(out, "summary.json"))
        self.assertEqual(summary["canonical_pattern"], "231")
        self.assertEqual(summary["effective_beta"], -2.0)
        self.assertEqual(summary["antidiagonal_mass_closed_form"], 0.0)

    def test_minimizer_action(self):
        """Test that the minimizer action matches the limit free energy."""
        for pattern in ("231", "321"):
            out = self.path(f"act{pattern}")
            self.assertEqual(main(["limit", "--pattern", pattern, "--beta", "2", "--grid", "10", "--out", out]), 0)
            summary = read_json(os.path.join(out, "summary.json"))
            self.assertAlmostEqual(
                summary["minimizer_action"], LOG4 - summary["limit_log_partition"], delta=1e-6
            )

    def test_limit_grid_setting(self):
        """Test that theory.limit_grid sets the minimizer resolution."""
        config = self.settings_file({"theory": {"limit_grid": 1}})
        out = self.path("coarse")
        code = main(["--config", config, "limit", "--pattern", "231", "--beta", "2", "--grid", "10", "--out", out])
        self.assertEqual(code, 0)
        summary = read_json(os.path.join(out, "summary.json"))
        # a single cell holds only the zero excursion
        self.assertAlmostEqual(summary["minimizer_action"], 0.0, places=12)
        self.assertEqual(summary["settings"]["theory"]["limit_grid"], 1)


class TestPartition(CliTestCase):
    """Tests for the partition subcommand."""

    def test_table_and_exact(self):
        """Test the table at beta = 0 and the exact polynomial."""
        out = self.path("part")
        code = main(["partition", "--pattern", "231", "--beta", "0", "--n-list", "3", "5", "--exact", "--out", out])
        self.assertEqual(code, 0)
        rows = read_csv(os.path.join(out, "partition.csv"))
        self.assertEqual([row["n"] for row in rows], ["3", "5"])
        self.assertEqual(float(rows[0]["limit"]), LOG4)
        self.assertAlmostEqual(float(rows[0]["log_z_over_n"]), math.log(5.0) / 3.0, places=12)
        poly = read_csv(os.path.join(out, "poly_n5.csv"))
        self.assertEqual(sum(int(row["coeff"]) for row in poly), 42)
        meta = read_json(os.path.join(out, "metadata.json"))
        self.assertEqual(meta["exact_sizes"], [3, 5])

    def test_n_max(self):
        """Test the n_max range."""
        out = self.path("range")
        self.assertEqual(main(["partition", "--pattern", "321", "--beta", "1", "--n-max", "4", "--out", out]), 0)
        self.assertEqual(len(read_csv(os.path.join(out, "partition.csv"))), 4)

    def test_quadrature_settings(self):
        """Test that the limit column honours theory.quad_tol and theory.max_subdivisions."""
        config = self.settings_file({"theory": {"quad_tol": 1e-6, "max_subdivisions": 1}})
        out = self.path("capped")
        code = main(["--config", config, "partition", "--pattern", "231", "--beta", "3", "--n-list", "2", "--out", out])
        self.assertEqual(code, 0)
        limit = float(read_csv(os.path.join(out, "partition.csv"))[0]["limit"])
        self.assertAlmostEqual(limit, partition_limit("231", 3.0, 1e-6, 1), places=12)
        self.assertNotAlmostEqual(limit, partition_limit("231", 3.0), places=6)

    def test_requires_sizes(self):
        """Test that a size list is mandatory."""
        self.assertEqual(main(["partition", "--pattern", "231", "--beta", "1", "--out", self.path("p")]), 2)


class TestCompare(CliTestCase):
    """Tests for the compare subcommand."""

    def test_identity(self):
        """Test distances for the identity, which sits on the diagonal."""
        source = self.path("p.txt")
        with open(source, "w") as f:
            f.write(identity(20).to_text() + "\n")
        out = self.path("cmp")
        code = main(["compare", "--input", source, "--pattern", "231", "--beta", "0", "--grid", "20", "--out", out])
        self.assertEqual(code, 0)
        result = read_json(os.path.join(out, "compare.json"))
        self.assertEqual(result["inversions"], 0)
        self.assertEqual(result["permuton_variant"], "antidiag")
        self.assertAlmostEqual(result["excursion_distance"], 1.0 / 40.0)
        self.assertGreaterEqual(result["permuton_distance"], 0.0)
        self.assertGreaterEqual(result["rlm_curve_distance"], 0.0)
        self.assertLessEqual(result["rlm_curve_distance"], 1.0)

    def test_321_pair(self):
        """Test the pair distance for the 321 family."""
        source = self.path("p.txt")
        with open(source, "w") as f:
            f.write("2 1 4 3\n")
        out = self.path("cmp321")
        code = main(["compare", "--input", source, "--pattern", "321", "--beta", "1", "--out", out])
        self.assertEqual(code, 0)
        result = read_json(os.path.join(out, "compare.json"))
        self.assertIn("pair_distance", result)
        self.assertEqual(result["permuton_variant"], "diag")

    def test_rejects_non_avoider(self):
        """Test that an input containing the pattern is a usage error."""
        source = self.path("bad.txt")
        with open(source, "w") as f:
            f.write("2 3 1\n")
        code = main(["compare", "--input", source, "--pattern", "231", "--beta", "1", "--out", self.path("x")])
        self.assertEqual(code, 2)


class TestValidate(CliTestCase):
    """Tests for the validate subcommand."""

    def test_passes(self):
        """Test a small passing run with a report file."""
        report_path = self.path("reports", "report.json")
        self.assertEqual(main(["validate", "--n-max", "3", "--ball-n", "0", "--out", report_path]), 0)
        entries = read_json(report_path)
        self.assertTrue(all(entry["failures"] == 0 for entry in entries))

    def test_report_directory(self):
        """Test that a directory receives validation_report.json."""
        out = self.path("vdir")
        self.assertEqual(main(["validate", "--n-max", "2", "--ball-n", "0", "--out", out]), 0)
        self.assertTrue(os.path.exists(os.path.join(out, "validation_report.json")))

    def test_failure_exit_code(self):
        """Test exit code 1 when a suite fails."""
        failing = SuiteResult("delta_rule", 2, cases=3, failures=1, first_counterexample="d=UUDD")
        report = ValidationReport(results=[failing])
        with mock.patch("mallows_avoid.cli.commands.validate_all", return_value=report):
            self.assertEqual(main(["validate", "--n-max", "2"]), 1)

    def test_settings_defaults(self):
        """Test that oracle.n_max and permuton.tol_mass reach the suite."""
        config = self.settings_file({"oracle": {"n_max": 2}, "permuton": {"tol_mass": 1e-6}})
        report = ValidationReport(results=[SuiteResult("catalan_counts", 1, cases=1)])
        with mock.patch("mallows_avoid.cli.commands.validate_all", return_value=report) as run:
            self.assertEqual(main(["--config", config, "validate", "--ball-n", "0"]), 0)
            self.assertEqual(run.call_args.kwargs["n_max"], 2)
            self.assertEqual(run.call_args.kwargs["tol_mass"], 1e-6)
            self.assertEqual(main(["--config", config, "validate", "--n-max", "3", "--ball-n", "0"]), 0)
            self.assertEqual(run.call_args.kwargs["n_max"], 3)

    def test_n_max_from_settings(self):
        """Test a real run sized by oracle.n_max."""
        config = self.settings_file({"oracle": {"n_max": 2}})
        report_path = self.path("small.json")
        self.assertEqual(main(["--config", config, "validate", "--ball-n", "0", "--out", report_path]), 0)
        sizes = {entry["n"] for entry in read_json(report_path) if entry["suite"] == "delta_rule"}
        self.assertEqual(sizes, {1, 2})


if __name__ == "__main__":
    unittest.main()
