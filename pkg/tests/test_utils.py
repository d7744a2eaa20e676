"""
Tests for quadrature, worker pools, file formats, schemas and version records.
"""

import math
import os
import shutil
import tempfile
import unittest
from unittest import mock

import numpy as np
from pydantic import ValidationError

from mallows_avoid.domains.core import Permutation
from mallows_avoid.utils.io import (
    CsvSink,
    format_value,
    read_csv,
    read_json,
    read_permutation,
    write_csv,
    write_json,
    write_permutation_csv,
)
from mallows_avoid.utils.quadrature import cumulative_simpson, integrate_adaptive_simpson
from mallows_avoid.utils.schema import validate_report, validate_sample_metadata
from mallows_avoid.utils.versions import collect_versions
from mallows_avoid.utils.workers import THREADS_ENV, map_in_pool, worker_count


def _square(x):
    return x * x


class TestQuadrature(unittest.TestCase):
    """Tests for adaptive Simpson integration."""

    def test_known_integrals(self):
        """Test a few closed forms."""
        value, error = integrate_adaptive_simpson(math.sin, 0.0, math.pi)
        self.assertAlmostEqual(value, 2.0, delta=1e-9)
        self.assertLess(error, 1e-8)
        value, _ = integrate_adaptive_simpson(math.exp, 0.0, 1.0)
        self.assertAlmostEqual(value, math.e - 1.0, delta=1e-9)

    def test_orientation(self):
        """Test empty and reversed intervals."""
        self.assertEqual(integrate_adaptive_simpson(math.cos, 1.0, 1.0), (0.0, 0.0))
        forward, _ = integrate_adaptive_simpson(math.cos, 0.0, 1.0)
        backward, _ = integrate_adaptive_simpson(math.cos, 1.0, 0.0)
        self.assertAlmostEqual(forward, -backward, places=12)

    def test_cumulative(self):
        """Test cumulative integrals of 2x."""
        xs = np.linspace(0.0, 1.0, 11)
        out = cumulative_simpson(lambda x: 2.0 * x, xs)
        np.testing.assert_allclose(out, xs**2, atol=1e-12)
        self.assertEqual(cumulative_simpson(math.sin, []).size, 0)
        with self.assertRaises(ValueError):
            cumulative_simpson(math.sin, [0.0, 1.0, 0.5])


class TestWorkers(unittest.TestCase):
    """Tests for worker sizing and fan-out."""

    def test_env_cap(self):
        """Test that the thread variable caps the worker count."""
        with mock.patch.dict(os.environ, {THREADS_ENV: "2"}):
            self.assertEqual(worker_count(8), 2)
            self.assertEqual(worker_count(1), 1)
        with mock.patch.dict(os.environ, {THREADS_ENV: "many"}):
            self.assertEqual(worker_count(3), 3)

    def test_default_is_positive(self):
        """Test the machine default."""
        with mock.patch.dict(os.environ, {}, clear=True):
            self.assertGreaterEqual(worker_count(), 1)

    def test_map_preserves_order(self):
        """Test that results come back in input order."""
        items = list(range(10))
        self.assertEqual(map_in_pool(_square, items, workers=1), [x * x for x in items])
        self.assertEqual(map_in_pool(_square, items, workers=2), [x * x for x in items])
        self.assertEqual(map_in_pool(_square, [], workers=2), [])


class TestFileFormats(unittest.TestCase):
    """Tests for CSV, JSON and permutation files."""

    def setUp(self):
        """Set up test environment."""
        self.temp_dir = tempfile.mkdtemp()

    def tearDown(self):
        """Clean up test environment."""
        shutil.rmtree(self.temp_dir)

    def path(self, name):
        return os.path.join(self.temp_dir, name)

    def test_format_value(self):
        """Test float, bool and numpy scalar formatting."""
        self.assertEqual(format_value(0.1), "0.10000000000000001")
        self.assertEqual(float(format_value(1.0 / 3.0)), 1.0 / 3.0)
        self.assertEqual(format_value(True), "true")
        self.assertEqual(format_value(np.int64(7)), "7")
        self.assertEqual(format_value(np.float64(0.5)), "0.5")
        self.assertEqual(format_value(2.0 / 3.0, digits=3), "0.667")

    def test_csv(self):
        """Test written CSV tables."""
        write_csv(self.path("t.csv"), ("x", "y"), [(1, 0.25), (2, 0.5)])
        with open(self.path("t.csv")) as f:
            self.assertEqual(f.read(), "x,y\n1,0.25\n2,0.5\n")
        self.assertEqual(read_csv(self.path("t.csv"))[1], {"x": "2", "y": "0.5"})

    def test_csv_sink_counts_rows(self):
        """Test the streaming sink."""
        with CsvSink(self.path("s.csv"), ("step",)) as sink:
            for step in range(5):
                sink.write((step,))
        self.assertEqual(sink.rows, 5)
        self.assertEqual(len(read_csv(self.path("s.csv"))), 5)

    def test_json(self):
        """Test sorted, indented JSON records."""
        write_json(self.path("m.json"), {"b": 1, "a": [1, 2]})
        self.assertEqual(read_json(self.path("m.json")), {"a": [1, 2], "b": 1})
        with open(self.path("bad.json"), "w") as f:
            f.write("{")
        with self.assertRaises(ValueError):
            read_json(self.path("bad.json"))

    def test_permutation_files(self):
        """Test permutation CSV and one-line text input."""
        p = Permutation((2, 4, 1, 3))
        write_permutation_csv(self.path("p.csv"), p)
        with open(self.path("p.csv")) as f:
            self.assertEqual(f.read(), "i,sigma_i\n1,2\n2,4\n3,1\n4,3\n")
        self.assertEqual(read_permutation(self.path("p.csv")), p)
        with open(self.path("p.txt"), "w") as f:
            f.write("2 4 1 3\n")
        self.assertEqual(read_permutation(self.path("p.txt")), p)

    def test_bad_permutation_file(self):
        """Test that non-permutations are rejected."""
        with open(self.path("bad.txt"), "w") as f:
            f.write("1 1 2\n")
        with self.assertRaises(ValueError):
            read_permutation(self.path("bad.txt"))
        with open(self.path("gap.csv"), "w") as f:
            f.write("i,sigma_i\n1,1\n3,2\n")
        with self.assertRaises(ValueError):
            read_permutation(self.path("gap.csv"))


class TestSchemas(unittest.TestCase):
    """Tests for metadata and report schemas."""

    def sample(self, **overrides):
        data = {
            "pattern": "231",
            "n": 4,
            "beta": 1.0,
            "steps": 10,
            "seed": 0,
            "thin": 0,
            "init": "minimal",
            "accept_rate": 0.5,
            "final_inv": 3,
            "wall_time": 0.01,
            "rng": "PCG64",
        }
        data.update(overrides)
        return data

    def test_sample_metadata(self):
        """Test that valid records pass and keep extra fields."""
        record = validate_sample_metadata(self.sample())
        self.assertEqual(record["command"], "sample")
        self.assertEqual(record["rng"], "PCG64")

    def test_sample_metadata_errors(self):
        """Test malformed records."""
        for bad in (self.sample(final_inv=7), self.sample(pattern="111"), self.sample(accept_rate=1.5)):
            with self.assertRaises(ValidationError):
                validate_sample_metadata(bad)

    def test_report(self):
        """Test validation report entries."""
        entries = [{"suite": "catalan_counts", "n": 3, "cases": 2, "failures": 0}]
        self.assertIsNone(validate_report(entries)[0]["first_counterexample"])
        with self.assertRaises(ValidationError):
            validate_report([{"suite": "x", "n": 1, "cases": 1, "failures": 2}])


class TestVersions(unittest.TestCase):
    """Tests for version records."""

    def test_collect_versions(self):
        """Test that the numerical stack is reported."""
        report = collect_versions()
        self.assertIn("numpy", report.dependencies)
        self.assertEqual(report.dependencies["numpy"], np.__version__)
        self.assertEqual(report.as_dict()["python_version"].count("."), 2)


if __name__ == "__main__":
    unittest.main()
