"""
Tests for the command-line front end: output blocks and exit codes.
"""

import io
import os
import sys
import tempfile
import unittest
from contextlib import redirect_stderr, redirect_stdout

# Add project root to path for imports
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from app.cli import main, parse_p
from app.services.qcqp import load_instance


def run(*argv) -> tuple[int, str, str]:
    out, err = io.StringIO(), io.StringIO()
    with redirect_stdout(out), redirect_stderr(err):
        code = main(list(argv))
    return code, out.getvalue(), err.getvalue()


def block(text: str) -> dict:
    pairs = {}
    for line in text.splitlines():
        if "=" in line and " " not in line:
            key, _, value = line.partition("=")
            pairs[key] = value
    return pairs


class TestCli(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "inst.json")

    def tearDown(self):
        self.tmp.cleanup()

    def test_parse_p(self):
        self.assertEqual(parse_p("12"), 12)
        self.assertIsInstance(parse_p("12"), int)
        self.assertEqual(parse_p("0.04"), 0.04)
        self.assertEqual(parse_p("1e-2"), 0.01)

    def test_gen_then_solve(self):
        code, out, _ = run("gen", "--n", "3", "--m", "2", "--density", "0.6", "--seed", "4", "--out", self.path)
        self.assertEqual(code, 0)
        self.assertEqual(block(out)["instance"], "3_2_4_60")
        self.assertEqual(load_instance(self.path).n, 3)

        code, out, _ = run("solve", self.path, "--time-limit", "120")
        result = block(out)
        self.assertEqual(code, 0)
        self.assertEqual(result["status"], "optimal")
        self.assertLessEqual(float(result["best_bound"]), float(result["value"]))
        self.assertEqual(len(result["x"].split(",")), 3)

    def test_bound(self):
        run("gen", "--n", "4", "--m", "3", "--seed", "2", "--out", self.path)
        code, out, _ = run("bound", self.path, "--p", "0", "--max-iter", "50")
        result = block(out)
        self.assertEqual(code, 0)
        self.assertEqual(result["working_set"], "0")
        self.assertEqual(result["p"], "0")

    def test_cuts_listing(self):
        code, out, _ = run("cuts")
        self.assertEqual(code, 0)
        lines = [line for line in out.splitlines() if line.startswith("t=")]
        self.assertEqual(len(lines), 12)
        self.assertIn("form=0", lines[0])

    def test_cuts_audit_report(self):
        code, out, _ = run("cuts", "--audit", "--boxes", "2", "--seed", "1")
        self.assertEqual(code, 0)
        lines = out.splitlines()
        self.assertEqual(lines[0].split("\t")[:5], ["kind", "indices", "t", "witness_violation", "redundancy_lp"])
        rows = [line.split("\t") for line in lines[1:49]]
        self.assertTrue(all(len(row) == len(rows[0]) for row in rows))
        triangles = [row for row in rows if row[0] == "triangle"]
        candidates = [row for row in rows if row[0] == "candidate"]
        self.assertEqual(len(triangles), 12)
        self.assertEqual(len(candidates), 36)
        self.assertEqual(sorted(int(row[2]) for row in triangles), list(range(1, 13)))
        for row in triangles:
            self.assertEqual(row[1], "0,1,2")
            self.assertGreater(float(row[3]), 0.0)
            self.assertGreater(float(row[4]), 1e-7)
        for row in candidates:
            self.assertEqual(row[3], "none")
            self.assertLessEqual(float(row[4]), 1e-7)
        self.assertIn("48 candidates: 12 cutting, 36 redundant", out)

    def test_bench_table(self):
        args = ("bench", "--count", "1", "--n-min", "3", "--n-max", "3", "--m-ratio", "0.5",
                "--density", "0.6", "--seed", "2", "--time-limit", "120", "--p", "0.5")
        code, out, _ = run(*args)
        self.assertEqual(code, 0)
        lines = out.splitlines()
        self.assertEqual(lines[0], "instance\tgap_on\tgap_off\tnodes_on\tnodes_off")
        row = lines[1].split("\t")
        self.assertEqual(row[0], "3_2_2_60")
        self.assertEqual(block(out)["instances"], "1")

        code, timed, _ = run(*args, "--timings")
        self.assertEqual(code, 0)
        timed_lines = timed.splitlines()
        self.assertEqual(timed_lines[0].split("\t")[-2:], ["time_on", "time_off"])
        self.assertEqual(timed_lines[1].split("\t")[:5], row)

    def test_missing_file(self):
        code, _, err = run("solve", os.path.join(self.tmp.name, "nope.json"))
        self.assertEqual(code, 3)
        self.assertIn("Unable to read input", err)

    def test_malformed_file(self):
        with open(self.path, "w", encoding="utf-8") as fh:
            fh.write("{not json")
        code, _, err = run("solve", self.path)
        self.assertEqual(code, 3)
        self.assertIn("Malformed instance document", err)

    def test_bad_usage(self):
        self.assertEqual(run("frobnicate")[0], 2)
        self.assertEqual(run("solve")[0], 2)
        self.assertEqual(run("cuts", "--p", "abc")[0], 2)
        self.assertEqual(run("cuts", "--p", "1.5")[0], 2)
        self.assertEqual(run("gen", "--n", "1", "--m", "1")[0], 2)
        self.assertEqual(run("bench", "--n-min", "9", "--n-max", "8")[0], 2)


if __name__ == "__main__":
    unittest.main()
