"""
End-to-end tests for the analyze / simulate / verify commands.
"""
import io
import os
import shutil
import sys
import tempfile
import unittest
from contextlib import redirect_stdout

# Add the project root to the path
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import main as cli
from utils.file_operations import read_json, read_text


class TestCli(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def run_cli(self, *args):
        buffer = io.StringIO()
        with redirect_stdout(buffer):
            code = cli.main(["--log-file", "", *args])
        return code, buffer.getvalue()

    def test_analyze(self):
        code, output = self.run_cli("analyze", "--stage", "auth", "--out", self.tmp)
        self.assertEqual(code, cli.EXIT_OK)
        self.assertIn("reachable ", output)
        self.assertIn("loss-requiring", output)
        table = read_json(os.path.join(self.tmp, cli.TABLE_FILE))
        self.assertEqual(table["status"], "success")
        self.assertEqual(table["data"]["totals"]["product"], 30)

    def test_analyze_budget_exhaustion(self):
        code, _ = self.run_cli("analyze", "--stage", "auth", "--out", self.tmp, "--budget", "10")
        self.assertEqual(code, cli.EXIT_INCONCLUSIVE)
        self.assertTrue(os.path.exists(os.path.join(self.tmp, cli.TABLE_FILE)))

    def test_missing_model(self):
        code, output = self.run_cli("analyze", "--model", os.path.join(self.tmp, "none.model"), "--out", self.tmp)
        self.assertEqual(code, cli.EXIT_USAGE)
        self.assertIn("Error", output)

    def test_bad_k_list(self):
        code, _ = self.run_cli("verify", "--stage", "auth", "--out", self.tmp, "--k", "0,-1")
        self.assertEqual(code, cli.EXIT_USAGE)

    def test_simulate_then_verify(self):
        code, _ = self.run_cli("simulate", "--stage", "auth", "--out", self.tmp, "--reps", "1")
        self.assertEqual(code, cli.EXIT_OK)
        manifest = read_json(os.path.join(self.tmp, cli.MANIFEST_FILE))["data"]
        self.assertTrue(manifest["traces"])
        self.assertTrue(any(name.startswith("target000_rep000") for name in manifest["traces"]))

        code, output = self.run_cli("verify", "--stage", "auth", "--out", self.tmp, "--k", "0,2", "--kmax", "2")
        self.assertIn(code, (cli.EXIT_OK, cli.EXIT_VIOLATION))
        self.assertIn("no violation observed", output)
        report = read_json(os.path.join(self.tmp, "report.json"))["data"]
        self.assertEqual(report["traces"], len(manifest["traces"]))
        self.assertEqual([row["k"] for row in report["rows"]], [0, 2])
        verdicts = read_json(os.path.join(self.tmp, "verdicts.json"))["data"]
        self.assertEqual(set(verdicts), set(manifest["traces"]))
        self.assertIn("Accepted", read_text(os.path.join(self.tmp, "report.txt"))["text"])

    def test_no_steer_reaches_fewer_targets(self):
        summaries = {}
        for flags in ((), ("--no-steer",)):
            out = os.path.join(self.tmp, "free" if flags else "steered")
            code, _ = self.run_cli("simulate", "--stage", "auth", "--out", out, "--reps", "1", *flags)
            self.assertEqual(code, cli.EXIT_OK)
            summaries[flags] = read_json(os.path.join(out, cli.MANIFEST_FILE))["data"]["summary"]
        self.assertLess(summaries[("--no-steer",)]["reached_targets"], summaries[()]["reached_targets"])

    def test_baseline_campaign(self):
        code, _ = self.run_cli("simulate", "--stage", "auth", "--out", self.tmp, "--reps", "3",
                               "--baseline-loss", "0.1", "--seed", "4")
        self.assertEqual(code, cli.EXIT_OK)
        manifest = read_json(os.path.join(self.tmp, cli.MANIFEST_FILE))["data"]
        self.assertEqual(sorted(manifest["traces"]), ["baseline_rep000", "baseline_rep001", "baseline_rep002"])
        self.assertTrue(all(entry["target"] is None for entry in manifest["traces"].values()))

    def test_undecodable_model_file(self):
        path = os.path.join(self.tmp, "binary.model")
        with open(path, "wb") as f:
            f.write(b"\xff\xfe")
        code, output = self.run_cli("analyze", "--model", path, "--out", self.tmp)
        self.assertEqual(code, cli.EXIT_USAGE)
        self.assertIn("Failed to read", output)

    def test_malformed_policy_table(self):
        table = os.path.join(self.tmp, "table.json")
        for text in ('{"automata": ["Client", "AP"], "targets": [{"reachable": true}]}', '[1, 2]'):
            with open(table, "w", encoding="utf-8") as f:
                f.write(text)
            code, output = self.run_cli("simulate", "--stage", "auth", "--out", self.tmp, "--reps", "1",
                                        "--policies", table)
            self.assertEqual(code, cli.EXIT_USAGE, text)
            self.assertIn("malformed policy table", output)

    def test_header_byte_limit_reaches_the_policy_compiler(self):
        code, output = self.run_cli("simulate", "--stage", "auth", "--out", self.tmp, "--reps", "1",
                                    "--max-header-bytes", "2")
        self.assertEqual(code, cli.EXIT_USAGE)
        self.assertIn("header bytes", output)
        code, _ = self.run_cli("simulate", "--stage", "auth", "--out", self.tmp, "--reps", "1",
                               "--max-header-bytes", "11")
        self.assertEqual(code, cli.EXIT_USAGE)

    def test_same_seed_gives_identical_files(self):
        outputs = []
        for run in ("a", "b"):
            out = os.path.join(self.tmp, run)
            self.assertEqual(self.run_cli("analyze", "--stage", "auth", "--out", out)[0], cli.EXIT_OK)
            self.run_cli("simulate", "--stage", "auth", "--out", out, "--reps", "2", "--seed", "3",
                         "--sniffer-loss", "0.2", "--workers", "2" if run == "a" else "3")
            _, printed = self.run_cli("verify", "--stage", "auth", "--out", out, "--k", "0,2", "--kmax", "2")
            files = {"stdout": printed.encode("utf-8")}
            for root, _, names in os.walk(out):
                for name in names:
                    path = os.path.join(root, name)
                    with open(path, "rb") as f:
                        files[os.path.relpath(path, out)] = f.read()
            outputs.append(files)
        self.assertEqual(sorted(outputs[0]), sorted(outputs[1]))
        self.assertIn("report.txt", outputs[0])
        for name, content in outputs[0].items():
            self.assertEqual(content, outputs[1][name], name)

    def test_verify_missing_traces(self):
        code, _ = self.run_cli("verify", "--stage", "auth", "--out", self.tmp,
                               "--traces", os.path.join(self.tmp, "nothing"))
        self.assertEqual(code, cli.EXIT_USAGE)


if __name__ == '__main__':
    unittest.main()
