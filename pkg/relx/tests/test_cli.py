"""
# Run the command-line tests
pytest relx/tests/test_cli.py -v

# With console output from the commands
pytest relx/tests/test_cli.py -v -s
"""

import json
import os
import tempfile
import unittest
from unittest.mock import MagicMock

from relx.cli import dispatch, int_list
from relx.core.models import RunReport
from relx.core.network import zero_net
from relx.core.serialization import load_model, save_model
from relx.tests.helpers import victim


class TestCli(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.tmp.name, name)

    def read_report(self, name):
        with open(self.path(name), encoding="utf-8") as f:
            return json.load(f)

    def test_usage_errors(self):
        self.assertEqual(dispatch([]), 2)
        self.assertEqual(dispatch(["extract", "--d", "3"]), 2)
        self.assertEqual(dispatch(["eval", "speed", "--a", "x", "--b", "y", "--seed", "0"]), 2)

    def test_int_list(self):
        self.assertEqual(int_list("1, 2,3"), [1, 2, 3])

    def test_missing_model_file(self):
        missing = self.path("nope.relu2")
        self.assertEqual(dispatch(["verify-equiv", missing, missing, "--d", "2"]), 1)

    def test_subsetsum_against_zero_model(self):
        hard, zero = self.path("hard.relu2"), self.path("zero.relu2")
        save_model(zero_net(3, 1, 1), zero)
        argv = ["gen-hard", "subsetsum", "--set", "3,5,9", "--target", "14", "--out", hard]
        self.assertEqual(dispatch(argv), 0)
        self.assertEqual(load_model(hard).h, 3)

        argv = ["verify-equiv", hard, zero, "--d", "3", "--report", self.path("eq.json")]
        self.assertEqual(dispatch(argv), 0)
        report = self.read_report("eq.json")
        self.assertEqual(report["metrics"]["result"], "witness")
        self.assertEqual(report["metrics"]["witness"], [0.0, 1.0, 1.0])

    def test_rectangle(self):
        out = self.path("rect.relu2")
        argv = [
            "gen-hard", "rectangle", "--d", "4", "--k", "2", "--p", "8",
            "--cell", "3,5", "--out", out, "--report", self.path("rect.json"),
        ]  # fmt: skip
        self.assertEqual(dispatch(argv), 0)
        self.assertEqual(load_model(out).h, 6)
        self.assertEqual(self.read_report("rect.json")["metrics"]["k"], 2)

    def test_rectangle_cell_count_checked(self):
        argv = [
            "gen-hard", "rectangle", "--d", "4", "--k", "2", "--p", "8",
            "--cell", "3", "--out", self.path("rect.relu2"),
        ]  # fmt: skip
        self.assertEqual(dispatch(argv), 1)

    def test_train_victim(self):
        out = self.path("victim.relu2")
        argv = [
            "train-victim", "--d", "4", "--h", "6", "--k", "3", "--n", "200",
            "--epochs", "3", "--seed", "0", "--out", out, "--report", self.path("train.json"),
        ]  # fmt: skip
        self.assertEqual(dispatch(argv), 0)
        net = load_model(out)
        self.assertEqual((net.d, net.h, net.k), (4, 6, 3))
        report = self.read_report("train.json")
        self.assertEqual(report["seeds"], {"data": 0, "init": 0, "shuffle": 0})
        self.assertEqual(len(report["metrics"]["losses"]), 3)
        self.assertIn("test_accuracy", report["metrics"])

    def test_extract_then_evaluate(self):
        model, extracted = self.path("victim.relu2"), self.path("extracted.relu2")
        save_model(victim(10, 4, 3, 1), model)
        argv = [
            "extract", "--oracle", f"local:{model}", "--d", "10", "--h", "4",
            "--seed", "0", "--out", extracted, "--report", self.path("extract.json"),
        ]  # fmt: skip
        self.assertEqual(dispatch(argv), 0)
        report = self.read_report("extract.json")
        self.assertEqual(report["metrics"]["neurons_found"], 4)
        self.assertEqual(report["ledger"]["total"], sum(
            v for k, v in report["ledger"].items() if k != "total"
        ))

        argv = [
            "eval", "fidelity", "--a", model, "--b", extracted, "--n", "1000",
            "--seed", "0", "--report", self.path("fidelity.json"),
        ]  # fmt: skip
        self.assertEqual(dispatch(argv), 0)
        self.assertGreaterEqual(self.read_report("fidelity.json")["metrics"]["fidelity"], 0.99)

        argv = ["eval", "precision", "--a", model, "--b", f"local:{model}", "--seed", "0"]
        self.assertEqual(dispatch(argv), 1)

    def test_failed_extraction_keeps_partial_report(self):
        zero = self.path("zero.relu2")
        save_model(zero_net(3, 1, 2), zero)
        argv = [
            "extract", "--oracle", f"local:{zero}", "--d", "3", "--h", "1", "--seed", "0",
            "--out", self.path("ext.relu2"), "--report", self.path("ext.json"),
        ]  # fmt: skip
        self.assertEqual(dispatch(argv), 1)
        self.assertFalse(os.path.exists(self.path("ext.relu2")))
        report = self.read_report("ext.json")
        self.assertIn("no critical points", report["metrics"]["error"])
        self.assertEqual(report["metrics"]["partial_neurons"], [])
        self.assertGreater(report["ledger"]["search"], 0)

    def test_orchestrator_is_injectable(self):
        orchestrator = MagicMock()
        orchestrator.verify_equiv.return_value = RunReport(
            command="verify-equiv", metrics={"result": "equivalent", "checked": 4}
        )
        self.assertEqual(dispatch(["verify-equiv", "a", "b", "--d", "2"], orchestrator), 0)
        orchestrator.verify_equiv.assert_called_once_with("a", "b", 2)


if __name__ == "__main__":
    unittest.main()
