"""
# Run the model-file and wire-format tests
pytest relx/tests/test_serialization.py -v
"""

import os
import tempfile
import unittest

import numpy as np

from relx.core import wire
from relx.core.errors import ModelFormatError, NonFiniteError, OracleError
from relx.core.models import TwoLayerNet
from relx.core.serialization import (
    decode_values,
    deserialize,
    encode_values,
    load_model,
    save_model,
    serialize,
)
from relx.tests.helpers import victim


class TestModelFile(unittest.TestCase):
    def test_small_example(self):
        net = TwoLayerNet(a0=[[1.0, -1.0]], b0=[0.0], a1=[[2.0]], b1=[1.0])
        blob = serialize(net)
        lines = blob.splitlines()
        self.assertEqual(lines[0], "relu2 v1 d=2 h=1 k=1")
        self.assertEqual(lines[1], "0x1.0000000000000p+0 -0x1.0000000000000p+0")
        self.assertEqual(len(lines), 1 + 1 + 1 + 1 + 1)

    def test_round_trip_is_bitwise(self):
        for seed in range(5):
            net = victim(6, 3, 4, seed)
            self.assertTrue(deserialize(serialize(net)).bitwise_equal(net))

    def test_awkward_values_survive(self):
        net = TwoLayerNet(
            a0=[[-0.0, 5e-324, 1e-300], [1.7976931348623157e308, -1.0 / 3.0, 0.1]],
            b0=[0.0, -2.5],
            a1=[[1.0, -1.0]],
            b1=[np.nextafter(1.0, 2.0)],
        )
        back = deserialize(serialize(net))
        self.assertEqual(back.a0.tobytes(), net.a0.tobytes())
        self.assertEqual(back.b1.tobytes(), net.b1.tobytes())

    def test_file_round_trip(self):
        net = victim(4, 2, 3, 9)
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, "victim.relu2")
            save_model(net, path)
            self.assertEqual(load_model(path), net)

    def test_bad_header(self):
        with self.assertRaises(ModelFormatError):
            deserialize("relu3 v1 d=1 h=1 k=1\n0x1p+0\n0x0p+0\n0x1p+0\n0x0p+0\n")
        with self.assertRaises(ModelFormatError):
            deserialize("")

    def test_line_count_mismatch(self):
        blob = serialize(victim(3, 2, 2, 0))
        truncated = "\n".join(blob.splitlines()[:-1]) + "\n"
        with self.assertRaisesRegex(ModelFormatError, "shape error"):
            deserialize(truncated)

    def test_row_width_mismatch(self):
        lines = serialize(victim(3, 2, 2, 0)).splitlines()
        lines[1] = lines[1] + " 0x1p+0"
        with self.assertRaisesRegex(ModelFormatError, "shape error"):
            deserialize("\n".join(lines))

    def test_non_finite_values_rejected(self):
        with self.assertRaises(NonFiniteError):
            decode_values("0x1p+0 inf")
        with self.assertRaises(NonFiniteError):
            decode_values("nan")

    def test_garbage_token_rejected(self):
        with self.assertRaises(ModelFormatError):
            decode_values("0x1p+0 hello")

    def test_encode_decode_values(self):
        values = [0.1, -2.0, 3e-310]
        self.assertEqual(decode_values(encode_values(values)), values)


class TestWire(unittest.TestCase):
    def test_query_line(self):
        line = wire.format_query(np.array([1.0, 0.5]))
        self.assertEqual(line, "Q 0x1.0000000000000p+0 0x1.0000000000000p-1\n")
        self.assertEqual(wire.parse_query(line).tolist(), [1.0, 0.5])

    def test_answer_line(self):
        line = wire.format_answer(np.array([-3.25]))
        self.assertTrue(line.startswith("A "))
        self.assertEqual(wire.parse_answer(line).tolist(), [-3.25])

    def test_error_line_raises(self):
        line = wire.format_error("expected 3 values,\n got 2")
        self.assertEqual(line, "E expected 3 values, got 2\n")
        with self.assertRaisesRegex(OracleError, "expected 3 values"):
            wire.parse_answer(line)

    def test_closed_connection(self):
        with self.assertRaises(OracleError):
            wire.parse_answer("")

    def test_malformed_requests(self):
        for line in ("X 0x1p+0\n", "Q\n", "Q nope\n"):
            with self.assertRaises(ModelFormatError):
                wire.parse_query(line)


if __name__ == "__main__":
    unittest.main()
