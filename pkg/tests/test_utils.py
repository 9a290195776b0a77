#!/usr/bin/env python3

import json
import logging
import math
import time

import numpy as np
import pandas as pd

from ballprob import utils

log = logging.getLogger("BP.test")
log.setLevel("ERROR")
log.parent.setLevel("ERROR")


def test_dumps_full_precision():
    text = utils.dumps({"x": 0.1, "third": 1 / 3, "n": np.int64(4), "ok": np.bool_(True), "tag": "HighDim"})
    assert text == '{"x": 0.10000000000000001, "third": 0.33333333333333331, "n": 4, "ok": true, "tag": "HighDim"}'
    assert json.loads(text)["third"] == 1 / 3


def test_dumps_non_finite():
    text = utils.dumps({"values": [math.nan, math.inf, -math.inf], "missing": None})
    assert text == '{"values": [NaN, Infinity, -Infinity], "missing": null}'
    parsed = json.loads(text)
    assert math.isnan(parsed["values"][0])
    assert parsed["values"][1] == math.inf


def test_write_records(tmp_path):
    out = tmp_path / "records.jsonl"
    text = utils.write_records([{"a": 1.5}, {"a": np.array([1.0, 2.0])}], out)
    assert text == '{"a": 1.5}\n{"a": [1, 2]}\n'
    assert out.read_text() == text


def test_write_frame(tmp_path):
    df = pd.DataFrame({"x": [0.1, 2.0], "ok": [True, False]})
    out = tmp_path / "frame.csv"
    text = utils.write_frame(df, out)
    assert text.splitlines() == ["x,ok", "0.10000000000000001,True", "2,False"]
    assert out.read_text() == text


def test_load_json(tmp_path):
    assert utils.load_json('{"spectrum": [1, 2]}') == {"spectrum": [1, 2]}
    path = tmp_path / "instance.json"
    path.write_text('{"spectrum": [3]}')
    assert utils.load_json(path) == {"spectrum": [3]}


def test_parallel_map_keeps_order():
    def slow_square(i):
        time.sleep(0.01 * (5 - i % 5))
        return i * i

    items = list(range(20))
    assert utils.parallel_map(slow_square, items, threads=4) == [i * i for i in items]
    assert utils.parallel_map(slow_square, items, threads=1) == [i * i for i in items]
    assert utils.parallel_map(slow_square, [], threads=4) == []


def test_set_log_level():
    logger = logging.getLogger("BP")
    before = logger.level
    utils.set_log_level("DEBUG")
    assert logger.level == logging.DEBUG
    utils.set_log_level("bogus")
    assert logger.level == logging.DEBUG
    utils.set_log_level(logging.getLevelName(before) if before else "ERROR")
