import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nullrec import records


@given(st.floats(allow_nan=False, allow_infinity=False))
@settings(max_examples=200)
def test_float_format_round_trips(v):
    assert float(records.fmt(v)) == v


def test_fmt_types():
    assert records.fmt(True) == "True"
    assert records.fmt(np.int64(3)) == "3"
    assert records.fmt(0.1) == "0.10000000000000001"
    assert records.fmt("a") == "a"


def test_columns_round_trip(tmp_path):
    p = tmp_path / "c.csv"
    x = np.random.default_rng(0).normal(size=20)
    records.write_columns(p, {"t": np.arange(20.0), "x": x, "tag": np.array(["a"] * 20)})
    back = records.read_columns(p)
    assert np.array_equal(back["x"], x)
    assert back["tag"][0] == "a"
    with pytest.raises(ValueError):
        records.write_columns(p, {"a": np.zeros(2), "b": np.zeros(3)})


def test_binary_round_trip_and_corruption(tmp_path):
    p = tmp_path / "p.bin"
    table = np.random.default_rng(1).normal(size=(11, 4))
    records.write_binary_path(p, d=1, k=2, n_extra=0, regime="longtime", n_steps=10, seed=2 ** 63 + 5,
                              path_index=7, t0=0.0, dt=0.1, eps=0.05, table=table)
    h, back = records.read_binary_path(p)
    assert np.array_equal(back, table)
    assert h["regime"] == "longtime" and h["seed"] == 2 ** 63 + 5 and h["path_index"] == 7
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        records.read_binary_path(p)
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        records.read_binary_path(p)
    with pytest.raises(ValueError):
        records.write_binary_path(p, d=1, k=2, n_extra=0, regime="standard", n_steps=3, seed=0,
                                  path_index=0, t0=0.0, dt=0.1, eps=0.1, table=table)
