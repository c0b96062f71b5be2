import json

import numpy as np
import pytest

from eiskit import io as eio
from eiskit.classical import ImpedanceCurve
from eiskit.nleis import NonlinearCoefficients
from eiskit.signals import TimeSeriesRecord, design_multisine, render_multisine
from eiskit.tvimp import TimeVaryingImpedance


def test_table_keeps_twelve_digits(tmp_path, rng):
    x = rng.standard_normal(50) * 10.0 ** rng.integers(-8, 8, 50)
    eio.write_table(tmp_path / "t.csv", ("a",), ((v,) for v in x))
    back = eio.read_table(tmp_path / "t.csv", ("a",))["a"]
    assert np.max(np.abs(back - x) / np.abs(x)) < 5e-12


def test_atomic_write_leaves_only_target(tmp_path):
    eio.atomic_write(tmp_path / "sub" / "x.csv", "a\n1\n")
    eio.atomic_write(tmp_path / "sub" / "x.csv", "a\n2\n")
    assert [p.name for p in (tmp_path / "sub").iterdir()] == ["x.csv"]
    assert (tmp_path / "sub" / "x.csv").read_bytes() == b"a\n2\n"


def test_failed_write_keeps_old_file(tmp_path):
    eio.write_json(tmp_path / "d.json", {"a": 1})
    with pytest.raises(ValueError):
        eio.write_json(tmp_path / "d.json", {"a": float("nan")})
    assert json.loads((tmp_path / "d.json").read_text()) == {"a": 1}
    assert len(list(tmp_path.iterdir())) == 1


def test_header_mismatch(tmp_path):
    (tmp_path / "t.csv").write_text("x,y\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        eio.read_table(tmp_path / "t.csv", ("a", "b"))
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(ValueError):
        eio.read_table(tmp_path / "e.csv", ("a",))
    (tmp_path / "r.csv").write_text("a,b\n1\n")
    with pytest.raises(ValueError):
        eio.read_table(tmp_path / "r.csv", ("a", "b"))
    (tmp_path / "n.csv").write_text("a\nfoo\n")
    with pytest.raises(ValueError):
        eio.read_table(tmp_path / "n.csv", ("a",))


def test_empty_cells_are_nan(tmp_path):
    (tmp_path / "t.csv").write_text("a,b\n1,\n,2\n")
    d = eio.read_table(tmp_path / "t.csv", ("a", "b"))
    assert np.isnan(d["a"][1]) and np.isnan(d["b"][0])


def test_timeseries_round_trip(tmp_path):
    spec = design_multisine(0.1, 5.0, 8, 10.0, 20.0, rng_seed=1)
    exc = render_multisine(spec, 2)
    rec = TimeSeriesRecord(exc.fs, 2, exc.current, 3.7 + 0.01 * exc.current, spec)
    eio.write_timeseries(tmp_path / "ts.csv", rec)
    raw = (tmp_path / "ts.csv").read_bytes()
    assert raw.startswith(b"t_s,i_a,v_v\n") and b"\r" not in raw
    back = eio.read_timeseries(tmp_path / "ts.csv", spec)
    assert back.n_periods == 2 and back.fs == spec.fs
    assert np.allclose(back.voltage, rec.voltage, rtol=1e-11, atol=0)
    # a current-only record keeps an empty voltage column
    eio.write_timeseries(tmp_path / "i.csv", exc)
    assert eio.read_timeseries(tmp_path / "i.csv").voltage.size == 0
    with pytest.raises(ValueError):
        eio.read_timeseries(tmp_path / "ts.csv", design_multisine(0.1, 5.0, 8, 10.0, 30.0))


def test_spec_round_trip(tmp_path):
    spec = design_multisine(0.1, 5.0, 8, 10.0, 20.0, rng_seed=1)
    eio.write_spec(tmp_path / "s.json", spec)
    back = eio.read_spec(tmp_path / "s.json")
    assert np.array_equal(back.harmonics, spec.harmonics)
    assert np.array_equal(back.phases, spec.phases)


def test_curve_round_trip(tmp_path):
    f = np.geomspace(0.1, 10.0, 7)
    z = 0.05 / (1 + 1j * f)
    eio.write_curve(tmp_path / "c.csv", ImpedanceCurve(f, z))
    back = eio.read_curve(tmp_path / "c.csv")
    assert back.std is None
    assert np.allclose(back.values, z, rtol=1e-11, atol=0)
    eio.write_curve(tmp_path / "s.csv", ImpedanceCurve(f, z, std=z * 0.01))
    assert np.allclose(eio.read_curve(tmp_path / "s.csv").std, z * 0.01, rtol=1e-11)


def test_tv_long_format_round_trip(tmp_path, rng):
    f = np.array([0.1, 0.3, 0.5])
    t = np.array([0.0, 10.0, 20.0, 30.0])
    vals = rng.standard_normal((3, 4)) + 1j * rng.standard_normal((3, 4))
    eio.write_tv(tmp_path / "tv.csv", TimeVaryingImpedance(f, t, vals, method="x"))
    lines = (tmp_path / "tv.csv").read_text().splitlines()
    assert lines[0] == "f_hz,t_s,re_ohm,im_ohm,std_re,std_im"
    assert len(lines) == 1 + 12
    back = eio.read_tv(tmp_path / "tv.csv")
    assert np.array_equal(back.frequencies, f) and np.array_equal(back.times, t)
    assert np.allclose(back.values, vals, rtol=1e-11, atol=0)


def test_nleis_round_trip(tmp_path):
    c = NonlinearCoefficients(2 * np.pi, {1: 0.05 + 0j, 2: 0.01 - 0.002j, 3: 0.0025 + 0j}, 0.5, 2)
    eio.write_nleis(tmp_path / "n.csv", c)
    assert eio.read_nleis(tmp_path / "n.csv") == pytest.approx({1: 0.05, 2: 0.01 - 0.002j,
                                                                 3: 0.0025})


def test_json_is_sorted_and_strict(tmp_path):
    eio.write_json(tmp_path / "j.json", {"b": 1, "a": [1.5, 2]})
    text = (tmp_path / "j.json").read_text()
    assert text.index('"a"') < text.index('"b"') and text.endswith("\n")
    with pytest.raises(ValueError):
        eio.write_json(tmp_path / "k.json", {"x": float("inf")})
