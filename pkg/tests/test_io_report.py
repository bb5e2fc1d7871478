import csv
import json

import numpy as np
import pytest
from _helpers import FS, in_range, oscillator
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from psdcalib.denoise import clean_periodogram
from psdcalib.estimators import fit_periodogram
from psdcalib.io import HEADER, InputError, read_series, write_series
from psdcalib.report import UNITS, CalibrationReport, denoise_entry, fit_entry, write_plot_data


def test_header_is_28_bytes(tmp_path):
    assert HEADER.size == 28
    path = tmp_path / "x.bin"
    write_series(path, np.arange(5.0), 1e3)
    assert path.stat().st_size == 28 + 5 * 8


class TestRoundTrip:
    @given(arrays(np.float64, st.integers(2, 200), elements=st.floats(-1e12, 1e12)))
    def test_binary_f8_lossless(self, tmp_path_factory, x):
        path = tmp_path_factory.mktemp("b") / "x.bin"
        write_series(path, x, 12345.5)
        sf = read_series(path)
        assert sf.series.samples.tobytes() == x.tobytes()
        assert sf.fs == 12345.5 and sf.format == "bin" and sf.n == x.size

    def test_binary_f4(self, tmp_path):
        x = np.random.default_rng(0).normal(size=1000)
        path = tmp_path / "x.bin"
        write_series(path, x, 1e4, width=4)
        assert path.stat().st_size == 28 + 4000
        got = read_series(path).series.samples
        np.testing.assert_array_equal(got, x.astype(np.float32).astype(float))

    @given(arrays(np.float64, st.integers(2, 50), elements=st.floats(-1e12, 1e12)))
    def test_csv_lossless(self, tmp_path_factory, x):
        path = tmp_path_factory.mktemp("c") / "x.csv"
        write_series(path, x, 2e5, unit="pm")
        sf = read_series(path)
        # series are held in fm
        np.testing.assert_array_equal(sf.series.samples, x * 1e3)
        assert sf.unit == "pm" and sf.fs == 2e5 and sf.format == "csv"

    def test_unit_scaling(self, tmp_path):
        path = tmp_path / "x.bin"
        write_series(path, [1.0, -2.0, 3.0], 10.0)
        fm = read_series(path).series
        nm = read_series(path, unit="nm").series
        assert fm.unit == nm.unit == "fm"
        np.testing.assert_allclose(nm.samples, 1e6 * fm.samples, rtol=1e-15)


class TestErrors:
    def test_fs_contradiction(self, tmp_path):
        path = tmp_path / "x.bin"
        write_series(path, np.zeros(4), 1e3)
        with pytest.raises(InputError, match="contradicts"):
            read_series(path, fs=2e3)
        assert read_series(path, fs=1e3).fs == 1e3

    def test_unit_contradiction(self, tmp_path):
        path = tmp_path / "x.csv"
        write_series(path, np.zeros(4), 1e3, unit="nm")
        with pytest.raises(InputError, match="contradicts"):
            read_series(path, unit="pm")

    def test_missing_fs(self, tmp_path):
        path = tmp_path / "x.csv"
        path.write_text("1.0\n2.0\n")
        with pytest.raises(InputError, match="fs"):
            read_series(path)
        assert read_series(path, fs=5.0).n == 2

    def test_truncated(self, tmp_path):
        path = tmp_path / "x.bin"
        write_series(path, np.zeros(10), 1e3)
        raw = path.read_bytes()
        path.write_bytes(raw[:-3])
        with pytest.raises(InputError, match="promises"):
            read_series(path)
        path.write_bytes(raw[:10])
        with pytest.raises(InputError):
            read_series(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(InputError):
            read_series(tmp_path / "none.bin")

    @pytest.mark.parametrize(
        "text", ["# fs=1e3\n1.0\nabc\n", "# fs=fast\n1.0\n", "# fs=1e3\n# unit=furlong\n1.0\n", "# fs=1e3\n1.0\nnan\n"]
    )
    def test_bad_csv(self, tmp_path, text):
        path = tmp_path / "x.csv"
        path.write_text(text)
        with pytest.raises(InputError):
            read_series(path)

    def test_binary_garbage(self, tmp_path):
        path = tmp_path / "x.bin"
        path.write_bytes(b"\xff\xfe\x00\x01" * 10)
        with pytest.raises(InputError):
            read_series(path)

    @pytest.mark.parametrize("kw", [dict(fmt="xml"), dict(width=2)])
    def test_bad_write_args(self, tmp_path, kw):
        with pytest.raises(ValueError):
            write_series(tmp_path / "x.bin", [1.0], 1.0, **kw)


@pytest.fixture(scope="module")
def fitted():
    th = oscillator(10.0)
    p = in_range(th, 40_000, seed=2)
    cleaned, rep, _ = clean_periodogram(p, 100, rng_seed=0)
    return p, fit_periodogram("LP", cleaned, 100), rep


class TestReport:
    def _report(self, fitted):
        _, res, rep = fitted
        return CalibrationReport(
            version="0.1.0",
            command="calibrate",
            seed=7,
            input={"path": "x.bin", "fs": {"value": FS, "unit": "Hz"}, "n": 40_000},
            fitting_range={"value": list(res.fitting_range), "unit": "Hz"},
            bin_size=100,
            fits=[fit_entry(res)],
            denoise=denoise_entry(rep),
            options={"p_threshold": 0.01},
        )

    def test_json_round_trip_lossless(self, fitted):
        r = self._report(fitted)
        text = r.to_json()
        back = CalibrationReport.from_json(text)
        assert back == r
        assert back.to_json() == text

    def test_units_on_every_estimate(self, fitted):
        d = json.loads(self._report(fitted).to_json())
        est = d["fits"][0]["estimates"]
        assert set(est) == {"f0", "Q", "k", "A_w"}
        for name, e in est.items():
            assert e["unit"] == UNITS[name]
            assert e["se"] is not None and e["se"] > 0
        assert d["fits"][0]["fitting_range"]["unit"] == "Hz"
        assert d["denoise"]["units"]["freq"] == "Hz"

    def test_accessors(self, fitted):
        r = self._report(fitted)
        assert r.converged
        assert r.fit("lp")["method"] == "LP"
        assert r.flagged_freqs == []
        with pytest.raises(KeyError):
            r.fit("NLS")

    def test_missing_errors_become_null(self, fitted):
        p, _, _ = fitted
        entry = fit_entry(fit_periodogram("LP", p, 100, compute_cov=False))
        text = json.dumps(entry, allow_nan=False)
        assert all(e["se"] is None for e in json.loads(text)["estimates"].values())

    def test_plot_data(self, fitted, tmp_path):
        p, res, _ = fitted
        path = tmp_path / "plot.csv"
        write_plot_data(path, p, res, 100, flagged_freqs=[float(p.freqs[150])])
        with open(path) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["freq_Hz", "psd_fm2_per_Hz", "fitted_fm2_per_Hz", "flagged"]
        body = np.array(rows[1:], dtype=float)
        assert body.shape == (p.freqs.size // 100, 4)
        assert body[:, 3].sum() == 1 and body[1, 3] == 1
        ratio = body[:, 1] / body[:, 2]
        assert 0.8 < np.median(ratio) < 1.2
