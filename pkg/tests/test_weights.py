import numpy as np
import numpy.testing as npt
import pytest

from lort.errors import WeightFormatError, WeightLookupError
from lort.weights import WeightStore


def make_store():
    ws = WeightStore()
    rng = np.random.default_rng(0)
    ws["enc.conv.w"] = rng.standard_normal((4, 2, 3, 3))
    ws["enc.conv.b"] = rng.standard_normal(4)
    ws["block0.ln.gain"] = np.ones(8)
    return ws


def test_lookup_and_views():
    ws = make_store()
    assert ws["enc.conv.b"].shape == (4,)
    view = ws.view("enc")
    npt.assert_array_equal(view["conv.w"], ws["enc.conv.w"])
    nested = view.view("conv")
    npt.assert_array_equal(nested["b"], ws["enc.conv.b"])
    assert "conv.w" in view and "missing" not in view
    with pytest.raises(WeightLookupError, match="enc.conv.missing"):
        view["conv.missing"]


def test_missing_and_n_params():
    ws = make_store()
    assert ws.missing(["enc.conv.w", "nope"]) == ["nope"]
    assert ws.n_params == 4 * 2 * 9 + 4 + 8


def test_bytes_roundtrip_preserves_order_shapes_values():
    ws = make_store()
    back = WeightStore.from_bytes(ws.to_bytes())
    assert list(back.keys()) == list(ws.keys())
    for name, arr in ws.items():
        assert back[name].shape == arr.shape
        npt.assert_allclose(back[name], arr, atol=1e-6)  # float32 storage


def test_save_load_roundtrip(tmp_path):
    ws = make_store()
    path = tmp_path / "w.bin"
    ws.save(str(path))
    back = WeightStore.load(str(path))
    npt.assert_allclose(back["enc.conv.w"], ws["enc.conv.w"], atol=1e-6)


def test_format_errors():
    ws = make_store()
    data = ws.to_bytes()
    with pytest.raises(WeightFormatError, match="magic"):
        WeightStore.from_bytes(b"NOTMAGIC" + data[8:])
    with pytest.raises(WeightFormatError, match="truncated"):
        WeightStore.from_bytes(data[:-8])
    with pytest.raises(WeightFormatError):
        WeightStore.from_bytes(data + b"\x00\x00\x00\x00")


def test_values_stored_as_float64():
    ws = WeightStore()
    ws["x"] = np.array([1, 2, 3], dtype=np.int32)
    assert ws["x"].dtype == np.float64
