"""Backend parity: the compiled and NumPy kernels must agree bit for bit."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cropforge.buffer import InterpMethod
from cropforge.kernels import _pykernels, axis_taps

cykernels = pytest.importorskip(
    "cropforge.kernels._cykernels", reason="compiled kernel backend not built"
)


def _rand_plane(h, w, seed=0):
    return np.random.default_rng(seed).random((h, w), dtype=np.float32)


@pytest.mark.parametrize("method", list(InterpMethod))
@pytest.mark.parametrize("dims", [(37, 53, 53, 37), (37, 53, 17, 90), (11, 7, 64, 64),
                                  (64, 64, 1, 1), (5, 1024, 96, 96)])
def test_resample_bit_parity(method, dims):
    h_in, w_in, w_out, h_out = dims
    plane = _rand_plane(h_in, w_in, seed=w_out)
    idx_h, wts_h = axis_taps(w_in, w_out, method)
    idx_v, wts_v = axis_taps(h_in, h_out, method)
    a = _pykernels.resample_v(_pykernels.resample_h(plane, idx_h, wts_h), idx_v, wts_v)
    b = cykernels.resample_v(cykernels.resample_h(plane, idx_h, wts_h), idx_v, wts_v)
    assert a.shape == (h_out, w_out)
    assert np.array_equal(a.view(np.uint32), b.view(np.uint32))


def test_warp_bit_parity():
    plane = _rand_plane(37, 53, seed=1)
    rng = np.random.default_rng(2)
    mx = np.ascontiguousarray(np.clip(rng.random((41, 61)) * 60.0 - 3.0, 0.5, 52.5))
    my = np.ascontiguousarray(np.clip(rng.random((41, 61)) * 45.0 - 3.0, 0.5, 36.5))
    a = _pykernels.warp_bilinear(plane, mx, my)
    b = cykernels.warp_bilinear(plane, mx, my)
    assert np.array_equal(a.view(np.uint32), b.view(np.uint32))


def test_kernels_accept_read_only_inputs():
    plane = _rand_plane(8, 8)
    plane.flags.writeable = False
    idx, wts = axis_taps(8, 5, InterpMethod.LINEAR)
    idx.flags.writeable = False
    wts.flags.writeable = False
    a = _pykernels.resample_h(plane, idx, wts)
    b = cykernels.resample_h(plane, idx, wts)
    assert np.array_equal(a, b)


@given(
    n_in=st.integers(1, 300),
    n_out=st.integers(1, 300),
    method=st.sampled_from(list(InterpMethod)),
)
@settings(max_examples=120, deadline=None)
def test_taps_well_formed(n_in, n_out, method):
    idx, wts = axis_taps(n_in, n_out, method)
    assert idx.shape == wts.shape
    assert idx.shape[0] == n_out
    assert idx.min() >= 0 and idx.max() <= n_in - 1
    # unit DC gain: weights sum to 1 per output pixel
    np.testing.assert_allclose(wts.sum(axis=1), 1.0, atol=1e-12)


@given(n=st.integers(1, 200), method=st.sampled_from(list(InterpMethod)))
@settings(max_examples=60, deadline=None)
def test_taps_identity_dims_are_exact(n, method):
    idx, wts = axis_taps(n, n, method)
    plane = np.random.default_rng(n).random((3, n), dtype=np.float32)
    out = _pykernels.resample_h(plane, idx, wts)
    assert np.array_equal(out, plane)


def test_backend_env_override(monkeypatch):
    import importlib
    import cropforge.kernels as kernels_pkg

    monkeypatch.setenv("CROPFORGE_KERNELS", "numpy")
    mod = importlib.reload(kernels_pkg)
    assert mod.BACKEND == "numpy"
    monkeypatch.setenv("CROPFORGE_KERNELS", "auto")
    mod = importlib.reload(kernels_pkg)
    assert mod.BACKEND == "cython"
    monkeypatch.setenv("CROPFORGE_KERNELS", "bogus")
    with pytest.raises(RuntimeError):
        importlib.reload(kernels_pkg)
    monkeypatch.delenv("CROPFORGE_KERNELS")
    importlib.reload(kernels_pkg)
