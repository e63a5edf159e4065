"""The compiled kernel and the numpy fallback must be interchangeable."""

import numpy as np
import pytest

from gdgat import kernels
from gdgat.certify import certify_gradients
from gdgat.kernels import numpy_backend

needs_ext = pytest.mark.skipif(
    "cython" not in kernels.available_backends(),
    reason="compiled extension not built",
)


def random_layer_inputs(rng, n=6, d_in=5, d_out=4, heads=3, edge_dim=4):
    h = rng.normal(size=(n, d_in))
    w = rng.normal(size=(heads, d_in, d_out)) * 0.5
    a = rng.normal(size=(heads, 2 * d_out + edge_dim)) * 0.5
    p = rng.dirichlet(np.ones(edge_dim), size=(n, n))
    return h, w, a, p


@needs_ext
@pytest.mark.parametrize("aggregation", ["concat", "mean"])
@pytest.mark.parametrize("seed", range(4))
def test_forward_backward_equivalence(seed, aggregation):
    from gdgat.kernels import _attention

    rng = np.random.default_rng(seed)
    h, w, a, p = random_layer_inputs(rng)
    out_np, cache_np = numpy_backend.layer_forward(h, w, a, p, 0.2, 0.15, aggregation)
    out_cy, cache_cy = _attention.layer_forward(h, w, a, p, 0.2, 0.15, aggregation)
    assert np.max(np.abs(out_np - out_cy)) < 1e-12
    assert np.max(np.abs(cache_np["alpha"] - cache_cy["alpha"])) < 1e-12

    g = rng.normal(size=out_np.shape)
    for (dh1, dw1, da1), (dh2, dw2, da2) in [(
        numpy_backend.layer_backward(g, cache_np),
        _attention.layer_backward(g, cache_cy),
    )]:
        assert np.max(np.abs(dh1 - dh2)) < 1e-11
        assert np.max(np.abs(dw1 - dw2)) < 1e-11
        assert np.max(np.abs(da1 - da2)) < 1e-11


@needs_ext
def test_no_edge_features_equivalence():
    from gdgat.kernels import _attention

    rng = np.random.default_rng(5)
    h, w, a, _ = random_layer_inputs(rng, edge_dim=0)
    out_np, _ = numpy_backend.layer_forward(h, w, a, None, 0.2, 0.2, "concat")
    out_cy, _ = _attention.layer_forward(h, w, a, None, 0.2, 0.2, "concat")
    assert np.max(np.abs(out_np - out_cy)) < 1e-12


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_gradcheck_passes_on_each_backend(backend):
    if backend not in kernels.available_backends():
        pytest.skip("backend unavailable")
    before = kernels.active_backend()
    try:
        kernels.set_backend(backend)
        assert certify_gradients(seed=3, eps=1e-5) < 1e-4
    finally:
        kernels.set_backend(before)


def test_backend_selection_api():
    assert kernels.active_backend() in kernels.available_backends()
    with pytest.raises(ValueError):
        kernels.set_backend("fortran")
