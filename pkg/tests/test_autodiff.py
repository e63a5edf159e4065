import numpy as np
import pytest

from gdgat import autodiff as ad
from gdgat.errors import NumericError


def reshaped(node, shape):
    out = ad.Node(node.data.reshape(shape), parents=(node,))
    out.backward_fn = lambda g: node.accumulate(g.reshape(node.data.shape))
    return out


class TestGradCheck:
    def test_quadratic(self):
        theta = ad.Param("theta", np.array([1.0, 2.0, 3.0]))

        def loss():  # theta . theta as a matrix product
            return reshaped(ad.matmul(reshaped(theta, (1, 3)), reshaped(theta, (3, 1))), ())

        err = ad.grad_check(loss, [theta], eps=1e-5)
        assert err < 1e-8
        # analytic gradient is exactly 2*theta
        theta.zero_grad()
        ad.backward(loss())
        assert np.allclose(theta.grad, 2 * theta.data, atol=1e-12)

    def test_constant_function(self):
        theta = ad.Param("theta", np.array([0.5, -0.5]))

        def loss():
            return ad.Node(np.float64(3.25), parents=(theta,),
                           backward_fn=lambda g: None, needs_grad=True)

        assert ad.grad_check(loss, [theta], eps=1e-5) < 1e-8

    def test_nondeterministic_rejected(self):
        theta = ad.Param("theta", np.array([1.0]))
        rng = np.random.default_rng(0)

        def loss():
            return ad.Node(np.float64(rng.random()), parents=(theta,),
                           backward_fn=lambda g: None, needs_grad=True)

        with pytest.raises(NumericError, match="deterministic"):
            ad.grad_check(loss, [theta])

    @pytest.mark.parametrize("eps", [1e-8, 1e-2])
    def test_eps_range_enforced(self, eps):
        theta = ad.Param("theta", np.array([1.0]))
        with pytest.raises(ValueError):
            ad.grad_check(lambda: ad.Node(0.0), [theta], eps=eps)


class TestOpGradients:
    """Each composite op certified against central differences."""

    def test_matmul_add_ce(self, rng):
        x = ad.Param("x", rng.normal(size=(3, 4)))
        w = ad.Param("w", rng.normal(size=(4, 5)))
        b = ad.Param("b", rng.normal(size=(5,)))

        def loss():
            return ad.mean_cross_entropy(ad.add(ad.matmul(x, w), b), [0, 2, 4])

        assert ad.grad_check(loss, [x, w, b], eps=1e-5) < 1e-6

    def test_concat_gather_leaky(self, rng):
        table = ad.Param("table", rng.normal(size=(4, 3)))
        other = ad.Param("other", rng.normal(size=(5, 2)))
        w = ad.Param("w", rng.normal(size=(5, 4)))
        idx = np.array([0, 3, 1, 1, 2])

        def loss():
            feats = ad.concat_cols([ad.gather_rows(table, idx), other])
            h = ad.leaky_relu(ad.matmul(feats, w), 0.2)
            return ad.mean_cross_entropy(h, [1, 0, 3, 2, 1])

        assert ad.grad_check(loss, [table, other, w], eps=1e-5) < 1e-6

    def test_mean_cross_entropy_uniform_value(self):
        logits = ad.constant(np.zeros((2, 4)))
        loss = ad.mean_cross_entropy(logits, [0, 3])
        assert float(loss.data) == pytest.approx(np.log(4.0), abs=1e-12)

    def test_gat_layer_both_aggregations(self, rng):
        n, d_in, d_out, k, c = 5, 4, 3, 2, 4
        h = ad.Param("h", rng.normal(size=(n, d_in)))
        p = rng.dirichlet(np.ones(c), size=(n, n))
        for agg, width in (("concat", k * d_out), ("mean", d_out)):
            w = ad.Param("w", rng.normal(size=(k, d_in, d_out)) * 0.5)
            a = ad.Param("a", rng.normal(size=(k, 2 * d_out + c)) * 0.5)
            wc = ad.Param("wc", rng.normal(size=(width, c)) * 0.5)

            def loss():
                out = ad.gat_layer(h, w, a, p, act_slope=0.2, attn_slope=0.1,
                                   aggregation=agg)
                return ad.mean_cross_entropy(ad.matmul(out, wc), list(range(4)) + [0])

            assert ad.grad_check(loss, [h, w, a, wc], eps=1e-5) < 1e-5


def test_backward_requires_scalar():
    from gdgat.errors import ShapeError

    with pytest.raises(ShapeError):
        ad.backward(ad.constant(np.zeros(3)))
