import numpy as np
import pytest

from sedattn.gru import GruParams, gru_backward, gru_forward, gru_forward_backward, init_gru_params
from sedattn.numerics import finite_diff_grad


def grad_rel_err(analytic, fd):
    return (np.abs(analytic - fd) / (1.0 + np.abs(fd))).max()


def zero_params(d_in, d):
    z = lambda *s: np.zeros(s)
    return GruParams(Wz=z(d, d_in), Wr=z(d, d_in), Wc=z(d, d_in),
                     Uz=z(d, d), Ur=z(d, d), Uc=z(d, d),
                     bz=z(d), br=z(d), bc=z(d))


class TestForward:
    def test_zero_weights_keep_state_at_zero(self):
        # gates sit at 0.5 and the candidate is tanh(0)=0, so h never moves
        rng = np.random.default_rng(0)
        Z = rng.standard_normal((12, 5))
        H = gru_forward(Z, zero_params(5, 4))
        np.testing.assert_array_equal(H, np.zeros((12, 4)))

    def test_single_frame(self):
        rng = np.random.default_rng(1)
        params = init_gru_params(3, 4, seed=2, std=0.5)
        Z = rng.standard_normal((1, 3))
        H = gru_forward(Z, params)
        assert H.shape == (1, 4)
        # recurrence sees only h_0 = 0: hand-roll the single step
        z = 1 / (1 + np.exp(-(params.Wz @ Z[0] + params.bz)))
        c = np.tanh(params.Wc @ Z[0] + params.bc)
        np.testing.assert_allclose(H[0], (1 - z) * c, atol=1e-12)

    def test_input_dim_mismatch(self):
        params = init_gru_params(3, 4, seed=0)
        with pytest.raises(ValueError):
            gru_forward(np.zeros((5, 2)), params)

    def test_deterministic(self):
        rng = np.random.default_rng(3)
        params = init_gru_params(4, 6, seed=5, std=0.3)
        Z = rng.standard_normal((20, 4))
        assert np.array_equal(gru_forward(Z, params), gru_forward(Z, params))


class TestBackward:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(4)
        T, d_in, d = 10, 6, 5
        params = init_gru_params(d_in, d, seed=7, std=0.4)
        Z = rng.standard_normal((T, d_in))
        G = rng.standard_normal((T, d))

        dZ, grads = gru_backward(Z, params, G)

        def loss_with(name, value):
            import dataclasses

            p2 = dataclasses.replace(params, **{name: value})
            return float((gru_forward(Z, p2) * G).sum())

        for name in ("Wz", "Wr", "Wc", "Uz", "Ur", "Uc", "bz", "br", "bc"):
            fd = finite_diff_grad(lambda v, n=name: loss_with(n, v), getattr(params, name))
            assert grad_rel_err(grads[name], fd) < 1e-5, name

        fdZ = finite_diff_grad(lambda z: float((gru_forward(z, params) * G).sum()), Z)
        assert grad_rel_err(dZ, fdZ) < 1e-5

    def test_forward_backward_closure_matches_standalone(self):
        rng = np.random.default_rng(5)
        params = init_gru_params(3, 4, seed=9, std=0.3)
        Z = rng.standard_normal((8, 3))
        G = rng.standard_normal((8, 4))
        H, back = gru_forward_backward(Z, params)
        np.testing.assert_array_equal(H, gru_forward(Z, params))
        dZ1, g1 = back(G)
        dZ2, g2 = gru_backward(Z, params, G)
        np.testing.assert_array_equal(dZ1, dZ2)
        for k in g1:
            np.testing.assert_array_equal(g1[k], g2[k])

    def test_upstream_shape_mismatch(self):
        params = init_gru_params(3, 4, seed=0)
        with pytest.raises(ValueError):
            gru_backward(np.zeros((5, 3)), params, np.zeros((5, 3)))
