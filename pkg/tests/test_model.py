import math

import numpy as np
import pytest

from sedattn.model import (
    ModelConfig,
    SedModel,
    bce_loss,
    binarize,
    frames_to_events,
    load_model,
    save_model,
)
from sedattn.numerics import finite_diff_grad


def grad_rel_err(analytic, fd):
    return (np.abs(analytic - fd) / (1.0 + np.abs(fd))).max()


def small_config(attention, **kw):
    base = dict(n_features=6, hidden_dim=5, n_classes=3, attention=attention,
                width=4, n_heads=3, first_width=2, width_step=3, init_std=0.3, seed=11)
    base.update(kw)
    return ModelConfig(**base)


class TestBce:
    def test_perfect_prediction_near_zero(self):
        Y = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert bce_loss(Y, Y) < 1e-6

    def test_half_probabilities_give_ln2(self):
        P = np.full((4, 3), 0.5)
        Y = np.array([[0, 1, 0], [1, 1, 0], [0, 0, 0], [1, 0, 1]], dtype=float)
        assert bce_loss(P, Y) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_matches_direct_formula(self):
        rng = np.random.default_rng(0)
        P = rng.uniform(0.01, 0.99, (5, 4))
        Y = (rng.uniform(size=(5, 4)) > 0.5).astype(float)
        direct = -np.mean(Y * np.log(P) + (1 - Y) * np.log(1 - P))
        assert bce_loss(P, Y) == pytest.approx(direct, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            bce_loss(np.zeros((2, 2)) + 0.5, np.zeros((2, 3)))


class TestBinarize:
    def test_boundary_uses_greater_equal(self):
        P = np.full((2, 2), 0.5)
        np.testing.assert_array_equal(binarize(P), np.ones((2, 2)))

    def test_below_threshold(self):
        np.testing.assert_array_equal(binarize(np.full((2, 2), 0.49)), np.zeros((2, 2)))

    def test_elementwise(self):
        P = np.array([[0.1, 0.9], [0.5, 0.3]])
        for i in range(2):
            for j in range(2):
                assert binarize(P)[i, j] == (1.0 if P[i, j] >= 0.5 else 0.0)

    def test_idempotent(self):
        rng = np.random.default_rng(1)
        P = rng.uniform(size=(6, 4))
        once = binarize(P)
        np.testing.assert_array_equal(binarize(once), once)

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            binarize(np.zeros((1, 1)), threshold=1.0)


class TestFramesToEvents:
    def test_all_zeros(self):
        assert frames_to_events(np.zeros((20, 3)), 50.0) == []

    def test_single_run_arithmetic(self):
        B = np.zeros((100, 2))
        B[10:60, 0] = 1.0
        events = frames_to_events(B, 50.0)
        assert len(events) == 1
        ev = events[0]
        assert ev.label == "class_0"
        assert ev.onset == pytest.approx(0.2)
        assert ev.offset == pytest.approx(1.2)

    def test_runs_touching_edges(self):
        B = np.zeros((10, 1))
        B[0:3, 0] = 1.0
        B[8:10, 0] = 1.0
        events = frames_to_events(B, 10.0)
        assert [(e.onset, e.offset) for e in events] == [(0.0, 0.3), (0.8, 1.0)]

    def test_round_trip_with_frame_roll(self):
        from sedattn.metrics import events_to_frame_roll

        rng = np.random.default_rng(2)
        B = (rng.uniform(size=(40, 3)) > 0.7).astype(float)
        classes = ("class_0", "class_1", "class_2")
        events = frames_to_events(B, 20.0, classes)
        back = events_to_frame_roll(events, 2.0, 20.0, classes)
        np.testing.assert_array_equal(back, B)


class TestForward:
    def test_zero_output_layer_gives_half(self):
        cfg = small_config("none")
        model = SedModel(cfg)
        model.params["out.W"][:] = 0.0
        model.params["out.b"][:] = 0.0
        rng = np.random.default_rng(3)
        P, _ = model.forward(rng.standard_normal((7, 6)))
        np.testing.assert_array_equal(P, np.full((7, 3), 0.5))

    @pytest.mark.parametrize("attention", ["none", "global", "windowed", "multihead"])
    def test_probabilities_in_open_interval(self, attention):
        model = SedModel(small_config(attention))
        rng = np.random.default_rng(4)
        P, _ = model.forward(rng.standard_normal((10, 6)) * 3)
        assert np.all(P > 0.0) and np.all(P < 1.0)

    def test_feature_dim_mismatch(self):
        model = SedModel(small_config("none"))
        with pytest.raises(ValueError):
            model.forward(np.zeros((5, 7)))

    def test_attention_weights_returned(self):
        model = SedModel(small_config("windowed"))
        rng = np.random.default_rng(5)
        _, attn = model.forward(rng.standard_normal((9, 6)), want_attention=True)
        assert attn is not None
        np.testing.assert_allclose(attn.row_sums(), 1.0, atol=1e-12)

    def test_multihead_returns_per_head_weights(self):
        model = SedModel(small_config("multihead"))
        rng = np.random.default_rng(6)
        _, attn = model.forward(rng.standard_normal((9, 6)), want_attention=True)
        assert isinstance(attn, list) and len(attn) == 3

    def test_baseline_differs_from_attention_only_in_attention_params(self):
        base = SedModel(small_config("none"))
        wind = SedModel(small_config("windowed"))
        for name, arr in base.params.items():
            np.testing.assert_array_equal(arr, wind.params[name])
        extra = set(wind.params) - set(base.params)
        assert extra == {"attn.v", "attn.W"}


class TestFullPipelineGradients:
    @pytest.mark.parametrize("attention", ["none", "global", "windowed", "multihead"])
    def test_loss_gradients_match_finite_differences(self, attention):
        cfg = small_config(attention)
        model = SedModel(cfg)
        rng = np.random.default_rng(7)
        T = 10
        X = rng.standard_normal((T, cfg.n_features))
        Y = (rng.uniform(size=(T, cfg.n_classes)) > 0.5).astype(float)
        loss, grads = model.loss_and_grads(X, Y)
        assert set(grads) == set(model.params)

        for name in sorted(model.params):
            def f(value, n=name):
                saved = model.params[n]
                model.params[n] = value
                try:
                    P, _ = model.forward(X)
                    return bce_loss(P, Y)
                finally:
                    model.params[n] = saved

            fd = finite_diff_grad(f, model.params[name])
            assert grad_rel_err(grads[name], fd) < 1e-5, name


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        model = SedModel(small_config("multihead"))
        # make values less tidy than the initializer's
        rng = np.random.default_rng(8)
        for name in model.params:
            model.params[name] = model.params[name] + rng.standard_normal(
                model.params[name].shape) * 1e-3
        path = tmp_path / "model.json"
        save_model(model, path)
        back = load_model(path)
        assert back.config == model.config
        assert set(back.params) == set(model.params)
        for name in model.params:
            assert np.array_equal(back.params[name], model.params[name]), name

    def test_rejects_non_checkpoint(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text("{}")
        with pytest.raises(ValueError):
            load_model(path)


class TestConfigValidation:
    def test_threshold_bounds(self):
        with pytest.raises(ValueError):
            ModelConfig(threshold=0.0)

    def test_unknown_variant(self):
        with pytest.raises(ValueError):
            ModelConfig(attention="fancy")
