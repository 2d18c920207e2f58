import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from sedattn.estimator import SedDetector
from sedattn.soundscapes import SoundscapeConfig, clip_frame_targets, generate_dataset


@pytest.fixture(scope="module")
def tiny_data():
    cfg = SoundscapeConfig(clip_duration=2.0, frame_rate=25.0, n_features=8,
                           n_classes=2, min_events=1, max_events=2,
                           min_duration=0.3, max_duration=1.0,
                           noise_level=0.2, white_noise_level=0.1, snr=3.0, seed=21)
    data = generate_dataset(cfg, n_train=10, n_val=4, n_test=4)
    to_xy = lambda clips: ([c.features for c in clips],
                           [clip_frame_targets(c, cfg.class_names) for c in clips])
    return cfg, to_xy(data.train), to_xy(data.val), to_xy(data.test)


def tiny_detector(**kw):
    args = dict(attention="windowed", width=6, hidden_dim=6, epochs=3, lr=0.01,
                frame_rate=25.0, seed=4)
    args.update(kw)
    return SedDetector(**args)


class TestSklearnContract:
    def test_get_set_params_round_trip(self):
        det = tiny_detector()
        params = det.get_params()
        assert params["width"] == 6 and params["attention"] == "windowed"
        det.set_params(width=10)
        assert det.width == 10

    def test_clone(self):
        det = tiny_detector(width=12)
        twin = clone(det)
        assert twin.get_params() == det.get_params()

    def test_not_fitted_error(self):
        with pytest.raises(NotFittedError):
            tiny_detector().predict([np.zeros((5, 8))])


class TestFitPredict:
    def test_fit_predict_shapes(self, tiny_data):
        cfg, (Xtr, ytr), (Xv, yv), (Xte, yte) = tiny_data
        det = tiny_detector().fit(Xtr, ytr, X_val=Xv, y_val=yv)
        assert det.n_features_in_ == 8 and det.n_classes_ == 2
        probas = det.predict_proba(Xte)
        assert len(probas) == len(Xte)
        for X, P in zip(Xte, probas):
            assert P.shape == (X.shape[0], 2)
            assert np.all((P > 0) & (P < 1))
        rolls = det.predict(Xte)
        assert all(np.isin(r, (0.0, 1.0)).all() for r in rolls)
        assert len(det.history_.val_f1) == 3

    def test_predict_events_labels(self, tiny_data):
        cfg, (Xtr, ytr), _, (Xte, _) = tiny_data
        det = tiny_detector(epochs=2).fit(Xtr, ytr)
        events = det.predict_events(Xte, classes=cfg.class_names)
        assert len(events) == len(Xte)
        for clip_events in events:
            for ev in clip_events:
                assert ev.label in cfg.class_names

    def test_score_in_unit_interval(self, tiny_data):
        _, (Xtr, ytr), _, (Xte, yte) = tiny_data
        det = tiny_detector(epochs=2).fit(Xtr, ytr)
        s = det.score(Xte, yte)
        assert 0.0 <= s <= 1.0

    def test_deterministic_given_seed(self, tiny_data):
        _, (Xtr, ytr), _, _ = tiny_data
        a = tiny_detector(seed=9).fit(Xtr, ytr)
        b = tiny_detector(seed=9).fit(Xtr, ytr)
        for name in a.model_.params:
            assert np.array_equal(a.model_.params[name], b.model_.params[name])

    def test_attention_weights_exposed(self, tiny_data):
        _, (Xtr, ytr), _, (Xte, _) = tiny_data
        det = tiny_detector(epochs=1).fit(Xtr, ytr)
        w = det.attention_weights(Xte[0])
        assert w is not None
        np.testing.assert_allclose(w.row_sums(), 1.0, atol=1e-12)
        baseline = tiny_detector(attention="none", epochs=1).fit(Xtr, ytr)
        assert baseline.attention_weights(Xte[0]) is None


class TestValidation:
    def test_mismatched_lengths(self, tiny_data):
        _, (Xtr, ytr), _, _ = tiny_data
        with pytest.raises(ValueError):
            tiny_detector().fit(Xtr, ytr[:-1])

    def test_wrong_roll_shape(self, tiny_data):
        _, (Xtr, ytr), _, _ = tiny_data
        bad = [y[:-1] for y in ytr]
        with pytest.raises(ValueError):
            tiny_detector().fit(Xtr, bad)

    def test_non_binary_targets(self, tiny_data):
        _, (Xtr, ytr), _, _ = tiny_data
        bad = [y + 0.25 for y in ytr]
        with pytest.raises(ValueError):
            tiny_detector().fit(Xtr, bad)

    def test_inconsistent_feature_dims(self):
        with pytest.raises(ValueError):
            tiny_detector().fit([np.zeros((5, 8)), np.zeros((5, 7))],
                                [np.zeros((5, 2)), np.zeros((5, 2))])

    def test_val_requires_both_arguments(self, tiny_data):
        _, (Xtr, ytr), (Xv, yv), _ = tiny_data
        with pytest.raises(ValueError):
            tiny_detector().fit(Xtr, ytr, X_val=Xv)
