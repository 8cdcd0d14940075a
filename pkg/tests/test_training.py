"""Training-machinery tests at toy scale: loss identities, staging, determinism.

Quality metrics of fully trained models live in the acceptance suite; these
tests cover the mechanics with a few iterations each.
"""

import math

import numpy as np
import pytest

import vtp.numerics as N
from vtp import dataset as ds
from vtp import models as M
from vtp import simworld as sw
from vtp import training as T
from vtp.models import ModelBundle
from vtp.numerics import Tensor


@pytest.fixture(scope="module")
def episodes():
    return [sw.gen_episode("blockworld", s) for s in range(24)]


@pytest.fixture(scope="module")
def data(episodes):
    return episodes[:18], episodes[18:]


def small_cfg(iters=3, **kw):
    kw.setdefault("eval_interval", 1)
    kw.setdefault("patience", 1000)
    return T.TrainConfig(iterations=iters, batch=8, seed=3, **kw)


def test_config_validation():
    with pytest.raises(ValueError):
        T.LossConfig(lam=-0.1)
    with pytest.raises(ValueError):
        T.LossConfig(mode="adversarial")
    with pytest.raises(ValueError):
        T.LossConfig(lam=0.01, mode="naive")
    with pytest.raises(ValueError):
        T.TrainConfig(iterations=0)


def test_classifier_initial_loss_is_log_a(data):
    # chance level analytically equals ln A for uniform logits; random small
    # init logits can only push expected cross-entropy slightly above that
    bundle = ModelBundle("blockworld", seed=0)
    metrics = T.train_classifier(data, small_cfg(1), bundle)
    first_loss = metrics["curve"][0][1]
    assert math.log(32) - 0.2 < first_loss < math.log(32) + 0.6


def test_classifier_empty_data_raises():
    bundle = ModelBundle("blockworld", seed=0)
    with pytest.raises(T.StageError):
        T.train_classifier(([], []), small_cfg(), bundle)


def test_stage_prerequisites_enforced(data):
    bundle = ModelBundle("blockworld", seed=0)
    with pytest.raises(T.StageError, match="autoencoder"):
        T.train_transform(data, small_cfg(), T.LossConfig(), bundle)
    with pytest.raises(T.StageError, match="encoder"):
        T.train_value_heads(data, small_cfg(), bundle)
    bundle.trained.add("autoencoder")
    with pytest.raises(T.StageError, match="classifier"):
        T.train_transform(data, small_cfg(),
                          T.LossConfig(lam=0.001, mode="linked"), bundle)


def test_training_stage_reproducible(data):
    def run():
        bundle = ModelBundle("blockworld", seed=1)
        T.train_classifier(data, small_cfg(3), bundle)
        return {k: t.data.copy() for k, t in bundle["classifier"].params.items()}

    a, b = run(), run()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def windows_batch(episodes, n=6):
    windows = ds.transform_windows(episodes, success_only=True)
    return ds.gather_transform_batch(episodes, windows, list(range(n)))


def hiddens_for(bundle, batch):
    with N.no_grad():
        h0 = M.encoder_forward(bundle["encoder"], Tensor(batch["x0"])).data
        hi = M.encoder_forward(bundle["encoder"], Tensor(batch["xi"])).data
    return h0, hi


def test_transform_loss_naive_reduces_to_l1(episodes):
    bundle = ModelBundle("blockworld", seed=2)
    batch = windows_batch(episodes)
    h0, hi = hiddens_for(bundle, batch)
    with N.no_grad():
        loss, x1_hat, x2_hat = T.transform_loss(
            batch, bundle, T.LossConfig(mode="naive"), Tensor(h0), Tensor(hi))
        direct = N.l1_loss(Tensor(x1_hat.data), Tensor(batch["xt1"]))
    assert x2_hat is None
    assert loss.item() == pytest.approx(direct.item(), abs=1e-7)


def test_transform_loss_linked_terms_sum(episodes):
    # the linked loss equals its three independently recomputed terms
    bundle = ModelBundle("blockworld", seed=4)
    bundle.trained.update({"autoencoder", "classifier"})
    batch = windows_batch(episodes)
    h0, hi = hiddens_for(bundle, batch)
    lam = 0.01
    with N.no_grad():
        loss, x1_hat, x2_hat = T.transform_loss(
            batch, bundle, T.LossConfig(lam=lam, mode="linked"),
            Tensor(h0), Tensor(hi))
        term1 = N.l1_loss(Tensor(x1_hat.data), Tensor(batch["xt1"])).item()
        term2 = N.l1_loss(Tensor(x2_hat.data), Tensor(batch["xt2"])).item()
        logits = M.classifier_forward(bundle["classifier"], Tensor(x2_hat.data))
        term3 = N.cross_entropy(logits, batch["a2"]).item()
    assert loss.item() == pytest.approx(term1 + term2 + lam * term3, rel=1e-5)


def test_transform_loss_perfect_prediction_is_zero(episodes):
    bundle = ModelBundle("blockworld", seed=2)
    batch = windows_batch(episodes)
    batch = dict(batch)
    with N.no_grad():
        h0, hi = hiddens_for(bundle, batch)
        _, x1_hat, x2_hat = T.transform_loss(
            batch, bundle, T.LossConfig(mode="linked"), Tensor(h0), Tensor(hi))
    # feed the model's own predictions back as targets
    batch["xt1"] = x1_hat.data.copy()
    batch["xt2"] = x2_hat.data.copy()
    with N.no_grad():
        loss, _, _ = T.transform_loss(batch, bundle, T.LossConfig(mode="linked"),
                                      Tensor(h0), Tensor(hi))
    assert loss.item() == pytest.approx(0.0, abs=1e-7)


def test_transform_gradient_nonzero_at_init(episodes):
    bundle = ModelBundle("blockworld", seed=5)
    batch = windows_batch(episodes)
    h0, hi = hiddens_for(bundle, batch)
    tr = bundle["transform"]
    tr.zero_grad()
    loss, _, _ = T.transform_loss(batch, bundle, T.LossConfig(mode="linked"),
                                  Tensor(h0), Tensor(hi))
    loss.backward()
    total = sum(float(np.abs(t.grad).sum()) for t in tr.params.values()
                if t.grad is not None)
    assert total > 0


def test_value_head_training_runs_and_marks_stage(data):
    bundle = ModelBundle("blockworld", seed=6)
    bundle.trained.add("autoencoder")
    metrics = T.train_value_heads(data, small_cfg(2), bundle)
    assert metrics["stage"] == "values"
    assert "values" in bundle.trained


def test_all_success_degenerate_value_labels(episodes):
    # keep only successful episodes: V should drift toward 1 everywhere
    succ = [e for e in episodes if e.success][:8]
    bundle = ModelBundle("blockworld", seed=7)
    bundle.trained.add("autoencoder")
    cfg = small_cfg(60, eval_interval=30)
    T.train_value_heads((succ, succ[:2]), cfg, bundle)
    h = bundle.encode(ds.frames_float(succ[0].frames[0]))
    assert bundle.value(h) > 0.5


def test_eval_recognizability_perfect_prediction_oracle(data, monkeypatch):
    # oracle substitution: targets fed as predictions -> MAE 0 and the
    # label rate equals the classifier's accuracy on those frames
    train_eps, val_eps = data
    bundle = ModelBundle("blockworld", seed=8)

    def perfect(batch, bnd, loss_cfg, h0, hi, **kw):
        return (Tensor(np.zeros(())), Tensor(batch["xt1"]), Tensor(batch["xt2"]))

    monkeypatch.setattr(T, "transform_loss", perfect)
    report = T.eval_recognizability(bundle, val_eps, subset="success")
    assert report["x1_mae"] == 0.0 and report["x2_mae"] == 0.0
    windows = ds.transform_windows(val_eps, success_only=True)
    hits1 = 0
    for e, i in windows:
        x = ds.frames_float(val_eps[e].frames[i + 1])
        pred = int(np.argmax(bundle.classify_action(x)))
        hits1 += pred == int(val_eps[e].actions[i + 1])
    assert report["x1_label"] == pytest.approx(hits1 / len(windows))


def test_eval_recognizability_rejects_bad_subset(data):
    bundle = ModelBundle("blockworld", seed=9)
    with pytest.raises(ValueError):
        T.eval_recognizability(bundle, data[1], subset="everything")


def test_write_report_and_curve(tmp_path):
    metrics = {"stage": "transform", "iterations": 10, "seed": 0,
               "x1_label": 0.9, "extra": 1.5, "curve": [(1, 0.5, 0.4)]}
    T.write_report(tmp_path / "r.json", metrics)
    import json
    payload = json.loads((tmp_path / "r.json").read_text())
    assert payload["x1_label"] == 0.9
    assert payload["extra"] == 1.5
    assert payload["v_acc"] is None
    assert "curve" not in payload
    T.write_curve(tmp_path / "c.csv", [(1, 0.5, 0.4), (2, 0.4, 0.35)])
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "iteration,loss,val_metric"
    assert len(lines) == 3


def test_encode_all_frames_offsets(data):
    train_eps, _ = data
    bundle = ModelBundle("blockworld", seed=10)
    encodings, offsets = T.encode_all_frames(bundle, train_eps[:3])
    total = sum(ep.n_frames for ep in train_eps[:3])
    assert encodings.shape == (total,) + M.HIDDEN_SHAPE
    # row for episode 1 frame 2 equals a direct single encode
    direct = bundle.encode(ds.frames_float(train_eps[1].frames[2]))
    np.testing.assert_allclose(encodings[offsets[1] + 2], direct, atol=1e-6)
