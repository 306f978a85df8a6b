"""End-to-end smoke of the python bindings on tiny inputs."""

import math

import numpy as np
import pytest

import ietnet


def tiny_model():
    cfg = ietnet.ModelConfig()
    cfg.channels = 3
    cfg.classes = 2
    cfg.tcn_filters = 4
    cfg.d_model = 4
    cfg.dilations = [1, 2]
    cfg.dropout = 0.0
    cfg.validate()
    return cfg


def separable_batch(n, channels, t, seed):
    """Class 1 carries a sine on channel 0; class 0 is pure noise."""
    rng = np.random.default_rng(seed)
    x = rng.normal(0.0, 0.3, size=(n, channels, t)).astype(np.float32)
    y = [i % 2 for i in range(n)]
    wave = np.sin(np.linspace(0.0, 8.0 * np.pi, t), dtype=np.float32)
    for i, label in enumerate(y):
        if label == 1:
            x[i, 0] += 2.0 * wave
    return x, y


def test_simulator_conserves_momentum():
    rec = ietnet.simulate_nbody(masses=[1.0, 0.5], steps=200, seed=3)
    assert rec["positions"].shape == (200, 2, 2)
    assert rec["velocities"].shape == (200, 2, 2)
    assert rec["momentum_drift"] < 1e-8
    assert rec["energy_drift"] < 1e-2


def test_simulator_is_deterministic():
    a = ietnet.simulate_nbody(masses=[1.0, 0.5, 0.25], steps=50, seed=9)
    b = ietnet.simulate_nbody(masses=[1.0, 0.5, 0.25], steps=50, seed=9)
    np.testing.assert_array_equal(a["positions"], b["positions"])


def test_dataset_roundtrip(tmp_path):
    d = ietnet.build_nbody_dataset(n_train=4, n_val=2, n_test=2, seed=1, steps=64)
    assert d.X.shape == (8, 8, 64)
    assert d.ground_truth == {1: [0, 1, 2, 3]}
    assert sorted(set(d.split)) == ["test", "train", "val"]

    ietnet.save_dataset(d, str(tmp_path / "ds"))
    back = ietnet.load_dataset(str(tmp_path / "ds"))
    np.testing.assert_array_equal(back.X, d.X)
    assert back.y == d.y
    assert back.channel_names == d.channel_names
    assert back.norm_mean == pytest.approx(d.norm_mean)


def test_csv_roundtrip(tmp_path):
    d = ietnet.build_nbody_dataset(n_train=2, n_val=1, n_test=1, seed=2, steps=32)
    csv = str(tmp_path / "d.csv")
    meta = str(tmp_path / "d.json")
    ietnet.export_csv(d, csv, meta)
    back = ietnet.import_csv(csv, meta, normalize=False)
    np.testing.assert_allclose(back.X, d.X, atol=1e-5)
    assert back.ground_truth == d.ground_truth


def test_drop_channels_remaps_ground_truth():
    d = ietnet.build_nbody_dataset(n_train=2, n_val=1, n_test=1, seed=2, steps=32)
    kept = ietnet.drop_channels(d, ["x1"])
    assert kept.X.shape[1] == 7
    assert kept.ground_truth == {1: [0, 1, 2]}
    gone = ietnet.drop_channels(d, ["x1", "x2", "y1", "y2"])
    assert gone.ground_truth == {}


def test_fit_eval_checkpoint_roundtrip(tmp_path):
    cfg = tiny_model()
    x_train, y_train = separable_batch(24, cfg.channels, 64, seed=0)
    x_val, y_val = separable_batch(8, cfg.channels, 64, seed=1)

    tcfg = ietnet.TrainConfig()
    tcfg.epochs = 6
    tcfg.batch_size = 8
    tcfg.micro_batch = 4
    tcfg.patience = 6
    tcfg.warmup = 4
    tcfg.lr_max = 3e-3
    tcfg.seed = 5

    seen = []
    ck, history, stop = ietnet.fit(
        cfg, tcfg, x_train, y_train, x_val, y_val, on_epoch=seen.append
    )
    assert stop in ("max_epochs", "early_stop")
    assert len(history) == len(seen) == 6
    assert history[0]["epoch"] == 1
    assert all(math.isfinite(rec["val_loss"]) for rec in history)

    probs, gate, features = ietnet.run_eval(ck, x_val)
    assert probs.shape == (8, 2)
    assert gate.shape == (8, 3, 2)
    assert features.shape == (8, 3, 4)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-5)
    # Gate columns are distributions over channels.
    np.testing.assert_allclose(gate.sum(axis=1), 1.0, atol=1e-5)

    path = str(tmp_path / "model.ckpt")
    ck.save(path)
    back = ietnet.load_checkpoint(path)
    probs2, _, _ = ietnet.run_eval(back, x_val)
    np.testing.assert_array_equal(probs, probs2)
    assert back.seed == 5
    assert back.best_epoch == ck.best_epoch


def test_metrics_agree_with_numpy():
    scores = [0.1, 0.4, 0.35, 0.8]
    labels = [0, 0, 1, 1]
    auc = ietnet.roc_auc(scores, labels)
    assert auc == pytest.approx(0.75)
    curve = ietnet.roc_curve(scores, labels)
    assert curve["auc"] == pytest.approx(auc)
    assert math.isinf(curve["thresholds"][0])

    conf = ietnet.confusion_at(scores, labels, 0.375)
    assert (conf["tp"], conf["fp"], conf["tn"], conf["fn"]) == (1, 1, 1, 1)
    assert conf["accuracy"] == pytest.approx(0.5)

    thr = ietnet.youden_threshold(scores, labels)
    best = ietnet.confusion_at(scores, labels, thr)
    assert best["tp"] + best["tn"] >= conf["tp"] + conf["tn"]


def test_attribution_report_on_planted_gate():
    # Two samples predicted class 1; its ground truth is channels {0, 1}.
    gate = np.zeros((2, 4, 2), dtype=np.float32)
    gate[:, :, 0] = 0.25
    gate[0, :, 1] = [0.5, 0.3, 0.1, 0.1]  # both hits ranked first
    gate[1, :, 1] = [0.4, 0.1, 0.4, 0.1]  # one miss in the top 2
    predicted = [1, 1]
    report = ietnet.map_at_k_report(gate, predicted, {1: [0, 1]}, clip_norm=True)
    assert report["ks"] == [1, 2]
    assert report["samples"] == 2
    assert report["mean"][0] == pytest.approx(1.0)

    heat = ietnet.aggregate_gate(gate, predicted, 2)
    assert heat["classes"] == [1]
    assert heat["empty_classes"] == [0]
    assert heat["mean_gate"][0][0] == pytest.approx(0.45)

    assert ietnet.predict_labels(gate[:, 0, :].copy()) == [1, 1]
    cm = ietnet.confusion_matrix([1, 1], predicted, 2)
    assert cm == [[0, 0], [0, 2]]


def test_ap_at_k_matches_hand_computation():
    # Ranking by score: ch2, ch0, ch3, ch1; truth {0, 2}.
    ap2 = ietnet.ap_at_k([0.3, 0.05, 0.5, 0.15], [0, 2], 2, clip_norm=True)
    assert ap2 == pytest.approx((1.0 + 1.0) / 2.0)
    ap3 = ietnet.ap_at_k([0.3, 0.05, 0.5, 0.15], [0, 2], 3, clip_norm=True)
    assert ap3 == pytest.approx(1.0)
