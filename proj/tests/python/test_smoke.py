import json
import os
from pathlib import Path

import numpy as np
import pytest

import fmdroid

FIXTURES = Path(os.environ.get("FMDROID_FIXTURES", Path(__file__).resolve().parent.parent / "fixtures"))


def small_corpus(n=300, seed=42):
    spec = json.loads(fmdroid.default_corpus_spec())
    spec["n_apps"] = n
    spec["seed"] = seed
    return fmdroid.generate_corpus(json.dumps(spec))


def test_version():
    assert fmdroid.__version__


def test_factorized_score_matches_bruteforce():
    ds, _ = small_corpus(60)
    cfg = fmdroid.TrainConfig()
    cfg.epochs = 3
    cfg.k = 4
    model = fmdroid.train(ds, cfg)
    assert model.parameter_count == 1 + ds.dim + ds.dim * 4
    assert model.v.shape == (ds.dim, 4)
    for x in ds.vectors[:20]:
        assert abs(model.predict_raw(x) - model.predict_bruteforce(x)) <= 1e-9


def test_fm_learns_planted_pairs():
    ds, _ = small_corpus(2000)
    train_rows, test_rows = fmdroid.split_train_test(ds.labels, 0.2, 0)
    train_ds, test_ds = ds.subset(train_rows), ds.subset(test_rows)
    cfg = fmdroid.TrainConfig()
    cfg.learning_rate = 0.003
    cfg.l2_w = 1.0
    cfg.l2_v = 0.005
    model = fmdroid.train(train_ds, cfg)
    probs = model.predict_all(test_ds)
    preds = [1 if p >= 0.5 else -1 for p in probs]
    m = fmdroid.metrics(test_ds.labels, preds)
    assert m["accuracy"] >= 0.95
    assert fmdroid.auc(test_ds.labels, probs) >= 0.98
    assert m["tp"] + m["tn"] + m["fp"] + m["fn"] == len(test_ds)


def test_partial_mask_and_persistence(tmp_path):
    ds, vocab = small_corpus(80)
    cfg = fmdroid.TrainConfig()
    cfg.epochs = 2
    model = fmdroid.train(ds, cfg, mask="partial", allow=[("used_perm", "perm")], vocab=vocab)
    model.save(tmp_path / "m.fm")
    back = fmdroid.FmModel.load(tmp_path / "m.fm")
    assert back == model
    np.testing.assert_array_equal(back.w, model.w)
    ds.save(tmp_path / "d.txt")
    assert fmdroid.Dataset.load(tmp_path / "d.txt") == ds


def test_fixture_extraction():
    for name in ("tiny_sms_app", "flashlight", "loader"):
        bundle = FIXTURES / "bundles" / name
        expected = (bundle / "expected.tokens").read_text().split()
        assert fmdroid.extract_bundle(bundle, FIXTURES / "dicts") == sorted(expected)


def test_vocabulary_round_trip(tmp_path):
    ds, vocab = small_corpus(50)
    x = ds.vectors[0]
    assert vocab.encode(vocab.decode(x)) == x
    vocab.save(tmp_path / "v.txt")
    assert fmdroid.Vocabulary.load(tmp_path / "v.txt").tokens() == vocab.tokens()


def test_errors_carry_kind(tmp_path):
    with pytest.raises(fmdroid.FmdroidError, match="^missing_dictionary: "):
        fmdroid.extract_bundle(FIXTURES / "bundles" / "flashlight", tmp_path)
    with pytest.raises(fmdroid.FmdroidError, match="^io: "):
        fmdroid.Dataset.load(tmp_path / "missing.txt")
    with pytest.raises(fmdroid.FmdroidError):
        fmdroid.SparseVector([3, 1], 5)


def test_kfold_is_a_partition():
    ds, _ = small_corpus(100)
    folds = fmdroid.stratified_kfold(ds.labels, 5, 1)
    rows = sorted(r for f in folds for r in f)
    assert rows == list(range(len(ds)))
