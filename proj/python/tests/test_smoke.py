import numpy as np
import pytest

import hasqa


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    (root / "train.jsonl").write_text(hasqa.synthetic_jsonl(40, 8, seed=3, prefix="t"))
    (root / "dev.jsonl").write_text(hasqa.synthetic_jsonl(12, 8, seed=4, prefix="d"))
    vocab = hasqa.Vocabulary.from_file(root / "train.jsonl")
    config = hasqa.TrainConfig(epochs=4, L=6, D=16, E=16, M=8, F=32)
    train = hasqa.Dataset.load(root / "train.jsonl", config.seq_len, vocab)
    dev = hasqa.Dataset.load(root / "dev.jsonl", config.seq_len, vocab)
    return root, vocab, config, train, dev


def test_memory_report():
    r = hasqa.memory_report(768, 200, 1)
    assert r["float_bytes"] == 614400
    assert r["binary_bytes"] == 19200
    assert r["ratio"] == 32.0


def test_hashing_round_trip():
    rng = np.random.default_rng(0)
    h = rng.normal(size=(5, 7))
    b = hasqa.soft_binarize(h, 5.0)
    np.testing.assert_allclose(b, np.tanh(5.0 * h))
    code = hasqa.hard_binarize(b)
    assert set(np.unique(code)) <= {-1.0, 1.0}
    np.testing.assert_array_equal(code, np.where(h >= 0, 1.0, -1.0))
    payload = hasqa.pack_bits(code)
    assert len(payload) == (35 + 7) // 8
    np.testing.assert_array_equal(hasqa.unpack_bits(payload, 5, 7), code)


def test_train_index_rank(corpus, tmp_path):
    _, vocab, config, train, dev = corpus
    seen = []
    model, history, best = hasqa.train(config, vocab, train, dev, on_epoch=seen.append)
    assert len(history) == config.epochs == len(seen)
    assert 1 <= best <= config.epochs

    store = hasqa.CodeStore.build(model, dev)
    assert len(store) == dev.answer_count
    assert store.rows == config.model_dim and store.cols == config.seq_len
    store.save(tmp_path / "codes.hasb")
    assert hasqa.CodeStore.load(tmp_path / "codes.hasb") == store
    assert hasqa.CodeStore.from_bytes(store.to_bytes()) == store

    model.save(tmp_path / "model.hasp")
    reloaded = hasqa.Model.load(tmp_path / "model.hasp")
    ranked = hasqa.rank(reloaded, store, "t001 t002", vocab)
    assert len(ranked) == len(store)
    scores = [s for _, s in ranked]
    assert scores == sorted(scores, reverse=True)
    assert hasqa.rank(model, store, "t001 t002", vocab, threads=3) == ranked

    metrics = hasqa.evaluate(model, store, dev)
    assert 0.0 <= metrics["p1"] <= metrics["mrr"] <= 1.0


def test_model_outputs(corpus):
    _, vocab, config, _, _ = corpus
    model = hasqa.Model.init(config, len(vocab), 1)
    assert model.encode("t001 t002", vocab).shape == (config.model_dim, config.seq_len)
    soft = model.soft_code("t001", vocab)
    np.testing.assert_allclose(soft, np.tanh(model.beta * model.encode("t001", vocab)), rtol=1e-5)
    code = model.hard_code("t001", vocab)
    np.testing.assert_array_equal(code, np.where(soft >= 0, 1.0, -1.0))


def test_grad_check():
    errors = hasqa.grad_check(points=2)
    assert errors and all(v <= 1e-4 for v in errors.values())


def test_errors(tmp_path):
    bad = tmp_path / "bad.hasb"
    bad.write_bytes(b"HASX")
    with pytest.raises(hasqa.FormatError, match="offset"):
        hasqa.CodeStore.load(bad)
    with pytest.raises(hasqa.InputError):
        hasqa.TrainConfig(colour=1)
    with pytest.raises(hasqa.ParseError):
        hasqa.TrainConfig.parse("beta=5\nbroken\n")
    config = hasqa.TrainConfig()
    config.beta = 3.0
    with pytest.raises(hasqa.Error):
        config.validate()
