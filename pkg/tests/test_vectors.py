import numpy as np
import pytest

from oracles import numeric_grad_check
from sepsis_pathways import _mlp
from sepsis_pathways.synthcohort import rank2_ternary
from sepsis_pathways.textproc import Polarity
from sepsis_pathways.timeline import Stage, StageSeries
from sepsis_pathways.vectors import (
    AutoencoderConfig,
    AutoencoderModel,
    ConceptVocabulary,
    TrainingDivergedError,
    build_ternary_vector,
    build_vocabulary,
    encode,
    from_sparse,
    new_autoencoder,
    reconstruct,
    reconstruction_mse,
    to_sparse,
    train_autoencoder,
)

P, N = Polarity.POSITIVE, Polarity.NEGATIVE


def series(pid, *maps):
    return StageSeries(pid, [Stage(i + 1, i + 1, i + 1, m) for i, m in enumerate(maps)], None, len(maps))


def test_vocabulary_ignores_polarity():
    v = build_vocabulary([series("a", {"fever": P}, {"fever": N, "uti": P})])
    assert v.cuis == ("fever", "uti")


def test_vocabulary_union():
    v = build_vocabulary([series("a", {c: P for c in "abc"}), series("b", {c: N for c in "defg"})])
    assert len(v) == 7


def test_vocabulary_empty_corpus():
    with pytest.raises(ValueError):
        build_vocabulary([series("a", {})])


def test_ternary_encoding():
    v = ConceptVocabulary(("chest pain", "fever", "uti"))
    assert build_ternary_vector({"fever": P, "chest pain": N}, v).tolist() == [-1, 1, 0]
    assert build_ternary_vector({}, v).tolist() == [0, 0, 0]
    assert build_ternary_vector({c: P for c in v.cuis}, v).tolist() == [1, 1, 1]
    with pytest.raises(KeyError):
        build_ternary_vector({"sepsis": P}, v)


def test_sparse_roundtrip():
    vec = np.array([0, 1, 0, -1, 0], dtype=np.int8)
    assert to_sparse(vec) == "1:1 3:-1"
    assert from_sparse(to_sparse(vec), 5).tolist() == vec.tolist()


def test_gradient_check_tiny_network():
    rng = np.random.default_rng(0)
    model = new_autoencoder(6, AutoencoderConfig(latent=2, hidden=[8], seed=1))
    assert model.sizes == [6, 8, 2, 8, 6]
    x = rng.integers(-1, 2, size=(3, 6)).astype(float)
    assert numeric_grad_check(model, x) <= 1e-4


def test_identity_is_learnable_at_full_width():
    rng = np.random.default_rng(0)
    x = rng.integers(-1, 2, size=(10, 6)).astype(float)
    cfg = AutoencoderConfig(latent=6, hidden=[], activation="linear", epochs=3000, learning_rate=0.01, batch_size=10)
    model = train_autoencoder(x, cfg)
    assert model.loss_curve[-1] < 1e-3


def test_rank2_training_halves_loss_and_keeps_signs():
    x = rank2_ternary(500, 64, seed=0).astype(float)
    model = train_autoencoder(x, AutoencoderConfig(latent=8, epochs=200, seed=0))
    assert model.loss_curve[-1] < 0.5 * model.loss_curve[0]
    assert all(np.isfinite(model.loss_curve))
    nz = x != 0
    agree = np.sign(reconstruct(model, x))[nz] == x[nz]
    assert agree.mean() >= 0.9


def test_encode_is_deterministic_and_batch_independent():
    x = rank2_ternary(20, 12, seed=2).astype(float)
    model = train_autoencoder(x, AutoencoderConfig(latent=3, epochs=5))
    z = encode(model, x)
    assert z.shape == (20, 3)
    assert np.array_equal(z, encode(model, x))
    assert np.allclose(z[5], encode(model, x[5]))
    assert np.isfinite(reconstruct(model, np.zeros(12))).all()
    with pytest.raises(ValueError):
        encode(model, np.zeros(11))


def test_zero_initialized_linear_encoder_maps_zero_to_zero():
    model = new_autoencoder(5, AutoencoderConfig(latent=2, hidden=[], activation="linear", init="zeros"))
    assert np.array_equal(encode(model, np.zeros(5)), np.zeros(2))


def test_training_is_seeded():
    x = rank2_ternary(50, 10, seed=1).astype(float)
    a = train_autoencoder(x, AutoencoderConfig(latent=2, epochs=10, seed=4))
    b = train_autoencoder(x, AutoencoderConfig(latent=2, epochs=10, seed=4))
    assert a.loss_curve == b.loss_curve


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_is_reported():
    x = rank2_ternary(50, 10, seed=1).astype(float) * 1e200
    with pytest.raises(TrainingDivergedError, match="non-finite"):
        train_autoencoder(x, AutoencoderConfig(latent=2, epochs=3, optimizer="sgd", learning_rate=1.0))


def test_model_json_roundtrip(tmp_path):
    x = rank2_ternary(30, 8, seed=1).astype(float)
    model = train_autoencoder(x, AutoencoderConfig(latent=2, epochs=2))
    model.save(tmp_path / "ae.json")
    back = AutoencoderModel.load(tmp_path / "ae.json")
    assert np.array_equal(encode(back, x), encode(model, x))
    assert back.loss_curve == model.loss_curve
    assert reconstruction_mse(back, x) == reconstruction_mse(model, x)


def test_latent_larger_than_input_rejected():
    with pytest.raises(ValueError):
        train_autoencoder(np.zeros((3, 4)), AutoencoderConfig(latent=5))


def test_adam_step_direction():
    p = [np.array([1.0])]
    opt = _mlp.Optimizer(p, "adam", lr=0.1)
    opt.step([np.array([2.0])])
    assert p[0][0] == pytest.approx(0.9)
