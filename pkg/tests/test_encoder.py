import math

import numpy as np
import pytest

from cardiorag.encoder import (DEFAULT_ARCHITECTURE, EncoderWeights,
                               LatentEmbedding, _forward, embed,
                               kl_divergence, load_weights, random_weights,
                               save_weights, tensor_shapes)
from cardiorag.errors import BadMagic, ShapeMismatch, TruncatedFile
from cardiorag.records import EcgRecord, Label, Sex, Source


def _zero_weights():
    """All conv/head weights and biases zero, batch norm set to identity."""
    tensors = {}
    for name, shape in tensor_shapes(DEFAULT_ARCHITECTURE).items():
        if name.endswith((".gamma", ".running_var")):
            tensors[name] = np.ones(shape, dtype=np.float32)
        else:
            tensors[name] = np.zeros(shape, dtype=np.float32)
    return EncoderWeights(architecture=DEFAULT_ARCHITECTURE, tensors=tensors)


def _record(seed=0):
    rng = np.random.default_rng(seed)
    return EcgRecord("enc", Source.SYNTHETIC,
                     rng.normal(0, 0.5, (12, 2800)).astype(np.float32),
                     fs=400)


# ---------------------------------------------------------------------------
# weight file io
# ---------------------------------------------------------------------------

def test_save_load_roundtrip(tmp_path, weights):
    p = tmp_path / "w.crw1"
    save_weights(weights, p)
    back = load_weights(p)
    assert back.architecture == weights.architecture
    assert set(back.tensors) == set(weights.tensors)
    for name in weights.tensors:
        assert np.array_equal(back.tensors[name], weights.tensors[name])


def test_load_bad_magic(tmp_path):
    p = tmp_path / "bad.crw1"
    p.write_bytes(b"XXXX" + b"\x00" * 100)
    with pytest.raises(BadMagic):
        load_weights(p)


def test_load_truncated(tmp_path, weights):
    p = tmp_path / "w.crw1"
    save_weights(weights, p)
    p.write_bytes(p.read_bytes()[:-50])
    with pytest.raises(TruncatedFile):
        load_weights(p)


def test_shape_mismatch_rejected():
    tensors = {name: np.zeros(shape, dtype=np.float32)
               for name, shape in tensor_shapes(DEFAULT_ARCHITECTURE).items()}
    tensors["head.mu.weight"] = np.zeros((256, 128), dtype=np.float32)
    with pytest.raises(ShapeMismatch):
        EncoderWeights(architecture=DEFAULT_ARCHITECTURE, tensors=tensors)


def test_missing_tensor_rejected():
    tensors = {name: np.zeros(shape, dtype=np.float32)
               for name, shape in tensor_shapes(DEFAULT_ARCHITECTURE).items()}
    del tensors["blocks.2.conv1.weight"]
    with pytest.raises(ShapeMismatch):
        EncoderWeights(architecture=DEFAULT_ARCHITECTURE, tensors=tensors)


def test_random_weights_reproducible():
    a, b = random_weights(seed=7), random_weights(seed=7)
    for name in a.tensors:
        assert np.array_equal(a.tensors[name], b.tensors[name])


# ---------------------------------------------------------------------------
# forward pass
# ---------------------------------------------------------------------------

def test_shape_ladder(weights):
    rec = _record()
    _, _, acts = _forward(rec.signals, weights)
    assert [a.shape for a in acts] == [(32, 1400), (64, 700), (128, 350),
                                       (256, 175)]


def test_zero_network_embeds_to_zero():
    e = embed(_record(), _zero_weights())
    assert np.all(e.mu == 0.0)
    assert np.all(e.log_var == 0.0)


def test_embedding_deterministic(weights):
    rec = _record()
    e1, e2 = embed(rec, weights), embed(rec, weights)
    assert np.array_equal(e1.mu, e2.mu)
    assert np.array_equal(e1.log_var, e2.log_var)


def test_embedding_ignores_metadata(weights):
    rec = _record()
    other = EcgRecord("other-id", Source.PTBXL, rec.signals.copy(), fs=400,
                      age=77.0, sex=Sex.F, label=Label.POSITIVE)
    assert np.array_equal(embed(rec, weights).mu, embed(other, weights).mu)


def test_embed_wrong_shape_rejected(weights):
    rec = EcgRecord("short", Source.SYNTHETIC, np.zeros((12, 2000)), fs=400)
    with pytest.raises(ShapeMismatch):
        embed(rec, weights)


def test_embedding_dimension(weights):
    e = embed(_record(), weights)
    assert e.mu.shape == (256,)
    assert e.log_var.shape == (256,)


# ---------------------------------------------------------------------------
# KL divergence
# ---------------------------------------------------------------------------

def test_kl_zero_at_prior():
    e = LatentEmbedding(mu=np.zeros(256), log_var=np.zeros(256))
    assert kl_divergence(e) == pytest.approx(0.0, abs=1e-12)


def test_kl_unit_mean_single_dim():
    e = LatentEmbedding(mu=np.array([1.0]), log_var=np.array([0.0]))
    assert kl_divergence(e) == pytest.approx(0.5, abs=1e-9)


def test_kl_log_variance_single_dim():
    e = LatentEmbedding(mu=np.array([0.0]), log_var=np.array([math.log(2.0)]))
    assert kl_divergence(e) == pytest.approx(0.5 * (1.0 - math.log(2.0)),
                                             abs=1e-9)
    assert kl_divergence(e) == pytest.approx(0.153426, abs=1e-6)


def test_kl_nonnegative_random(rng):
    for _ in range(200):
        d = int(rng.integers(1, 64))
        e = LatentEmbedding(mu=rng.normal(0, 3, d),
                            log_var=rng.normal(0, 2, d))
        assert kl_divergence(e) >= -1e-12


def test_kl_matches_independent_sum(rng):
    # per-dimension closed form accumulated with plain python floats
    mu = rng.normal(0, 2, 32)
    lv = rng.normal(0, 1, 32)
    expected = sum(-0.5 * (1.0 + b - a * a - math.exp(b))
                   for a, b in zip(mu.tolist(), lv.tolist()))
    e = LatentEmbedding(mu=mu, log_var=lv)
    assert kl_divergence(e) == pytest.approx(expected, rel=1e-12)
