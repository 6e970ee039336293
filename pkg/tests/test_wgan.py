from __future__ import annotations

import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cforge.errors import DataError, ShapeError, VocabularyError
from cforge.nn import MlpConfig, Tape, Tensor
from cforge.nn import autodiff as ad
from cforge.rng import make_rng
from cforge.wgan import (
    LOG_COLUMNS,
    GanConfig,
    build_model,
    critic_loss,
    generate,
    gradient_penalty,
    load_checkpoint,
    marginal_rescale,
    marginal_rescale_fit,
    sample_latent,
    save_checkpoint,
    train,
    write_training_log,
)

SMALL = GanConfig(
    generator=MlpConfig((16, 16), "relu", batch_norm=True),
    critic=MlpConfig((16, 16), "leaky_relu", dropout_rate=0.2),
    epochs=4,
    batch_size=32,
    eta=2e-3,
    calibration_size=256,
    seed=3,
)


def _log_array(model):
    # NaN marks epochs without a generator step, so compare as arrays
    return np.array([[getattr(e, c) for c in LOG_COLUMNS] for e in model.training_log])


def _two_clusters(n=100, seed=0):
    rng = make_rng(seed, "clusters")
    a = rng.normal(0.25, 0.05, size=(n, 3))
    b = rng.normal(0.75, 0.05, size=(n, 3))
    return np.vstack([a, b]), ["A"] * n + ["B"] * n


# ------------------------------------------------------------ latent draws


def test_sample_latent_shape_moments_determinism():
    assert sample_latent(64, 8, make_rng(0, "z")).shape == (64, 8)
    big = sample_latent(100_000, 1, make_rng(1, "z"))
    assert abs(big.mean()) < 0.02
    assert abs(big.var() - 1.0) < 0.02
    np.testing.assert_array_equal(sample_latent(5, 3, make_rng(9, "z")), sample_latent(5, 3, make_rng(9, "z")))


# --------------------------------------------------------- gradient penalty


@pytest.mark.parametrize("w", [[0.3, -0.4, 1.2], [0.6, 0.0, 0.8], [2.0, 1.0, -1.0]])
def test_linear_critic_penalty_closed_form(w):
    wt = Tensor(np.array(w).reshape(3, 1), requires_grad=True)
    rng = make_rng(2, "gp")
    real, fake = rng.normal(size=(7, 3)), rng.normal(size=(7, 3))
    with Tape() as tape:
        gp = gradient_penalty(lambda x: ad.matmul(x, wt), real, fake, rng)
        (g,) = tape.gradient(gp, [wt])
    norm = np.linalg.norm(w)
    assert float(gp.data) == pytest.approx((norm - 1.0) ** 2, abs=1e-12)
    # d/dw (||w|| - 1)^2 = 2 (||w|| - 1) w / ||w||
    np.testing.assert_allclose(g.data.ravel(), 2 * (norm - 1) * np.array(w) / norm, atol=1e-12)


def test_penalty_shape_mismatch():
    wt = Tensor(np.ones((3, 1)))
    with Tape():
        with pytest.raises(ShapeError):
            gradient_penalty(lambda x: ad.matmul(x, wt), np.zeros((4, 3)), np.zeros((5, 3)), make_rng(0))


def test_identical_batches_zero_wasserstein():
    model = build_model(SMALL, ["A", "B"])
    rng = make_rng(4, "wc")
    real = rng.uniform(size=(10, 3))
    cond = model.one_hot(["A"] * 5 + ["B"] * 5)
    with Tape():
        loss, parts = critic_loss(model, real, real.copy(), cond, rng, gp_lambda=0.0)
    assert parts["wasserstein"] == 0.0
    assert float(loss.data) == 0.0


# ------------------------------------------------------------------ train


def test_zero_epochs_keeps_initialisation():
    x, labels = _two_clusters(20)
    cfg = GanConfig(**{**SMALL.__dict__, "epochs": 0})
    model = train(x, labels, cfg)
    init = build_model(cfg, ["A", "B"])
    for p, q in zip(model.generator_params + model.critic_params, init.generator_params + init.critic_params):
        np.testing.assert_array_equal(p.data, q.data)
    assert model.training_log == []


def test_training_log_deterministic_and_complete():
    x, labels = _two_clusters(40)
    m1 = train(x, labels, SMALL)
    m2 = train(x, labels, SMALL)
    assert len(m1.training_log) == SMALL.epochs
    assert [e.epoch for e in m1.training_log] == list(range(1, SMALL.epochs + 1))
    np.testing.assert_array_equal(_log_array(m1), _log_array(m2))
    buf = io.StringIO()
    write_training_log(m1, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(LOG_COLUMNS)
    assert len(lines) == SMALL.epochs + 1


def test_checkpoint_round_trip(tmp_path):
    x, labels = _two_clusters(40)
    model = train(x, labels, SMALL)
    path = tmp_path / "ckpt.json"
    save_checkpoint(model, path)
    restored = load_checkpoint(path)
    assert restored.condition_vocabulary == ("A", "B")
    np.testing.assert_array_equal(_log_array(restored), _log_array(model))
    z = sample_latent(50, SMALL.latent_dim, make_rng(0, "z"))
    np.testing.assert_array_equal(generate(model, z, "B"), generate(restored, z, "B"))
    save_checkpoint(restored, tmp_path / "again.json")
    assert (tmp_path / "again.json").read_bytes() == path.read_bytes()


def test_empty_stratum_and_vocabulary_errors():
    x, labels = _two_clusters(10)
    with pytest.raises(DataError, match="C"):
        train(x, labels, SMALL, vocabulary=["A", "B", "C"])
    model = train(x, labels, GanConfig(**{**SMALL.__dict__, "epochs": 1}))
    with pytest.raises(VocabularyError, match="A, B"):
        generate(model, sample_latent(2, SMALL.latent_dim, make_rng(0)), "Z")


def test_generate_within_training_support():
    x, labels = _two_clusters(50)
    model = train(x, labels, SMALL)
    z = sample_latent(300, SMALL.latent_dim, make_rng(5, "z"))
    for lab in ("A", "B"):
        out = generate(model, z, lab)
        assert out.shape == (300, 3)
        assert np.all(out >= x.min(axis=0)) and np.all(out <= x.max(axis=0))


def test_degenerate_training_set():
    x = np.full((64, 3), 0.5)
    model = train(x, ["A"] * 64, GanConfig(**{**SMALL.__dict__, "epochs": 10}))
    out = generate(model, sample_latent(200, SMALL.latent_dim, make_rng(0)), "A")
    np.testing.assert_allclose(out.mean(axis=0), 0.5, atol=0.05)


def test_two_clusters_ordered_by_condition():
    x, labels = _two_clusters(100)
    cfg = GanConfig(**{**SMALL.__dict__, "epochs": 150, "batch_size": 50, "critic": MlpConfig((16, 16), "leaky_relu")})
    model = train(x, labels, cfg)
    z = sample_latent(500, cfg.latent_dim, make_rng(1, "z"))
    assert np.all(generate(model, z, "B").mean(axis=0) > generate(model, z, "A").mean(axis=0))


# --------------------------------------------------------- marginal rescale


def _sort_index_oracle(real, synth):
    r, s = np.sort(real), np.sort(synth)
    out = np.empty_like(synth)
    m, n = s.size, r.size
    for i, v in enumerate(synth):
        rank = float(np.searchsorted(s, v))
        h = rank * (n - 1) / (m - 1)
        lo = int(np.floor(h))
        hi = min(lo + 1, n - 1)
        out[i] = r[lo] + (h - lo) * (r[hi] - r[lo])
    return out


def test_rescale_matches_sort_index_oracle():
    rng = make_rng(6, "rescale")
    real = rng.gamma(2.0, size=137)
    synth = rng.normal(size=91)
    np.testing.assert_allclose(marginal_rescale(real, synth), _sort_index_oracle(real, synth), atol=1e-12)


def test_rescale_fixed_point():
    real = make_rng(7, "fp").uniform(size=50)
    synth = real[make_rng(8, "fp").permutation(50)]
    out = marginal_rescale(real, synth)
    np.testing.assert_allclose(np.sort(out), np.sort(real), atol=1e-15)
    np.testing.assert_allclose(out, synth, atol=1e-15)


def test_rescale_empty_column():
    with pytest.raises(DataError):
        marginal_rescale_fit([], [1.0])


@settings(max_examples=60, deadline=None)
@given(
    arrays(float, st.integers(1, 30), elements=st.floats(-100, 100)),
    arrays(float, st.integers(2, 30), elements=st.floats(-100, 100), unique=True),
)
def test_rescale_preserves_rank_and_support(real, synth):
    out = marginal_rescale(real, synth)
    order = np.argsort(synth)
    assert np.all(np.diff(out[order]) >= -1e-12)
    assert out.min() >= real.min() - 1e-12 and out.max() <= real.max() + 1e-12
