import numpy as np
import pytest
import torch

from seeds.climatology import constant_climatology
from seeds.network import ScoreNetConfig, build_score_net
from seeds.tasks import (
    EmulationTaskSpec,
    PostprocTaskSpec,
    _lr_factor,
    climatology_snapshot,
    generate_ensemble,
    mixture_weight,
    prepare_training_data,
    sample_batch,
    sample_emulation_example,
    sample_postproc_example,
    train,
)


def tiny_net(seed=0):
    cfg = ScoreNetConfig(C=4, P=2, D=8, layers=(1, 1, 1), heads=2, fields=("a",), levels=("s",))
    return build_score_net(cfg, seed=seed)


def test_mixture_weight():
    assert mixture_weight(5, 2, 3) == 0.5
    assert mixture_weight(5, 2, 0) == 1.0
    assert PostprocTaskSpec(lead=1, K=2, M=25, kprime=1).alpha == pytest.approx(23 / 24)
    with pytest.raises(ValueError):
        mixture_weight(2, 2, 1)
    with pytest.raises(ValueError):
        EmulationTaskSpec(lead=1, K=0, M=3)


def test_emulation_example_structure():
    ens = np.arange(6)[:, None, None] * np.ones((6, 1, 2))
    rng = np.random.default_rng(0)
    for _ in range(200):
        ex = sample_emulation_example(ens, 3, rng)
        assert len(set(ex.seed_index)) == 3
        assert ex.target_index not in ex.seed_index
        assert ex.target[0, 0] == ex.target_index
        np.testing.assert_array_equal(ex.seeds[:, 0, 0], ex.seed_index)
    with pytest.raises(ValueError):
        sample_emulation_example(ens[:3], 3, rng)


def test_emulation_targets_uniform_over_remainder():
    rng = np.random.default_rng(1)
    ens = np.zeros((4, 1, 1))
    counts = np.zeros(4)
    for _ in range(8000):
        counts[sample_emulation_example(ens, 2, rng).target_index] += 1
    np.testing.assert_allclose(counts / 8000, 0.25, atol=0.02)


def test_postproc_source_frequency_matches_alpha():
    rng = np.random.default_rng(2)
    fc, re = np.zeros((5, 1, 1)), np.ones((3, 1, 1))
    n = 20_000
    hits = 0
    for _ in range(n):
        ex = sample_postproc_example(fc, re, 2, rng)
        hits += ex.source == "forecast"
        assert ex.target[0, 0] == (0.0 if ex.source == "forecast" else 1.0)
    assert hits / n == pytest.approx(0.5, abs=4 * np.sqrt(0.25 / n))


def test_postproc_without_reanalysis_is_emulation():
    fc = np.random.default_rng(3).standard_normal((5, 1, 2))
    a = sample_postproc_example(fc, None, 2, np.random.default_rng(4))
    b = sample_emulation_example(fc, 2, np.random.default_rng(4))
    assert a.seed_index == b.seed_index and a.target_index == b.target_index
    with pytest.raises(ValueError):
        sample_postproc_example(fc, np.zeros((1, 1, 2)), 2, np.random.default_rng(0), kprime=2)


def test_climatology_snapshot_standardised():
    c = np.array([[1.0, 2.0, 3.0], [5.0, 5.0, 5.0]])
    s = climatology_snapshot(c)
    np.testing.assert_allclose(s[0].mean(), 0, atol=1e-15)
    np.testing.assert_allclose(s[0].std(), 1)
    assert np.all(s[1] == 0)


def make_data(n_days=4, M=5, kprime=0, seed=0):
    rng = np.random.default_rng(seed)
    fc = 10 + 2 * rng.standard_normal((n_days, M, 1, 96))
    re = 10 + 2 * rng.standard_normal((n_days, kprime, 1, 96))
    table = constant_climatology(np.full((1, 96), 10.0), np.full((1, 96), 2.0))
    return prepare_training_data(fc, re, table, np.arange(1, n_days + 1)), fc


def test_prepare_training_data_standardises():
    data, fc = make_data(kprime=2)
    np.testing.assert_allclose(data.forecast, (fc - 10) / 2)
    assert data.reanalysis.shape == (4, 2, 1, 96)
    assert data.clim.shape == (4, 1, 96)
    with pytest.raises(ValueError):
        prepare_training_data(np.zeros((0, 2, 1, 96)), None, None, [])


def test_sample_batch_shapes():
    data, _ = make_data(kprime=2)
    task = PostprocTaskSpec(lead=1, K=2, M=5, kprime=2)
    seeds, targets, clim, sources = sample_batch(data, task, 7, np.random.default_rng(0))
    assert seeds.shape == (7, 2, 1, 96) and targets.shape == (7, 1, 96) and clim.shape == (7, 1, 96)
    assert set(sources) <= {"forecast", "reanalysis"}


def test_lr_schedule():
    assert _lr_factor(0, 100, 10, "cosine") == pytest.approx(0.1)
    assert _lr_factor(9, 100, 10, "cosine") == pytest.approx(1.0)
    assert _lr_factor(10, 100, 10, "cosine") == pytest.approx(1.0)
    assert _lr_factor(55, 100, 10, "cosine") == pytest.approx(0.5)
    assert _lr_factor(99, 100, 10, None) == 1.0


def test_train_deterministic_and_finite():
    data, _ = make_data()
    task = EmulationTaskSpec(lead=1, K=2, M=5)
    a = train(tiny_net(), data, task, steps=4, batch=3, seed=5)
    b = train(tiny_net(), data, task, steps=4, batch=3, seed=5)
    np.testing.assert_array_equal(a.losses, b.losses)
    assert np.all(np.isfinite(a.losses))
    for p, q in zip(a.model.parameters(), b.model.parameters()):
        assert torch.equal(p, q)


def test_train_reduces_loss_on_offset_data():
    # data sit at +3 in anomaly space; the fresh network models N(0, 1)
    data, _ = make_data(n_days=8)
    data.forecast = data.forecast + 3.0
    task = EmulationTaskSpec(lead=1, K=1, M=5)
    res = train(tiny_net(), data, task, steps=150, batch=16, lr=3e-3, seed=0)
    assert res.losses[-30:].mean() < 0.7 * res.losses[:30].mean()


def test_train_validates_arguments():
    data, _ = make_data()
    with pytest.raises(ValueError):
        train(tiny_net(), data, EmulationTaskSpec(lead=1, K=5, M=6), steps=1)
    with pytest.raises(ValueError):
        train(tiny_net(), data, EmulationTaskSpec(lead=1, K=2, M=5), steps=1, decay="step")


def test_fresh_network_generates_unit_gaussian():
    # the zero-initialised head makes the score exactly that of N(0, 1)
    net = tiny_net().double()
    seeds = np.zeros((2, 1, 96))
    clim = np.zeros((1, 96))
    x = generate_ensemble(net, seeds, clim, n=64, steps=256, rng=np.random.default_rng(0))
    assert x.shape == (64, 1, 96)
    assert abs(x.mean()) < 0.05
    assert x.std() == pytest.approx(1.0, abs=0.03)


def test_generation_reproducible():
    net = tiny_net()
    seeds = np.random.default_rng(1).standard_normal((2, 1, 96))
    clim = np.zeros((1, 96))
    a = generate_ensemble(net, seeds, clim, n=5, steps=8, rng=np.random.default_rng(3), batch_size=2)
    b = generate_ensemble(net, seeds, clim, n=5, steps=8, rng=np.random.default_rng(3), batch_size=2)
    np.testing.assert_array_equal(a, b)
