"""Python smoke tests for the soilspec extension module."""

import math

import numpy as np
import pytest

import soilspec


def test_composition_formulas():
    assert soilspec.num_blocks(2048, 4) == 9
    assert soilspec.num_blocks(128, 4) == 5
    assert soilspec.filters_for_block(0, 4, 7) == 16
    assert soilspec.filters_for_block(8, 4, 7) == 128
    assert soilspec.block_fov(1) == 7
    assert soilspec.net_fov(9, 1) == 126
    assert soilspec.block_param_count(1, 16, 1, True, True) == 928


def test_parameter_counts_match_published_models():
    best = soilspec.NetSpec(n_in=2048, n_out=4, p_min=4, p_max=7, n_refine=1,
                            use_norm=True, leak=0.2, proj_hidden=70, n_vars=12)
    assert soilspec.count_params(best) == 723974
    real = soilspec.NetSpec(n_in=128, n_out=4, p_min=4, p_max=7, n_refine=1,
                            use_norm=True, leak=0.2, proj_hidden=70, n_vars=12)
    assert soilspec.count_params(real) == 262150
    assert "16 x 1024" in soilspec.summarize(best)


def test_metrics():
    x = np.array([1.0, 2.0, 3.0])
    assert soilspec.mae(x, x) == 0.0
    assert soilspec.r2(x, x) == pytest.approx(1.0)
    pred = np.array([1.0, 2.0, 3.0])
    target = np.array([2.0, 2.0, 2.0])
    assert soilspec.mae(pred, target) == pytest.approx(2.0 / 3.0)
    assert soilspec.rmse(pred, target) == pytest.approx(math.sqrt(2.0 / 3.0))


def test_quantile_codec_roundtrip():
    rng = np.random.default_rng(0)
    values = rng.uniform(-50.0, 150.0, size=2000)
    codec = soilspec.QuantileCodec.fit(values, bins=10)
    assert codec.n_bins == 10
    for v in values[:200]:
        t = codec.encode(v)
        assert codec.decode(t.bin, t.offset) == pytest.approx(v, rel=1e-9)


def test_standardize_and_resample():
    s = soilspec.standardize_spectrum(np.array([2.0, 4.0]))
    assert s == [-1.0, 1.0]
    r = soilspec.resample_linear(np.array([0.0, 1.0]), 3)
    assert r == [0.0, 0.5, 1.0]


def test_default_sensor_config():
    cfg = soilspec.default_prisma_config()
    bands = cfg.active_bands()
    assert len(bands) == 170
    for b in bands:
        assert not (1338.9 <= b.center <= 1501.7)
        assert not (1784.4 <= b.center <= 1993.2)


def test_mixture_library_and_split():
    lib = soilspec.make_mixture_library(n_samples=300, n_bands=32, n_vars=3, seed=7)
    assert lib.n_samples == 300
    assert lib.spectra.shape == (300, 32)
    split = soilspec.stratified_split(lib, (0.8, 0.1, 0.1), seed=1, bins=5)
    assert len(split.train) == 240
    assert len(split.val) == 30
    assert len(split.test) == 30
    assert sorted(split.train + split.val + split.test) == list(range(300))


def test_train_predict_gradcam_roundtrip(tmp_path):
    lib = soilspec.make_mixture_library(n_samples=120, n_bands=24, n_endmembers=3,
                                        n_vars=2, seed=3)
    split = soilspec.stratified_split(lib, (0.7, 0.15, 0.15), seed=2, bins=3)

    cfg = soilspec.TrainConfig()
    cfg.f_insz = 16
    cfg.p_min = 1
    cfg.p_max = 2
    cfg.proj_hidden = 4
    cfg.epochs = 3
    cfg.batch_size = 16
    cfg.lr = 1e-3
    cfg.seed = 1

    model, history = soilspec.train(lib, split, cfg)
    assert len(history) == 3
    assert model.n_params > 0

    metrics = model.evaluate(lib, split, set="test")
    assert len(metrics["r2"]) == 2
    assert math.isfinite(metrics["global_r2"])

    preds = model.predict(lib.spectra, lib.wavelengths)
    assert preds.shape == (120, 2)
    assert np.isfinite(preds).all()

    wavelengths, weights = model.gradcam(lib, split, "var0")
    assert len(wavelengths) == cfg.f_insz
    assert all(0.0 <= w <= 1.0 for w in weights)

    path = str(tmp_path / "model.ckpt")
    model.save(path)
    back = soilspec.load_trained(path)
    preds2 = back.predict(lib.spectra, lib.wavelengths)
    assert np.array_equal(preds, preds2)


def test_idw():
    grid = soilspec.idw_interpolate([(0.3, 0.3, 5.5)], 0.0, 1.0, 0.0, 1.0, 4, 4)
    assert grid.shape == (4, 4)
    assert np.allclose(grid, 5.5)
