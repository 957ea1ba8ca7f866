import numpy as np
import pytest

import shiftmri.autodiff as ad
from shiftmri import data as dm
from shiftmri import kspace, learned


def small_dataset(seed=0, count=4, extents=(32, 32), snr_db=30.0, coils=3):
    spec = dm.DistributionSpec("train", extents=extents, coils=coils,
                               snr_db=snr_db, seed=seed)
    return dm.generate(spec, count)


UNET = learned.ModelConfig("unet_lite", channels=4, pool_levels=2, seed=0)
VARNET = learned.ModelConfig("varnet_lite", cascades=2, denoiser_channels=4, seed=0)


def test_unet_output_shape():
    model = learned.construct_model(learned.ModelConfig("unet_lite", channels=8,
                                                        pool_levels=2, seed=0))
    item = small_dataset().items[0]
    mask = kspace.mask_for_volume(32, 4, 0.08, 0, 0)
    y = dm.simulate_measurements(item, mask, 1)
    out = model.reconstruct([ad.Tensor(p) for p in model.init_params()],
                            y, item.sens, mask)
    assert out.data.shape == (32, 32)


def test_unet_rejects_indivisible_extents():
    model = learned.construct_model(learned.ModelConfig("unet_lite", pool_levels=3, seed=0))
    item = small_dataset(extents=(20, 20)).items[0]
    mask = kspace.full_mask(20)
    y = kspace.apply_forward(item.image, item.sens, mask)
    with pytest.raises(ValueError, match="divisible"):
        model.reconstruct([ad.Tensor(p) for p in model.init_params()],
                          y, item.sens, mask)


def test_varnet_single_cascade_full_mask_is_adjoint():
    config = learned.ModelConfig("varnet_lite", cascades=1, denoiser_channels=4, seed=0)
    model = learned.construct_model(config)
    params = model.init_params()  # final denoiser conv zero-initialized
    item = small_dataset(seed=3).items[0]
    fm = kspace.full_mask(32)
    y = kspace.apply_forward(item.image, item.sens, fm)
    out = model.reconstruct([ad.Tensor(p) for p in params], y, item.sens, fm)
    np.testing.assert_allclose(out.data, np.abs(item.image), atol=1e-10)


def test_same_seed_same_initial_parameters():
    a = learned.construct_model(UNET).init_params()
    b = learned.construct_model(UNET).init_params()
    for pa, pb in zip(a, b):
        np.testing.assert_array_equal(pa, pb)


def test_parameter_count_deterministic():
    assert learned.parameter_count(UNET) == learned.parameter_count(UNET)
    bigger = learned.ModelConfig("unet_lite", channels=8, pool_levels=2, seed=1)
    assert learned.parameter_count(bigger) > learned.parameter_count(UNET)


def test_model_config_validation():
    with pytest.raises(ValueError):
        learned.ModelConfig("resnet")
    with pytest.raises(ValueError):
        learned.ModelConfig("varnet_lite", cascades=0)


def test_train_config_validation():
    with pytest.raises(ValueError):
        learned.TrainConfig(warmup_fraction=1.5)
    with pytest.raises(ValueError):
        learned.TrainConfig(clip_norm=0.0)
    with pytest.raises(ValueError):
        learned.TrainConfig(lr_max=1e-5, lr_min=1e-3)
    with pytest.raises(ValueError):
        learned.TrainConfig(optimizer="lion")
    with pytest.raises(ValueError):
        learned.TrainConfig(loss="l4")


def test_learning_rate_schedule_pointwise():
    cfg = learned.TrainConfig(epochs=10, lr_max=1e-3, lr_min=1e-4, warmup_fraction=0.1)
    total = 100
    warmup = 10
    for s in (1, 5, 10, 11, 55, 100):
        got = learned.learning_rate_at(s, total, cfg)
        if s <= warmup:
            expected = 1e-3 * s / warmup
        else:
            expected = 1e-3 + (1e-4 - 1e-3) * (s - warmup) / (total - warmup)
        assert got == pytest.approx(expected, abs=0)
    assert learned.learning_rate_at(total, total, cfg) == pytest.approx(1e-4)
    # warmup has a floor of one step
    tiny = learned.TrainConfig(epochs=1, warmup_fraction=0.0)
    assert learned.learning_rate_at(1, 3, tiny) == tiny.lr_max


def test_clipping_scales_by_norm():
    grads = [np.full(4, 5.0)]  # norm 10
    clipped = learned._clip_gradients(grads, 1.0)
    np.testing.assert_allclose(clipped[0], grads[0] * 0.1, atol=1e-15)
    assert np.sqrt(np.sum(clipped[0] ** 2)) <= 1.0 + 1e-12
    small = [np.full(4, 0.1)]
    np.testing.assert_array_equal(learned._clip_gradients(small, 1.0)[0], small[0])


def test_train_zero_epochs_returns_init():
    ds = small_dataset()
    cks, traces = learned.train(UNET, ds, learned.TrainConfig(epochs=0, seed=0))
    assert len(cks) == 1 and cks[0].epoch == 0
    assert traces["train_loss"] == []
    init = learned.construct_model(UNET).init_params()
    for p, q in zip(cks[0].params, init):
        np.testing.assert_array_equal(p, q)


def test_train_loss_decreases_on_seeded_run():
    ds = small_dataset(seed=1, count=16)
    cks, traces = learned.train(UNET, ds, learned.TrainConfig(epochs=5, seed=0))
    assert traces["train_loss"][4] < traces["train_loss"][0]
    assert len(cks) == 6


def test_train_reproducible_bitwise():
    ds = small_dataset(seed=2, count=6)
    cfg = learned.TrainConfig(epochs=2, seed=3)
    cks1, _ = learned.train(UNET, ds, cfg)
    cks2, _ = learned.train(UNET, ds, cfg)
    for a, b in zip(cks1, cks2):
        assert a.to_bytes() == b.to_bytes()


def test_train_monitor_traces_fixed_masks():
    ds = small_dataset(seed=4, count=4)
    mon = small_dataset(seed=5, count=3)
    _, traces = learned.train(UNET, ds, learned.TrainConfig(epochs=2, seed=0),
                              monitors=[("val", mon)])
    assert len(traces["val"]) == 2


def test_varnet_training_never_degrades_at_full_sampling():
    for seed in range(5):
        ds = small_dataset(seed=40 + seed, count=4, snr_db=300.0)
        cfg = learned.TrainConfig(epochs=2, seed=seed, acceleration=1.0)
        cks, _ = learned.train(
            learned.ModelConfig("varnet_lite", cascades=2, denoiser_channels=4,
                                seed=seed), ds, cfg)
        init, _, _ = learned.evaluate_checkpoint(cks[0], ds, seed, acceleration=1.0)
        final, _, _ = learned.evaluate_checkpoint(cks[-1], ds, seed, acceleration=1.0)
        assert final >= init


def test_checkpoint_roundtrip(tmp_path):
    ds = small_dataset(seed=6)
    cks, _ = learned.train(VARNET, ds, learned.TrainConfig(epochs=1, seed=0))
    path = tmp_path / "model.ckpt"
    cks[-1].save(path)
    loaded = learned.Checkpoint.load(path)
    assert loaded.epoch == 1
    assert loaded.fingerprint == cks[-1].fingerprint
    assert loaded.config == cks[-1].config
    for a, b in zip(loaded.params, cks[-1].params):
        np.testing.assert_array_equal(a, b)
    raw = path.read_bytes()
    assert raw[:4] == b"SMRI"
    with pytest.raises(ValueError, match="magic"):
        learned.Checkpoint.from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError, match="truncated"):
        learned.Checkpoint.from_bytes(raw[: len(raw) - 8])


def test_infer_deterministic():
    ds = small_dataset(seed=7)
    cks, _ = learned.train(UNET, ds, learned.TrainConfig(epochs=1, seed=0))
    item = ds.items[0]
    mask = kspace.mask_for_volume(32, 4, 0.08, 1, 0)
    y = dm.simulate_measurements(item, mask, 2)
    a = learned.infer(cks[-1], y, item.sens, mask)
    b = learned.infer(cks[-1], y, item.sens, mask)
    np.testing.assert_array_equal(a, b)


def test_infer_varnet_zero_denoiser_full_mask():
    ds = small_dataset(seed=8)
    model_cfg = learned.ModelConfig("varnet_lite", cascades=1, denoiser_channels=4, seed=0)
    cks, _ = learned.train(model_cfg, ds, learned.TrainConfig(epochs=0, seed=0))
    item = ds.items[0]
    fm = kspace.full_mask(32)
    y = kspace.apply_forward(item.image, item.sens, fm)
    out = learned.infer(cks[0], y, item.sens, fm)
    np.testing.assert_allclose(out, np.abs(item.image), atol=1e-10)


def test_infer_interleave_path_close_to_direct(seeded_phantom_item):
    from shiftmri.metrics import SsimConfig, normalize_output, ssim

    train_set = small_dataset(seed=9, count=8, extents=(64, 64))
    cks, _ = learned.train(VARNET, train_set, learned.TrainConfig(epochs=2, seed=0))
    item = seeded_phantom_item  # 32x32, routed through doubling
    mask = kspace.mask_for_volume(32, 4, 0.08, 3, 0)
    y = dm.simulate_measurements(item, mask, 5)
    routed = learned.infer(cks[-1], y, item.sens, mask)
    model = learned.construct_model(cks[-1].config)
    direct = model.reconstruct([ad.Tensor(p) for p in cks[-1].params],
                               y, item.sens, mask).data
    matched, _ = normalize_output(routed, direct)
    assert ssim(matched, direct, SsimConfig(data_range=float(direct.max()))) >= 0.9


def test_infer_unresolvable_extents_error():
    ds = small_dataset(seed=10)
    cks, _ = learned.train(UNET, ds, learned.TrainConfig(epochs=0, seed=0))
    item = small_dataset(seed=11, extents=(48, 48)).items[0]
    mask = kspace.mask_for_volume(48, 4, 0.08, 0, 0)
    y = dm.simulate_measurements(item, mask, 1)
    with pytest.raises(ValueError, match="extents"):
        learned.infer(cks[-1], y, item.sens, mask)


def test_finetune_zero_epochs_keeps_parameters():
    ds = small_dataset(seed=12)
    cks, _ = learned.train(UNET, ds, learned.TrainConfig(epochs=1, seed=0))
    f_cks, _ = learned.finetune(cks[-1], ds, learned.TrainConfig(epochs=0, seed=1))
    for a, b in zip(f_cks[0].params, cks[-1].params):
        np.testing.assert_array_equal(a, b)
    assert f_cks[0].provenance == [cks[-1].fingerprint]


def test_finetune_tiny_lr_traces_flat():
    ds = small_dataset(seed=13, count=4)
    cks, _ = learned.train(UNET, ds, learned.TrainConfig(epochs=1, seed=0))
    cfg = learned.TrainConfig(epochs=2, seed=0, lr_max=1e-12, lr_min=1e-13)
    _, traces = learned.finetune(cks[-1], ds, cfg, monitors=[("m", ds)])
    vals = traces["m"]
    assert max(vals) - min(vals) < 1e-6


def test_finetune_improves_target_metric():
    parent_set = small_dataset(seed=14, count=12)
    q_spec = dm.DistributionSpec("Q", contrast={"kind": "gamma", "gamma": 2.0},
                                 extents=(32, 32), coils=3, snr_db=30.0, seed=15)
    q_train, q_test = dm.train_test(q_spec, 12, 6)
    cks, _ = learned.train(UNET, parent_set, learned.TrainConfig(epochs=4, seed=0))
    before, _, _ = learned.evaluate_checkpoint(cks[-1], q_test, 0)
    f_cks, _ = learned.finetune(cks[-1], q_train, learned.TrainConfig(epochs=4, seed=0))
    after, _, _ = learned.evaluate_checkpoint(f_cks[-1], q_test, 0)
    assert after > before


def test_finetune_rejects_mismatched_params():
    ds = small_dataset(seed=16)
    cks, _ = learned.train(UNET, ds, learned.TrainConfig(epochs=0, seed=0))
    bad = learned.Checkpoint(VARNET, cks[0].params, 0, "x", {}, (32, 32))
    with pytest.raises(ValueError):
        learned.finetune(bad, ds, learned.TrainConfig(epochs=1, seed=0))


def test_multi_acceleration_training_runs():
    ds = small_dataset(seed=17, count=4)
    cfg = learned.TrainConfig(epochs=1, seed=0, accelerations=(2.0, 4.0))
    cks, traces = learned.train(UNET, ds, cfg)
    assert len(cks) == 2
    assert np.isfinite(traces["train_loss"][0])


def test_mse_loss_smoke():
    ds = small_dataset(seed=18, count=4)
    cks, traces = learned.train(UNET, ds, learned.TrainConfig(epochs=1, seed=0, loss="mse"))
    assert traces["train_loss"][0] > 0
