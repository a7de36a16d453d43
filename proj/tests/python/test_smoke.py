"""Smoke tests for the python extension module.

The built module directory comes from FRAMECAST_PYMODULE_DIR (set by ctest);
an installed `framecast` package works too.
"""

import os
import sys

import numpy as np
import pytest

_module_dir = os.environ.get("FRAMECAST_PYMODULE_DIR")
if _module_dir:
    sys.path.insert(0, _module_dir)

fc = pytest.importorskip("_framecast")


def test_version():
    assert fc.__version__


def test_cost_table_values():
    rows = {r["method"]: r for r in fc.cost_table()}
    assert set(rows) == {"vit", "rwkv", "mamba", "mixer"}
    assert rows["vit"]["flops"] == pytest.approx(2.749e13, rel=5e-3)
    assert rows["rwkv"]["flops"] == pytest.approx(3.436e11, rel=5e-3)
    assert rows["mixer"]["flops"] == pytest.approx(1.719e10, rel=5e-3)
    assert rows["vit"]["bound"] == "compute"
    assert rows["mixer"]["bound"] == "memory"
    assert rows["mixer"]["latency_ms"] == pytest.approx(4.88, rel=1e-2)


def test_roofline_latency():
    # Memory-bound example: 1 GB over 204.8 GB/s beats the compute time.
    ms = fc.roofline_latency_ms(1.72e10, 1.0e9)
    assert ms == pytest.approx(4.883, rel=1e-3)


def test_generate_clip_deterministic():
    a = fc.generate_clip(resolution=32, n_shapes=2, total_frames=6, seed=11)
    b = fc.generate_clip(resolution=32, n_shapes=2, total_frames=6, seed=11)
    c = fc.generate_clip(resolution=32, n_shapes=2, total_frames=6, seed=12)
    assert a.shape == (6, 1, 32, 32)
    assert a.dtype == np.float32
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_model_predict_shape_and_determinism():
    cfg = fc.ModelConfig(t_in=2, t_out=3, channels=1, height=16, width=16,
                         base_channels=2, n_blocks=1, embed_width=8)
    model = fc.Model(cfg, seed=5)
    frames = np.random.default_rng(0).random((2, 1, 16, 16), dtype=np.float32)
    out1 = model.predict(frames)
    out2 = model.predict(frames)
    assert out1.shape == (1, 3, 1, 16, 16)
    np.testing.assert_array_equal(out1, out2)
    assert np.isfinite(out1).all()


def test_model_save_load_roundtrip(tmp_path):
    cfg = fc.ModelConfig(t_in=2, t_out=2, channels=1, height=16, width=16,
                         base_channels=2, n_blocks=1, embed_width=8)
    model = fc.Model(cfg, seed=9)
    frames = np.random.default_rng(1).random((2, 1, 16, 16), dtype=np.float32)
    before = model.predict(frames)

    path = str(tmp_path / "model.evac")
    model.save(path)
    restored = fc.Model.load(path)
    after = restored.predict(frames)
    np.testing.assert_array_equal(before, after)
    assert restored.param_count() == model.param_count()


def test_metrics():
    clip = fc.generate_clip(resolution=32, total_frames=4, seed=3)
    assert fc.psnr(clip, clip) == 100.0
    noisy = np.clip(clip + 0.1, 0.0, 1.0).astype(np.float32)
    assert fc.psnr(noisy, clip) < 100.0
    assert fc.ssim(clip, clip) == pytest.approx(1.0)
    assert fc.perceptual_distance(clip, clip) == 0.0

    base = fc.copy_last_baseline(clip, t_out=3)
    assert base.shape == (1, 3, 1, 32, 32)
    np.testing.assert_array_equal(base[0, 0], clip[-1])
    np.testing.assert_array_equal(base[0, 1], clip[-1])


def test_validation_errors_surface_as_python_exceptions():
    with pytest.raises(ValueError):
        fc.ModelConfig(t_in=0)
    with pytest.raises(ValueError):
        fc.generate_clip(resolution=17)


def test_fit_smoke():
    cfg = fc.ModelConfig(t_in=2, t_out=2, channels=1, height=16, width=16,
                         base_channels=2, n_blocks=1, embed_width=8)
    model = fc.Model(cfg, seed=2)
    clips = [fc.generate_clip(resolution=16, n_shapes=1, total_frames=4, seed=s)
             for s in range(3)]
    log = model.fit(clips, stage1_epochs=1, stage2_epochs=1, stage3_epochs=1,
                    steps_per_epoch=2, batch_size=2, lr=1e-3, seed=4)
    assert [row["stage"] for row in log] == ["S1", "S2", "S3"]
    assert all(np.isfinite(row["loss"]) for row in log)


def test_gradcheck_quick():
    results = fc.run_gradcheck(instances=1)
    assert len(results) >= 25
    assert all(r["pass"] for r in results)
