import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homodyne_opu.compiler import GemmShape, estimate_passes, execute_gemm, plan_gemm
from homodyne_opu.device import DeviceConfig
from homodyne_opu.errors import SaturationError, ShapeError
from homodyne_opu.noise import NoiseModel
from homodyne_opu.numerics import matmul_reference

dims = st.integers(1, 40)


@pytest.mark.parametrize("shape,cfg,passes", [
    ((8, 64, 8), DeviceConfig(8, 8, max_integration_len=64), 1),
    ((256, 256, 256), DeviceConfig(256, 256, max_integration_len=256), 1),
    ((128, 64, 64), DeviceConfig(8, 8, max_integration_len=64), 128),
    ((64, 128, 64), DeviceConfig(8, 8, max_integration_len=128), 64),
    ((256, 256, 256), DeviceConfig(256, 100, max_integration_len=256), 3),
])
def test_pass_counts(shape, cfg, passes):
    plan = plan_gemm(GemmShape(*shape), cfg)
    assert plan.pass_count == len(plan.tasks) == estimate_passes(GemmShape(*shape), cfg) == passes


@given(dims, dims, dims, st.integers(1, 9), st.integers(1, 9), st.integers(1, 16))
def test_plan_covers_output_exactly(n, m, k, rows, cols, mmax):
    cfg = DeviceConfig(rows, cols, max_integration_len=mmax)
    plan = plan_gemm(GemmShape(n, m, k), cfg)
    assert plan.pass_count == estimate_passes(GemmShape(n, m, k), cfg)
    cover = np.zeros((n, k, m), int)
    for t in plan.tasks:
        assert t.w_rows[1] - t.w_rows[0] <= rows and t.x_cols[1] - t.x_cols[0] <= cols
        assert t.length <= mmax
        cover[slice(*t.w_rows), slice(*t.x_cols), slice(*t.m_range)] += 1
    assert np.all(cover == 1)
    assert [t.pass_id for t in plan.tasks] == list(range(plan.pass_count))


def test_plan_order_and_records():
    plan = plan_gemm(GemmShape(16, 20, 16), DeviceConfig(8, 8, max_integration_len=8))
    first = plan.tasks[:3]
    assert [t.m_range for t in first] == [(0, 8), (8, 16), (16, 20)]
    assert len({(t.w_rows, t.x_cols) for t in first}) == 1
    assert plan.tasks[3].x_cols == (8, 16)
    assert len(plan.tile_groups()) == 4
    assert plan.to_jsonl().count("\n") == plan.pass_count


@given(st.integers(1, 30), st.integers(1, 70), st.integers(1, 30), st.integers(0, 2**31))
def test_ideal_device_is_exact(n, m, k, seed):
    gen = np.random.default_rng(seed)
    w, x = gen.standard_normal((n, m)), gen.standard_normal((m, k))
    cfg = DeviceConfig.ideal(8, 8, max_integration_len=16)
    y, rep = execute_gemm(w, x, plan_gemm(GemmShape(n, m, k), cfg), cfg)
    ref = matmul_reference(w, x)
    assert np.linalg.norm(y - ref) <= 1e-10 * max(np.linalg.norm(ref), 1e-300)
    assert rep.saturation_count == 0


@given(st.integers(1, 24), st.integers(1, 80), st.integers(1, 24), st.integers(0, 2**31))
def test_quantized_error_within_bound(n, m, k, seed):
    gen = np.random.default_rng(seed)
    w, x = gen.uniform(-3, 3, (n, m)), gen.uniform(-1, 1, (m, k))
    cfg = DeviceConfig(8, 8, max_integration_len=32)
    y, rep = execute_gemm(w, x, plan_gemm(GemmShape(n, m, k), cfg), cfg)
    err = np.abs(y - matmul_reference(w, x))
    assert np.all(err <= rep.error_bound + 1e-9)
    # the data-dependent bound never exceeds the worst-case per-pass bound
    worst = rep.full_scale * (cfg.dac.step + cfg.dac.step**2 / 4 + cfg.adc.step / 2)
    assert np.all(rep.error_bound <= worst + 1e-9)


@given(st.floats(0.01, 1.0), st.integers(0, 2**31))
def test_scale_invariance(alpha, seed):
    gen = np.random.default_rng(seed)
    w, x = gen.uniform(-1, 1, (10, 40)), gen.uniform(-1, 1, (40, 6))
    cfg = DeviceConfig(8, 8, max_integration_len=16)
    plan = plan_gemm(GemmShape(10, 40, 6), cfg)
    y1, rep = execute_gemm(w, x, plan, cfg)
    y2, _ = execute_gemm(alpha * w, x, plan, cfg)
    # per-tile max-abs scaling makes the codes identical
    np.testing.assert_allclose(y2, alpha * y1, rtol=1e-9, atol=1e-12)


def test_tiling_equivalence(gen):
    w, x = gen.uniform(-1, 1, (8, 64)), gen.uniform(-1, 1, (64, 8))
    single = DeviceConfig(8, 8, max_integration_len=64)
    tiled = DeviceConfig(4, 4, max_integration_len=16)
    y1, _ = execute_gemm(w, x, plan_gemm(GemmShape(8, 64, 8), single), single)
    y2, rep = execute_gemm(w, x, plan_gemm(GemmShape(8, 64, 8), tiled), tiled)
    ref = matmul_reference(w, x)
    assert np.all(np.abs(y2 - ref) <= rep.error_bound + 1e-12)
    assert np.abs(y1 - y2).max() <= 2 * (64 * single.dac.step + 4 * 16 * tiled.adc.step)


@given(st.integers(0, 2**31), st.sampled_from(["uniform", "sparse", "constant", "spiky"]))
def test_no_noiseless_readout_saturates(seed, kind):
    gen = np.random.default_rng(seed)
    w = gen.uniform(-1, 1, (12, 50))
    x = {"uniform": gen.uniform(-1, 1, (50, 9)),
         "sparse": gen.uniform(-1, 1, (50, 9)) * (gen.random((50, 9)) < 0.1),
         "constant": np.full((50, 9), -2.5),
         "spiky": np.where(gen.random((50, 9)) < 0.02, 100.0, 1e-3)}[kind]
    w = np.sign(x[:, :1].T) * np.ones((12, 1)) if kind == "constant" else w
    cfg = DeviceConfig(8, 8, max_integration_len=50)
    _, rep = execute_gemm(w, x, plan_gemm(GemmShape(12, 50, 9), cfg), cfg)
    assert rep.saturation_count == 0


def test_zero_input_skips_passes():
    cfg = DeviceConfig(8, 8, max_integration_len=16)
    plan = plan_gemm(GemmShape(16, 32, 8), cfg)
    y, rep = execute_gemm(np.ones((16, 32)), np.zeros((32, 8)), plan, cfg)
    assert not y.any()
    assert rep.skipped_passes == plan.pass_count and rep.executed_passes == 0


def test_partial_zero_tiles_skipped(gen):
    x = gen.uniform(-1, 1, (32, 8))
    x[16:] = 0
    cfg = DeviceConfig(8, 8, max_integration_len=16)
    plan = plan_gemm(GemmShape(8, 32, 8), cfg)
    w = gen.uniform(-1, 1, (8, 32))
    y, rep = execute_gemm(w, x, plan, cfg, reference=True)
    assert rep.skipped_passes == 1 and rep.executed_passes == 1
    assert np.all(np.abs(y - w @ x) <= rep.error_bound + 1e-12)


def test_saturation_names_first_task(gen):
    # a unit gain above 1 pushes a full-scale product past the rails
    gains = np.ones((4, 4))
    gains[2, 1] = 1.5
    cfg = DeviceConfig(4, 4, max_integration_len=8, unit_gain=gains)
    w, x = np.ones((8, 8)), np.ones((8, 4))
    with pytest.raises(SaturationError) as exc:
        execute_gemm(w, x, plan_gemm(GemmShape(8, 8, 4), cfg), cfg)
    assert exc.value.task.pass_id == 0
    assert "pass 0" in str(exc.value)


def test_shape_mismatch():
    cfg = DeviceConfig(4, 4)
    with pytest.raises(ShapeError):
        execute_gemm(np.ones((3, 5)), np.ones((4, 2)), plan_gemm(GemmShape(3, 5, 2), cfg), cfg)


def test_workers_do_not_change_results(gen):
    cfg = DeviceConfig(8, 8, max_integration_len=32)
    nm = NoiseModel(0.05, 0.1, 0.02, 0.001, 0.05, seed=3)
    w, x = gen.uniform(-1, 1, (40, 70)), gen.uniform(-1, 1, (70, 30))
    plan = plan_gemm(GemmShape(40, 70, 30), cfg)
    y1, r1 = execute_gemm(w, x, plan, cfg, nm, reference=True, workers=1)
    y4, r4 = execute_gemm(w, x, plan, cfg, nm, reference=True, workers=4)
    assert y1.tobytes() == y4.tobytes()
    assert r1.to_dict() == r4.to_dict()


def test_pass_offset_changes_noise_realization(gen):
    cfg = DeviceConfig(8, 8)
    nm = NoiseModel(phase_jitter_std=0.1, seed=3)
    w, x = gen.uniform(-1, 1, (8, 16)), gen.uniform(-1, 1, (16, 8))
    plan = plan_gemm(GemmShape(8, 16, 8), cfg)
    a, _ = execute_gemm(w, x, plan, cfg, nm)
    b, _ = execute_gemm(w, x, plan, cfg, nm, pass_offset=1000)
    assert not np.array_equal(a, b)
