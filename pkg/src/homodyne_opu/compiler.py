"""Tiling of arbitrary GEMMs onto the crossbar.

``Y = W @ X`` with ``W`` (n x m) and ``X`` (m x k) is cut into
``rows x cols`` output tiles and contraction chunks of at most
``max_integration_len`` symbols. Each chunk is one crossbar pass; chunks of an
output tile are accumulated digitally after the ADC.

Every pass is scaled by the max-abs of its two operand blocks and read out
against the worst-case full scale ``w_scale * x_scale * len(chunk)``, so no
noiseless readout can saturate.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .calibration import CalibrationMap
from .device import DeviceConfig, crossbar_pass
from .errors import CalibrationError, SaturationError, ShapeError
from .noise import NoiseModel, PhaseDrift
from .numerics import ErrorStats, as_matrix, error_stats, matmul_reference

__all__ = ["GemmShape", "TileTask", "GemmPlan", "RunReport", "plan_gemm", "estimate_passes", "execute_gemm"]


def _cdiv(a, b):
    return -(-a // b)


@dataclass(frozen=True)
class GemmShape:
    n: int
    m: int
    k: int

    def __post_init__(self):
        if min(self.n, self.m, self.k) < 1:
            raise ValueError(f"GEMM dimensions must be >= 1, got {self}")


@dataclass(frozen=True)
class TileTask:
    """One crossbar pass. Ranges are half-open ``(start, stop)`` pairs.

    Scales are ``None`` in a plan and filled in from the data at execution.
    """

    pass_id: int
    w_rows: tuple[int, int]
    x_cols: tuple[int, int]
    m_range: tuple[int, int]
    w_scale: float | None = None
    x_scale: float | None = None
    out_scale: float | None = None
    skipped: bool = False

    @property
    def length(self) -> int:
        return self.m_range[1] - self.m_range[0]

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GemmPlan:
    shape: GemmShape
    tasks: tuple[TileTask, ...]
    pass_count: int

    def tile_groups(self) -> list[list[TileTask]]:
        """Tasks grouped by output tile; the m-chunks of a tile are contiguous."""
        groups: list[list[TileTask]] = []
        for t in self.tasks:
            if groups and (groups[-1][0].w_rows, groups[-1][0].x_cols) == (t.w_rows, t.x_cols):
                groups[-1].append(t)
            else:
                groups.append([t])
        return groups

    def records(self) -> list[dict]:
        return [t.to_dict() for t in self.tasks]

    def to_jsonl(self) -> str:
        return "".join(json.dumps(r) + "\n" for r in self.records())


def _chunks(total, size):
    return [(s, min(s + size, total)) for s in range(0, total, size)]


def plan_gemm(shape: GemmShape, cfg: DeviceConfig) -> GemmPlan:
    m_chunk = min(shape.m, cfg.max_integration_len)
    tasks = []
    for rows in _chunks(shape.n, cfg.rows):
        for cols in _chunks(shape.k, cfg.cols):
            for mr in _chunks(shape.m, m_chunk):
                tasks.append(TileTask(len(tasks), rows, cols, mr))
    return GemmPlan(shape, tuple(tasks), len(tasks))


def estimate_passes(shape: GemmShape, cfg: DeviceConfig) -> int:
    """Closed-form pass count of :func:`plan_gemm`."""
    return _cdiv(shape.n, cfg.rows) * _cdiv(shape.k, cfg.cols) * _cdiv(shape.m, min(shape.m, cfg.max_integration_len))


@dataclass(eq=False)
class RunReport:
    """Outcome of :func:`execute_gemm`.

    ``full_scale`` is the per-element sum of the pass full scales that fed it
    and ``error_bound`` the per-element bound on DAC and ADC quantization error
    for a noiseless device with unit gains and zero phase offsets. Both stay
    out of :meth:`to_dict`, which is the report payload.
    """

    shape: GemmShape
    pass_count: int
    executed_passes: int
    skipped_passes: int
    saturation_count: int
    error: ErrorStats | None = None
    tasks: list[TileTask] = field(default_factory=list, repr=False)
    full_scale: np.ndarray | None = field(default=None, repr=False)
    error_bound: np.ndarray | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {
            "shape": asdict(self.shape),
            "pass_count": self.pass_count,
            "executed_passes": self.executed_passes,
            "skipped_passes": self.skipped_passes,
            "saturation_count": self.saturation_count,
            "error": None if self.error is None else self.error.to_dict(),
        }
        if self.error_bound is not None:
            d["max_error_bound"] = float(self.error_bound.max())
        return d


def _step(spec):
    return 0.0 if spec is None else spec.step


def _dac_bound(a, b, half_step):
    """Bound on ``|q(a) @ q(b) - a @ b|`` for a rounding quantizer with error <= ``half_step``.

    Per symbol ``|q(a)q(b) - ab| <= |a| e_b + |b| e_a + e_a e_b``, and zeros are
    represented exactly, so only non-zero operands contribute an error term.
    """
    if half_step == 0:
        return 0.0
    nz_a, nz_b = (a != 0).astype(float), (b != 0).astype(float)
    return half_step * (np.abs(a) @ nz_b + nz_a @ np.abs(b)) + half_step**2 * (nz_a @ nz_b)


def _run_group(group, w, x, cfg, noise, cal, drift, pass_offset):
    r = group[0].w_rows[1] - group[0].w_rows[0]
    c = group[0].x_cols[1] - group[0].x_cols[0]
    acc = np.zeros((r, c))
    fs = np.zeros((r, c))
    bound = np.zeros((r, c))
    half_dac = 0.5 * _step(cfg.dac)
    half_adc = 0.5 * _step(cfg.adc)
    done, saturated = [], []
    for t in group:
        wb = w[t.w_rows[0]:t.w_rows[1], t.m_range[0]:t.m_range[1]]
        xb = x[t.m_range[0]:t.m_range[1], t.x_cols[0]:t.x_cols[1]]
        ws = float(np.max(np.abs(wb)))
        xs = float(np.max(np.abs(xb)))
        if ws == 0 or xs == 0:
            done.append(replace(t, w_scale=ws or 1.0, x_scale=xs or 1.0, out_scale=0.0, skipped=True))
            continue
        out_scale = ws * xs * t.length
        block = crossbar_pass(
            wb / ws, xb / xs, cfg, noise, pass_offset + t.pass_id, drift=drift,
            phase_correction=None if cal is None else cal.phase_correction,
            gain_correction=None if cal is None else cal.gain_correction,
        )
        n_sat = int(np.count_nonzero(block.saturated))
        t = replace(t, w_scale=ws, x_scale=xs, out_scale=out_scale)
        if n_sat:
            saturated.append((t, n_sat))
        acc += block.adc_code * out_scale
        fs += out_scale
        bound += ws * xs * _dac_bound(wb / ws, xb / xs, half_dac) + out_scale * half_adc
        done.append(t)
    return acc, fs, bound, done, saturated


def execute_gemm(w, x, plan: GemmPlan, cfg: DeviceConfig, noise: NoiseModel | None = None,
                 cal: CalibrationMap | None = None, *, reference: bool = False, workers: int = 1,
                 pass_offset: int = 0) -> tuple[np.ndarray, RunReport]:
    """Run ``plan`` for ``W @ X`` on the simulated device.

    Output tiles are independent and may run on ``workers`` threads; results
    are identical for any worker count because all noise is keyed by
    ``pass_offset + pass_id``. Raises :class:`SaturationError` for the first
    saturated task in plan order.
    """
    w = as_matrix(w, "W")
    x = as_matrix(x, "X")
    s = plan.shape
    if w.shape != (s.n, s.m) or x.shape != (s.m, s.k):
        raise ShapeError(f"operands {w.shape} x {x.shape} do not match plan shape {(s.n, s.m, s.k)}")
    if cal is not None:
        if cal.shape != (cfg.rows, cfg.cols):
            raise CalibrationError(f"calibration map {cal.shape} does not match device {(cfg.rows, cfg.cols)}")
        used = cal.dead[: min(s.n, cfg.rows), : min(s.k, cfg.cols)]
        if used.any():
            raise CalibrationError(f"{int(used.sum())} dead unit(s) inside the array region this GEMM uses")
    if noise is not None and noise.is_zero:
        noise = None
    drift = None
    if noise is not None and noise.phase_drift_step:
        drift = PhaseDrift(noise, cfg.n_channels, origin=pass_offset)

    groups = plan.tile_groups()
    args = (w, x, cfg, noise, cal, drift, pass_offset)
    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda g: _run_group(g, *args), groups))
    else:
        results = [_run_group(g, *args) for g in groups]

    y = np.zeros((s.n, s.k))
    full_scale = np.zeros((s.n, s.k))
    bound = np.zeros((s.n, s.k))
    tasks, saturated = [], []
    for g, (acc, fs, bd, done, sat) in zip(groups, results):
        rows = slice(*g[0].w_rows)
        cols = slice(*g[0].x_cols)
        y[rows, cols] = acc
        full_scale[rows, cols] = fs
        bound[rows, cols] = bd
        tasks.extend(done)
        saturated.extend(sat)
    if saturated:
        t, n_sat = saturated[0]
        raise SaturationError(
            f"pass {t.pass_id} (rows {t.w_rows}, cols {t.x_cols}, m {t.m_range}) saturated {n_sat} readout(s); "
            f"out_scale {t.out_scale:.6g} gave insufficient headroom",
            task=t,
        )
    skipped = sum(t.skipped for t in tasks)
    report = RunReport(
        shape=s,
        pass_count=plan.pass_count,
        executed_passes=plan.pass_count - skipped,
        skipped_passes=skipped,
        saturation_count=0,
        tasks=tasks,
        full_scale=full_scale,
        error_bound=bound,
    )
    if reference:
        truth = matmul_reference(w, x)
        if y.size >= 2:
            report.error = error_stats(y, truth, np.where(full_scale > 0, full_scale, 1.0))
    return y, report
