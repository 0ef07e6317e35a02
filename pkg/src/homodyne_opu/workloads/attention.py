"""Synthetic two-stage attention GEMMs.

Stage G computes ``G = Kr^T V`` (128x64 by 64x64) and stage Y computes
``Y = Qr G`` (64x128 by 128x64). Operands are synthetic: i.i.d. uniform
entries on [-1, 1].
"""

from __future__ import annotations

import numpy as np

from .inference import LayerSpec

SEQ, D_HEAD = 128, 64


def synthetic_operands(seed=0, seq=SEQ, d=D_HEAD):
    """``(Kr^T, V, Qr)`` with shapes (seq, d), (d, d), (d, seq)."""
    gen = np.random.default_rng(seed)
    kr_t = gen.uniform(-1, 1, (seq, d))
    v = gen.uniform(-1, 1, (d, d))
    qr = gen.uniform(-1, 1, (d, seq))
    return kr_t, v, qr


def attention_model(kr_t, qr) -> list[LayerSpec]:
    """Both stages as a layer chain; feed it ``V``."""
    return [
        LayerSpec("attention_stage", kr_t, dims={"stage": "G"}, name="stage_g"),
        LayerSpec("attention_stage", qr, dims={"stage": "Y"}, name="stage_y"),
    ]


def stage_y_sampler(gen, rows, m, cols, d=D_HEAD):
    """Tiles distributed like stage Y operands: uniform ``Qr`` rows against columns of ``Kr^T V``."""
    w = gen.uniform(-1, 1, (rows, m))
    x = gen.uniform(-1, 1, (m, d)) @ gen.uniform(-1, 1, (d, cols))
    return w, x
