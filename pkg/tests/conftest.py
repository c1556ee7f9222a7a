import warnings

import numpy as np
import pytest

from swmimo.channel import SystemConfig, build_channel, sample_paths
from swmimo.frontend import (
    assemble_sensing,
    build_combiners,
    design_training,
    make_quantizer,
    partition_cv,
    quantize,
    simulate_rx,
)

warnings.filterwarnings("ignore", message="atom columns")


def small_cfg(**kw):
    base = dict(
        M=6, K=2, R=3, D=3, paths=(1, 1), powers=(1.0, 1.0), bits=2, frame_len=10, n_frames=5, cv_fraction=0.2
    )
    base.update(kw)
    return SystemConfig(**base)


def build_scene(cfg, seed=0, paths=None, noiseless=False):
    """channel + operator + quantized observation with partition."""
    rng = np.random.default_rng(seed)
    if paths is None:
        paths = sample_paths(cfg, rng)
    ch = build_channel(paths, cfg)
    op = assemble_sensing(design_training(cfg), build_combiners(cfg, rng), cfg)
    y = simulate_rx(op, ch.h, rng, noiseless=noiseless)
    obs = quantize(y, make_quantizer(cfg)).with_partition(partition_cv(cfg))
    return ch, op, obs


@pytest.fixture(scope="session")
def scene_small():
    cfg = small_cfg()
    ch, op, obs = build_scene(cfg, seed=0)
    return cfg, ch, op, obs
