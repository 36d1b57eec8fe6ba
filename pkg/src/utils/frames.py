import math

import numpy as np

FRAME_MODES = ("uniform", "jitter")


def subsample_indices(length: int, count: int, mode: str = "uniform", rng=None) -> list[int]:
    """
    Pick ``count`` indices into a list of ``length`` frames, one per equal-width bin.

    Args:
        length: Number of available frames (>= 1)
        count: Number of frames wanted (>= 1)
        mode: "uniform" takes each bin's centre, "jitter" a seeded-random point inside it
        rng: numpy Generator, required for "jitter"

    Returns:
        List of indices, repeating frames when length < count
    """
    if length < 1 or count < 1:
        raise ValueError(f"Cannot pick {count} of {length} frames")
    if mode == "uniform":
        offsets = np.full(count, 0.5)
    elif mode == "jitter":
        if rng is None:
            raise ValueError("jitter sampling needs an rng")
        offsets = rng.random(count)
    else:
        raise ValueError(f"Unknown frame mode '{mode}', expected one of {FRAME_MODES}")
    return [min(length - 1, math.floor((i + offsets[i]) * length / count)) for i in range(count)]
