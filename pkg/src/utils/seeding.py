import numpy as np


def derive_seed(*keys: int) -> np.random.SeedSequence:
    """Independent, reproducible stream for a tuple of non-negative integer keys"""
    return np.random.SeedSequence([int(k) for k in keys])


def derive_rng(*keys: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*keys))
