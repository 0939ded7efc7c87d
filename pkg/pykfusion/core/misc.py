import numpy as np


def get_rng(seed=None):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def derive_seed(master_seed, *keys):
    """
    Derive an independent 64-bit seed from a master seed and a path of integer keys (e.g. the repetition index).
    Equal inputs always give the same seed; different key paths give statistically independent streams.
    """
    state = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in keys))
    lo, hi = state.generate_state(2, dtype=np.uint32)
    return int(hi) << 32 | int(lo)


def sklearn_seed(seed):
    # scikit-learn only accepts 32-bit seeds
    return int(get_rng(seed).integers(2 ** 32 - 1))
