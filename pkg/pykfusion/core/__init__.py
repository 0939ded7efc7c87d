from .misc import get_rng, derive_seed
