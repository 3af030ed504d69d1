import numpy as np

DEFAULT_SEED = 20240601


def make_rng(seed=None):
    """Return a Generator; ``seed`` may already be a Generator or SeedSequence."""
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        seed = DEFAULT_SEED
    return np.random.default_rng(seed)


def spawn_seeds(seed, n):
    """Independent child seed sequences, stable for a given parent seed."""
    if isinstance(seed, np.random.Generator):
        return seed.bit_generator.seed_seq.spawn(n)
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(DEFAULT_SEED if seed is None else seed)
    return seed.spawn(n)
