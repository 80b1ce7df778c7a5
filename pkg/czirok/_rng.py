import numpy as np

SEED_MASK = (1 << 64) - 1


def make_rng(seed, run_index=0):
    """Generador Philox (basado en contador) con semilla seed XOR run_index."""
    key = (int(seed) ^ int(run_index)) & SEED_MASK
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
