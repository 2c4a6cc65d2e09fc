"""Deterministic seed derivation and random stream construction.

Every stochastic component draws from a numpy Generator whose seed derives
from a single root seed, so any pipeline stage reproduces from
(config, seed) alone and independent stages never share a stream.

Derivation rules (stable by contract, do not change):

- fold_seed(seed, i)   = seed XOR splitmix64(i). Used for cross-validation
  folds; fold 0 of an n_folds=1 sequence therefore equals the plain split
  with that derived seed.
- derive_seed(seed, *indices) chains splitmix64(state XOR splitmix64(index))
  over the indices. Order-dependent, so (cell 2, trial 3) and
  (cell 3, trial 2) land on different streams.

Stream tags used inside a policy trial (arbitrary fixed constants):
environment 11, policy height sampling 13, classifier 17.
"""

import numpy as np

_MASK64 = (1 << 64) - 1

ENV_STREAM = 11
POLICY_STREAM = 13
CLASSIFIER_STREAM = 17


def splitmix64(x: int) -> int:
    """One splitmix64 output step for the given 64-bit input.

    Standard constants (Steele, Lea & Flood); advances by the golden-ratio
    increment then applies the 64-bit finalizer. Pure function of x.
    """
    z = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def fold_seed(seed: int, fold_index: int) -> int:
    """Seed for one cross-validation fold: seed XOR splitmix64(fold_index)."""
    return (int(seed) & _MASK64) ^ splitmix64(int(fold_index))


def derive_seed(seed: int, *indices: int) -> int:
    """Chain a root seed through a sequence of stream indices.

    Each step mixes the running state with splitmix64 of the index, then
    re-mixes, so derivation is order-dependent and well spread even for
    small consecutive indices.
    """
    s = int(seed) & _MASK64
    for idx in indices:
        s = splitmix64(s ^ splitmix64(int(idx)))
    return s


def generator(seed: int) -> np.random.Generator:
    """A PCG64 Generator for the given 64-bit seed."""
    return np.random.Generator(np.random.PCG64(int(seed) & _MASK64))
