"""Seeded instance generation for the experiment harness."""
from __future__ import annotations

import math

import numpy as np

from ..dinv import LinearSystemInstance, grover_fixture, random_instance
from ..errors import ParameterError
from ..numerics import random_state, random_unitary
from .config import ConfigError, InstanceSpec

# band offsets u place |lambda| at 3^-(k+1) * 3^u, away from the band edges
BAND_OFFSETS = (0.05, 0.95)
TOP_BAND_OFFSETS = (0.05, 0.35)


def instance_seeds(spec: InstanceSpec):
    """One seed per requested instance, derived from the configured seed."""
    if spec.law == "grover":
        return [spec.seed or 0] * spec.count
    if spec.seed is None:
        raise ConfigError("a seed is required for randomized instance laws")
    return [spec.seed + i for i in range(spec.count)]


def band_instance(band_counts, seed):
    """Hermitian instance with band_counts[k] eigenvalues of magnitude in [3^-(k+1), 3^-k).

    The normalizations are alpha_A = 1 and alpha_Ainv = 3^m, so the band of
    each eigenvalue is its clock band.  Band 0 is capped at 1/2 so that
    alpha_A = 1 dominates twice the norm.
    """
    counts = [int(c) for c in band_counts]
    if any(c < 0 for c in counts) or sum(counts) == 0:
        raise ConfigError("band counts must be nonnegative with a positive total")
    m = len(counts)
    rng = np.random.default_rng(seed)
    mags = []
    for k, c in enumerate(counts):
        lo, hi = TOP_BAND_OFFSETS if k == 0 else BAND_OFFSETS
        mags.extend(3.0 ** (-(k + 1) + rng.uniform(lo, hi, size=c)))
    mags = np.array(mags)
    lam = rng.choice([-1.0, 1.0], size=mags.size) * mags
    d = lam.size
    V = random_unitary(d, rng)
    A = (V * lam) @ V.conj().T
    b = random_state(d, rng)
    return LinearSystemInstance(A, b, alpha_A=1.0, alpha_Ainv=3.0**m)


def generate_instance(spec: InstanceSpec, seed=None):
    """Deterministic instance for the given spectrum law and seed."""
    seed = spec.seed if seed is None else seed
    if spec.law == "grover":
        try:
            inst, _ = grover_fixture(spec.dimension, spec.marked)
        except ParameterError as exc:
            raise ConfigError(str(exc)) from exc
        return inst
    if seed is None:
        raise ConfigError("a seed is required for randomized instance laws")
    if spec.law == "log-uniform":
        return random_instance(spec.dimension, seed, condition=spec.kappa)
    if spec.law == "bands":
        if spec.band_counts is None:
            raise ConfigError("the band law needs band_counts")
        if sum(spec.band_counts) != spec.dimension:
            raise ConfigError("band counts must add up to the dimension")
        return band_instance(spec.band_counts, seed)
    raise ConfigError(f"unknown law {spec.law!r}")


def fraction_instance(kappa, fraction, d, seed):
    """Instance with ||A^-1 b|| = fraction * ||A^-1||, eigenvalues log-uniform in [1/kappa, 1].

    b mixes the eigenvectors of the smallest and largest magnitudes, which
    requires fraction >= 1/kappa.
    """
    if not 1 / kappa <= fraction <= 1:
        raise ConfigError(f"fraction {fraction} is infeasible for kappa {kappa}")
    rng = np.random.default_rng(seed)
    mags = np.exp(rng.uniform(-math.log(kappa), 0, size=d))
    mags[0], mags[-1] = 1.0, 1.0 / kappa
    lam = rng.choice([-1.0, 1.0], size=d) * mags
    V = random_unitary(d, rng)
    A = (V * lam) @ V.conj().T
    if kappa == 1:
        cos2 = 1.0
    else:
        cos2 = min(1.0, max(0.0, (fraction**2 * kappa**2 - 1) / (kappa**2 - 1)))
    b = math.sqrt(cos2) * V[:, -1] + math.sqrt(1 - cos2) * V[:, 0]
    return LinearSystemInstance(A, b)
