"""Shared generators for random admissible parameter sets."""

import numpy as np

from hbvcapsid import model
from hbvcapsid.params import BASELINE


def random_params(rng, r0=None, spread=2.0, min_rs=0.0):
    """Random parameters around the baseline with ``R_s > min_rs``.

    Rates are drawn log-uniformly within ``spread`` of the baseline, alpha
    uniformly in [0.3, 1] and gamma uniformly in [0, 2 x baseline]. When
    ``r0`` is given, ``k`` is rescaled so that R0 equals it (R0 is linear
    in k).
    """
    while True:
        scale = np.exp(rng.uniform(-np.log(spread), np.log(spread), size=7))
        params = BASELINE.replace(
            **{
                "lambda": BASELINE.lam * scale[0],
                "mu": BASELINE.mu * scale[1],
                "k": BASELINE.k * scale[2],
                "a": BASELINE.a * scale[3],
                "beta": BASELINE.beta * scale[4],
                "delta": BASELINE.delta * scale[5],
                "c": BASELINE.c * scale[6],
                "alpha": rng.uniform(0.3, 1.0),
                "gamma": rng.uniform(0.0, 2.0 * BASELINE.gamma),
            }
        )
        if model.compute_rs(params) > min_rs:
            break
    if r0 is not None:
        params = params.replace(k=params.k * r0 / model.compute_r0(params))
    return params


def random_r0_split(rng, n, below=(0.3, 0.95), above=(1.05, 3.0)):
    """Targets alternating between the two sides of the threshold."""
    return [rng.uniform(*(below if i % 2 == 0 else above)) for i in range(n)]
