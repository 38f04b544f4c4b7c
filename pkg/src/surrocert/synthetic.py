"""Synthetic stand-in for the structural reserve-factor case study.

Features: an ordinal ``frame`` index, a cyclic ``stringer`` index and
uniform loads in [0, 1]. Outputs: six reserve factors in [0, 5] built as

    y_j = 2.5 + 0.55 * (L s)_j + noise_j,   clipped to [0, 5]

where ``s`` holds five independent, exactly standardized latent factors:

    s1  standardized sum of sin(pi x) over the first third of the loads
    s2  standardized sum of x^2 over the second third
    s3  standardized sum of exp(x) over the last third
    s4  sqrt(2) cos(2 pi stringer / q)
    s5  standardized frame index

and ``L`` is a fixed 6x5 mixing matrix with unit-norm rows. Because the
factors are independent with unit variance, the output correlation is
known in closed form (``target_correlation``). The noise standard
deviation grows linearly with the noiseless output when
``heteroscedastic`` is set.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .dataset import CYCLIC, ORDINAL, ColumnSpec, Dataset

MIXING = np.array([
    [0.9, 0.3, 0.1, 0.2, 0.2],
    [0.8, 0.4, 0.2, 0.3, 0.2],
    [0.7, -0.2, 0.5, 0.3, 0.3],
    [0.2, 0.9, 0.2, 0.2, 0.3],
    [0.1, 0.8, -0.4, 0.3, 0.3],
    [-0.5, 0.3, 0.6, 0.4, 0.4],
])
MIXING = MIXING / np.linalg.norm(MIXING, axis=1, keepdims=True)
CENTER = 2.5
SPREAD = 0.55

# mean and variance of each load transform for x ~ U(0, 1)
_MOMENTS = {
    "sin": (2 / np.pi, 0.5 - 4 / np.pi ** 2),
    "sq": (1 / 3, 1 / 5 - 1 / 9),
    "exp": (np.e - 1, (np.e ** 2 - 1) / 2 - (np.e - 1) ** 2),
}
_TRANSFORMS = {"sin": lambda x: np.sin(np.pi * x), "sq": np.square, "exp": np.exp}


def _noise_sd(base, noise, heteroscedastic):
    if not heteroscedastic:
        return np.full_like(base, noise)
    return noise * (0.5 + 0.3 * base)


def latent_factors(frame, stringer, loads, n_frames, n_stringers) -> np.ndarray:
    groups = np.array_split(np.arange(loads.shape[1]), 3)
    cols = []
    for key, g in zip(("sin", "sq", "exp"), groups):
        mu, var = _MOMENTS[key]
        s = _TRANSFORMS[key](loads[:, g]).sum(axis=1)
        cols.append((s - len(g) * mu) / np.sqrt(len(g) * var))
    cols.append(np.sqrt(2) * np.cos(2 * np.pi * stringer / n_stringers))
    cols.append((frame - (n_frames - 1) / 2) / np.sqrt((n_frames ** 2 - 1) / 12))
    return np.column_stack(cols)


def target_correlation(noise: float = 0.02, heteroscedastic: bool = True) -> np.ndarray:
    """Population correlation of the (unclipped) outputs."""
    cov = SPREAD ** 2 * MIXING @ MIXING.T
    if heteroscedastic:
        # E[(0.5 + 0.3 base)^2] with base ~ (CENTER, SPREAD^2)
        extra = noise ** 2 * ((0.5 + 0.3 * CENTER) ** 2 + 0.09 * SPREAD ** 2)
    else:
        extra = noise ** 2
    cov = cov + extra * np.eye(len(cov))
    d = np.sqrt(np.diag(cov))
    return cov / np.outer(d, d)


def synthetic_schema(n_features: int = 26, n_stringers: int = 40, m: int = 6) -> list:
    n_loads = n_features - 2
    cols = [ColumnSpec("frame", ORDINAL), ColumnSpec("stringer", CYCLIC, cycle_length=n_stringers)]
    cols += [ColumnSpec(f"load_{i + 1:02d}") for i in range(n_loads)]
    cols += [ColumnSpec(f"rf_{j + 1}", role="output") for j in range(m)]
    return cols


def generate_synthetic_case(seed=0, n_rows: int = 20000, n_features: int = 26, n_frames: int = 20,
                            n_stringers: int = 40, noise: float = 0.02,
                            heteroscedastic: bool = True) -> Dataset:
    """Draw the synthetic reserve-factor dataset (see module docstring)."""
    if n_rows < 1000:
        raise ValueError("synthetic case needs n_rows >= 1000")
    if n_features < 5:
        raise ValueError("need at least 5 features (frame, stringer and 3 loads)")
    rng = np.random.default_rng(seed)
    frame = rng.integers(0, n_frames, n_rows)
    stringer = rng.integers(0, n_stringers, n_rows)
    loads = rng.uniform(size=(n_rows, n_features - 2))
    s = latent_factors(frame, stringer, loads, n_frames, n_stringers)
    base = CENTER + SPREAD * s @ MIXING.T
    y = base + _noise_sd(base, noise, heteroscedastic) * rng.standard_normal(base.shape)
    y = np.clip(y, 0.0, 5.0)
    schema = synthetic_schema(n_features, n_stringers, MIXING.shape[0])
    data = {"frame": frame, "stringer": stringer}
    for i in range(loads.shape[1]):
        data[f"load_{i + 1:02d}"] = loads[:, i]
    for j in range(y.shape[1]):
        data[f"rf_{j + 1}"] = y[:, j]
    return Dataset(schema, pd.DataFrame(data))
