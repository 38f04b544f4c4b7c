import numpy as np
import pandas as pd
import pytest

from surrocert.dataset import ColumnSpec, Dataset


def small_dataset(N=60, seed=0, ci=False):
    rng = np.random.default_rng(seed)
    schema = [ColumnSpec("frame", "ordinal"), ColumnSpec("stringer", "cyclic", cycle_length=8),
              ColumnSpec("x1"), ColumnSpec("x2", ci=("x2_lo", "x2_hi") if ci else None),
              ColumnSpec("y", role="output", ci=("y_lo", "y_hi") if ci else None)]
    x1, x2 = rng.uniform(size=N), rng.uniform(size=N)
    df = pd.DataFrame({"frame": rng.integers(0, 3, N), "stringer": rng.integers(0, 8, N),
                       "x1": x1, "x2": x2, "y": 2 * x1 + x2})
    if ci:
        df["x2_lo"], df["x2_hi"] = df.x2 - 0.05, df.x2 + 0.05
        df["y_lo"], df["y_hi"] = df.y - 0.1, df.y + 0.1
        df.loc[df.index[N // 2:], ["x2_lo", "x2_hi", "y_lo", "y_hi"]] = np.nan
    return Dataset(schema, df)


@pytest.fixture
def ds():
    return small_dataset()
