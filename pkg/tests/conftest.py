import numpy as np
import pytest

from misscomp.indicators import CATEGORICAL, NUMERIC, Dataset


def dataset_from_arrays(named_columns):
    """Build a Dataset from {name: list} pairs; None marks missing cells.

    Lists of numbers become numeric columns (None -> NaN), anything else
    becomes a categorical object column.
    """
    names = list(named_columns)
    columns = []
    kinds = []
    for name in names:
        raw = named_columns[name]
        numeric = all(v is None or isinstance(v, (int, float)) for v in raw)
        if numeric:
            col = np.array([np.nan if v is None else float(v) for v in raw])
            kinds.append(NUMERIC)
        else:
            col = np.array([None if v is None else str(v) for v in raw], dtype=object)
            kinds.append(CATEGORICAL)
        columns.append(col)
    return Dataset(column_names=names, columns=columns, kinds=kinds)


@pytest.fixture
def small_dataset():
    # 8 rows, y1 and y2 partially missing, z complete, label categorical with holes
    return dataset_from_arrays(
        {
            "y1": [1.0, None, 3.0, None, 5.0, 6.0, 7.0, None],
            "y2": [None, 2.0, 3.0, 4.0, None, 6.0, 7.0, 8.0],
            "z": [0.5, 1.5, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5],
            "label": ["a", "b", None, "a", "b", None, "a", "b"],
        }
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20260818)
