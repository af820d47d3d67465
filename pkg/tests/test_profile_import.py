import numpy as np
import pandas as pd
import pytest

from prandtl_blowup.grid import make_grid
from prandtl_blowup.models import ConfigError
from prandtl_blowup.profile_import import import_profile, profile_on_grid, read_profile


def _write(path, y, a0, **extra):
    pd.DataFrame({"y": y, "a0": a0, **extra}).to_csv(path, index=False)
    return path


def test_read_profile_keeps_required_columns(tmp_path):
    path = _write(tmp_path / "p.csv", [0.0, 1.0], [0.0, 2.0], note=["a", "b"])
    df = read_profile(path)
    assert list(df.columns) == ["y", "a0"]
    assert df["a0"].dtype == float


def test_read_profile_missing_column(tmp_path):
    path = tmp_path / "p.csv"
    pd.DataFrame({"y": [0.0, 1.0]}).to_csv(path, index=False)
    with pytest.raises(ValueError, match="a0"):
        read_profile(path)


def test_profile_is_interpolated_and_padded(tmp_path):
    grid = make_grid(4.0, 16)
    path = _write(tmp_path / "p.csv", [0.0, 1.0, 2.0], [0.0, 1.0, 0.0])
    values = import_profile(path, grid)
    assert values.shape == (17,)
    assert values[grid.n // 4] == pytest.approx(1.0)
    assert values[grid.n // 8] == pytest.approx(0.5)
    assert np.all(values[grid.nodes > 2.0] == 0.0)


@pytest.mark.parametrize(
    "y, a0, message",
    [
        ([0.0], [0.0], "two rows"),
        ([0.0, 2.0, 1.0], [0.0, 1.0, 0.0], "increasing"),
        ([0.5, 1.0], [0.0, 0.0], "y = 0"),
    ],
)
def test_profile_validation(y, a0, message):
    with pytest.raises(ValueError, match=message):
        profile_on_grid(pd.DataFrame({"y": y, "a0": a0}), make_grid(4.0, 16))


def test_missing_profile_file(tmp_path):
    with pytest.raises(ConfigError, match="nope.csv"):
        read_profile(tmp_path / "nope.csv")


def test_empty_profile_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("", encoding="utf-8")
    with pytest.raises(ConfigError, match="empty.csv"):
        read_profile(path)
