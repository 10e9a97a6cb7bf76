import numpy as np
import pytest

from core import SeriesWindow

# X_0 .. X_8: core X_1..X_7 = 2, 10, -4, 1, 6, -12, 3 with one buffer value on each side
FIXTURE_VALUES = [0.5, 2.0, 10.0, -4.0, 1.0, 6.0, -12.0, 3.0, 1.0]


@pytest.fixture
def window():
    return SeriesWindow(np.array(FIXTURE_VALUES), 7, 1)


@pytest.fixture
def series_csv(tmp_path):
    path = tmp_path / "series.csv"
    path.write_text("value\n" + "\n".join(str(v) for v in FIXTURE_VALUES) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def write_csv(tmp_path):
    def _write(name, text):
        path = tmp_path / name
        path.write_text(text, encoding="utf-8")
        return path

    return _write
