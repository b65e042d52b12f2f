import numpy as np
import pytest

from hingetrack import report


@pytest.fixture
def t():
    return np.arange(0.0, 2.0, 0.01)


def _assert_png(path):
    assert path.exists()
    assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_plot_rates(tmp_path, t):
    rates = {name: np.sin(t)[:, None] * np.ones(3) for name in ("i", "j", "k")}
    out = tmp_path / "rates.png"
    report.plot_rates(t, rates["i"], rates["j"], rates["k"], out)
    _assert_png(out)


def test_plot_projections(tmp_path, t):
    out = tmp_path / "proj.png"
    w_perp = np.sin(t)
    observable = np.abs(w_perp) > 0.3
    report.plot_projections(t, w_perp, np.cos(t), np.sin(2 * t),
                            np.cos(2 * t), observable, out)
    _assert_png(out)


def test_plot_errors(tmp_path, t):
    out = tmp_path / "err.png"
    report.plot_errors(t, 3.0 * np.exp(-t), 5.0 * np.exp(-t), out)
    _assert_png(out)


def test_plot_criteria_summary(tmp_path):
    out = tmp_path / "criteria.png"
    results = [
        {"criterion": 1, "detail": "accuracy", "passed": True},
        {"criterion": 2, "detail": "floor", "passed": False},
    ]
    report.plot_criteria_summary(results, out)
    _assert_png(out)
