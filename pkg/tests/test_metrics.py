import numpy as np
import pytest

from scar.metrics import Rate, TradeoffRow, format_ratio, format_tradeoff_table, sensitivity, specificity


def test_ratio_formatting():
    assert format_ratio(7587, 8227) == "92.22 (7587/8227)"
    assert format_ratio(835, 1773) == "47.10 (835/1773)"
    assert str(Rate(0, 0)) == "n/a (0/0)" and Rate(0, 0).value is None


def test_perfect_selection():
    y = np.array([0, 1, 2])
    assert sensitivity(y, y, y).value == 1.0
    assert specificity(y, y, y).den == 0


def test_counts_by_hand():
    y = np.array([0, 0, 1, 1, 1])
    f = np.array([0, 1, 1, 0, 1])
    fa = np.array([0, 1, 0, 1, 1])
    assert sensitivity(y, f, fa) == Rate(2, 3)
    assert specificity(y, f, fa) == Rate(1, 2)


def test_length_mismatch():
    with pytest.raises(ValueError):
        sensitivity([0, 1], [0], [0])
    with pytest.raises(ValueError):
        specificity([0], [0, 1], [0, 1])


def test_table_text():
    rows = [TradeoffRow(0.0, Rate(5, 6), Rate(0, 0))]
    text = format_tradeoff_table(rows, "FixMatch")
    assert "83.33 (5/6)" in text and "n/a (0/0)" in text
