import pandas as pd
import pytest

from utils.summarize_report import load_report, ratio_table, rel_mse_table, summarize_report


@pytest.fixture
def report_csv(tmp_path):
    frame = pd.DataFrame(
        {
            "estimator": ["nelson_aalen", "nelson_aalen", "adaptive", "adaptive", "fixed", "fixed"],
            "x": [100.0, 500.0, 100.0, 500.0, 100.0, 500.0],
            "rel_mse": [2.0, 8.0, 1.0, 2.0, 4.0, 4.0],
        }
    )
    path = tmp_path / "report.csv"
    frame.to_csv(path, index=False)
    return path


def test_table_keeps_estimator_order(report_csv):
    table = rel_mse_table(load_report(report_csv))
    assert list(table.index) == ["nelson_aalen", "adaptive", "fixed"]
    assert list(table.columns) == [100.0, 500.0]


def test_ratios_against_step_estimator(report_csv):
    ratios = ratio_table(rel_mse_table(load_report(report_csv)))
    assert ratios.loc["adaptive"].tolist() == [2.0, 4.0]
    assert ratios.loc["fixed"].tolist() == [0.5, 2.0]


def test_missing_baseline(report_csv):
    table = rel_mse_table(load_report(report_csv)).drop(index="nelson_aalen")
    with pytest.raises(ValueError):
        ratio_table(table)


def test_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("estimator,x\nadaptive,1\n", encoding="utf-8")
    with pytest.raises(ValueError):
        load_report(path)


def test_summarize_report(report_csv, tmp_path):
    output = tmp_path / "summary.txt"
    summarize_report(str(report_csv), str(output))
    text = output.read_text(encoding="utf-8")
    assert "RelMSE" in text
    assert "adaptive" in text
