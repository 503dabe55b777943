"""
モンテカルロ結果の表整形プログラム
simulate が出力するフラットなCSV (estimator, x, rel_mse) を、
推定量×評価点の表と Nelson-Aalen に対する RelMSE 比の表に整形する
"""

from pathlib import Path

import pandas as pd

BASELINE_ESTIMATOR = "nelson_aalen"
DIGITS = 4  # 表示桁数


def load_report(input_path: str) -> pd.DataFrame:
    """フラットなCSVを読み込む"""
    frame = pd.read_csv(input_path)
    missing = {"estimator", "x", "rel_mse"} - set(frame.columns)
    if missing:
        raise ValueError(f"列がありません: {', '.join(sorted(missing))}")
    return frame


def rel_mse_table(frame: pd.DataFrame) -> pd.DataFrame:
    """推定量×評価点の RelMSE 表（推定量は出現順）"""
    order = list(dict.fromkeys(frame["estimator"]))
    table = frame.pivot(index="estimator", columns="x", values="rel_mse")
    return table.loc[order]


def ratio_table(table: pd.DataFrame) -> pd.DataFrame:
    """RelMSE(Nelson-Aalen) / RelMSE(推定量)"""
    if BASELINE_ESTIMATOR not in table.index:
        raise ValueError(f"{BASELINE_ESTIMATOR} の行がありません")
    others = table.drop(index=BASELINE_ESTIMATOR)
    return others.rdiv(table.loc[BASELINE_ESTIMATOR], axis="columns")


def format_output(table: pd.DataFrame, ratios: pd.DataFrame) -> str:
    """出力形式に整形"""
    lines = ["RelMSE", table.round(DIGITS).to_string(), "", "RelMSE比（Nelson-Aalen / 推定量）", ratios.round(DIGITS).to_string()]
    return "\n".join(lines)


def summarize_report(input_path: str, output_path: str) -> None:
    """メイン処理"""
    frame = load_report(input_path)
    table = rel_mse_table(frame)
    ratios = ratio_table(table)
    Path(output_path).write_text(format_output(table, ratios) + "\n", encoding="utf-8")


if __name__ == "__main__":
    import sys

    input_file = sys.argv[1] if len(sys.argv) > 1 else "report.csv"
    output_file = sys.argv[2] if len(sys.argv) > 2 else "summary.txt"

    summarize_report(input_file, output_file)
    print(f"処理完了: {output_file}")
