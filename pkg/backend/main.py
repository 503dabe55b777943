"""
裾パレート型Cox生存解析ツール - コマンドライン
推定・予測・閾値選択・集約・シミュレーション・較正のコマンドを登録して実行する
"""

import argparse
import json
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from commands import aggregate, calibrate, fit, predict, simulate, threshold
from commands.common import runtime_parent
from survival import __version__
from survival.errors import SurvivalError
from survival.settings import default_settings

logger = logging.getLogger("survival.cli")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paretocox",
        description="裾をパレート分布で表すセミパラメトリックCoxモデルの推定ツール",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # コマンド登録
    fit.register(subparsers)
    predict.register(subparsers)
    threshold.register(subparsers)
    aggregate.register(subparsers)
    simulate.register(subparsers)
    calibrate.register(subparsers)

    config_parser = subparsers.add_parser("config", help="既定の設定値を表示", parents=[runtime_parent()])
    config_parser.set_defaults(handler=show_config)
    return parser


def show_config(args: argparse.Namespace) -> int:
    """既定の設定値を表示"""
    print(json.dumps(default_settings(), ensure_ascii=False, indent=2))
    return EXIT_OK


def configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
        force=True,
    )


def format_validation_error(error: ValidationError) -> str:
    """フィールドのパス付きで検証エラーを整形"""
    return "; ".join(
        f"{'.'.join(str(part) for part in item['loc']) or '(root)'}: {item['msg']}" for item in error.errors()
    )


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    configure_logging(args.log_level)
    try:
        return args.handler(args)
    except ValidationError as e:
        print(f"設定エラー: {format_validation_error(e)}", file=sys.stderr)
        return EXIT_USAGE
    except SurvivalError as e:
        print(f"エラー: {e.detail}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception("予期しないエラー")
        print(f"予期しないエラーが発生しました: {e}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
