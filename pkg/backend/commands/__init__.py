"""
CLIコマンド
各モジュールが register(subparsers) でサブコマンドを登録する
"""
