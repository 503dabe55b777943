"""
裾パレート型 Cox 生存解析ライブラリ
"""

from .manifest import TOOL_VERSION

__version__ = TOOL_VERSION
