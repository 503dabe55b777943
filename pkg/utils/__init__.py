from .summarize_report import summarize_report

__all__ = ["summarize_report"]
