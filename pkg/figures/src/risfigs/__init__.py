"""Figure regeneration for RIS localization sweep CSVs."""

from .render import KINDS, FigureSpec, MissingColumnError, load_table, render

__all__ = ["KINDS", "FigureSpec", "MissingColumnError", "load_table", "render"]
