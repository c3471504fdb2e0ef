"""Figure rendering for vfog benchmark CSVs (CLI: ``figures``)."""

from .render import Curve, SchemaError, extract_curves, read_rows, render, render_file

__all__ = ["Curve", "SchemaError", "extract_curves", "read_rows", "render",
           "render_file"]
__version__ = "0.1.0"
