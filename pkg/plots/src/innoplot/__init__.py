"""Figure rendering for innosim batch outputs."""

from innoplot.render import SchemaError, main, render

__all__ = ["SchemaError", "main", "render"]
