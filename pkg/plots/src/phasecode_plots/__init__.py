"""Static figures from phasecode CSV outputs.

This package contains no simulation or analysis logic: every number it
draws comes from the CSV files produced by the ``phasecode`` command-line
tool, keeping the scientific core single-sourced.
"""

__version__ = "0.1.0"
