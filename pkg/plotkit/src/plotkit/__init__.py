"""Render figures from the monitored-circuit pipeline's CSV outputs.

This package only reads the documented CSV schemas; it never imports the
simulation package or recomputes any physics quantity.
"""

__version__ = "1.0.0"
