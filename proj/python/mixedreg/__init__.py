"""Regression for mixed continuous, count and binary responses.

Thin wrapper over the compiled extension; everything lives in ``_core``.
"""

from ._core import *  # noqa: F401,F403
