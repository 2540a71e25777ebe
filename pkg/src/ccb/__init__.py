"""Concentration bounds for heterogeneous bounded sums and their chance-constrained uses."""

from .version import VERSION

__version__ = VERSION
