"""Two-stage risk-averse pre-positioning and dispatch of flexible capacity modules."""

__version__ = "0.1.0"
FORMAT_VERSION = "1"
