"""Underproduction: misalignment between how important a package is and how well its bugs get fixed."""

__version__ = "0.1.0"
