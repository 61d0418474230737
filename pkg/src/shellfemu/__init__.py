"""Inverse material identification for isogeometric Kirchhoff-Love shells."""

__version__ = "0.1.0"
