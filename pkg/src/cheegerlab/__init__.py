"""Numerical lab for Cheeger deformations induced by Lie groupoid actions."""

__version__ = "0.1.0"
