"""Executable constructions of volume-preserving plugs, Denjoy fields and PL foliations."""

__version__ = "0.1.0"
