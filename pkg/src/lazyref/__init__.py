"""Refinement type checking and evaluation for a lazy core calculus."""

__version__ = "0.1.0"
