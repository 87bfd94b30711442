"""Hierarchical bellwether transfer learning over clustered software projects."""
__version__ = "0.1.0"
