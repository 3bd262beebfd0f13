"""Robin eigenvalue and torsion concavity laboratory on convex planar domains."""

__version__ = "0.1.0"
