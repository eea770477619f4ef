"""Post-hoc tabular explainers, attacks that manipulate them, and defenses."""

__version__ = "0.1.0"
