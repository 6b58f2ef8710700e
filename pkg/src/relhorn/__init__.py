"""relhorn: relational verification of recursive programs through Horn clauses."""

__version__ = "0.1.0"
