"""Global identification of Wiener-model PK/PD parameters by branch-and-bound."""

__version__ = "0.1.0"
