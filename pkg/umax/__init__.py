"""umax - command-line servers and client for uma_suite."""

__version__ = "0.1.0"
