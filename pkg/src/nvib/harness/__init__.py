"""Data, metrics, verification, plots and the command-line interface."""
