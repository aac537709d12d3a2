"""Configuration, sweeps, caching, reports and the command-line interface."""
