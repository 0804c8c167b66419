"""Multi-UAV data offloading: world model, relay formation, GP trajectory
search, and multi-agent actor-critic training."""

__version__ = "0.1.0"
