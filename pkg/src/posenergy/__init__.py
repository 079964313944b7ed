"""Energy-consumption estimates for Proof-of-Stake distributed ledgers."""

__version__ = "0.1.0"
