"""Multistep daily electricity-consumption forecasting with cyclical calendar
encoding and a stacked LSTM/CNN ensemble."""

__version__ = "0.1.0"
