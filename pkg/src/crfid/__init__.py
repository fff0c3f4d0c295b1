"""Chipless RFID reading pipeline: calibration, synthetic data, filtering, features and regressors."""

__version__ = "0.1.0"
