"""County-level corn yield forecasting with a NumPy LSTM.

Modules, roughly in pipeline order: ``ingest`` (CSV parsing and synthetic
data), ``detrend``, ``features``, ``augment``, ``select``, ``lstm``,
``train``, ``evaluate``, ``persist`` and ``cli``.
"""

__version__ = "0.1.0"
