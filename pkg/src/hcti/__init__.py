"""Healthcare cyber threat intelligence and risk-scoring platform."""

__version__ = "0.1.0"
