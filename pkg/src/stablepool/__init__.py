"""Stablecoin issuance backed by an incentivised third-party collateral pool."""

__version__ = "0.1.0"

from .errors import StablepoolError  # noqa: E402
from .money import Amount, Currency, eth, stable, value  # noqa: E402

__all__ = ["Amount", "Currency", "StablepoolError", "__version__", "eth", "stable", "value"]
