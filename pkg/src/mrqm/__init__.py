"""Design and verification tools for multiresonator spin quantum memory."""

__version__ = "0.1.0"
