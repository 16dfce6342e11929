"""Attack lab for a textbook-RSA + AES-ECB request protocol."""

__version__ = "0.1.0"
