"""Set-level outfit compatibility scoring and complementary item retrieval."""

__version__ = "0.1.0"
