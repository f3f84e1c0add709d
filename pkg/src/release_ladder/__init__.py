"""Two-reset release ladders with a controlled publication clock."""
__version__ = "0.1.0"
