class DataError(Exception):
    """Malformed or inconsistent input data (CLI maps this to exit code 2)."""
