"""Exception types shared across the package."""


class DataError(ValueError):
    """Malformed or inconsistent census data, keys, or arguments.

    The command line maps this to exit status 1; anything else escaping a
    command is a bug.
    """
