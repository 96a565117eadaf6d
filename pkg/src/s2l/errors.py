"""Error types shared across the toolkit.

Argument misuse raises plain ``ValueError``; these classes cover problems
with data that came from outside the process (files, manifests).
"""


class S2LError(Exception):
    """Base class for data-level errors raised by this package."""


class FormatError(S2LError):
    """A trajectory, feature, model, or manifest file is malformed."""


class IntegrityError(S2LError):
    """Cross-file references do not line up (e.g. manifest id not in store)."""
