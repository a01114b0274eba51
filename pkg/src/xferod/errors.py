"""Exception hierarchy shared by all xferod modules."""


class XferodError(Exception):
    """Base class for every error raised by this package."""


class FormatError(XferodError):
    """Malformed container file (bad magic, header, or payload length)."""


class UnsupportedTensor(XferodError):
    """Tensor file is valid but violates the dtype/order/ndim contract."""


class InvalidData(XferodError):
    """Numerically invalid input (non-finite values, degenerate shapes)."""


class IoError(XferodError):
    """Underlying I/O failure while reading or writing a file."""


class SchemaError(XferodError):
    """Manifest or config document violates its schema."""


class DanglingReference(SchemaError):
    """Manifest object points at an image id that does not resolve uniquely."""


class MissingFile(XferodError):
    """A file referenced by a manifest does not exist."""


class DuplicateKey(XferodError):
    """Duplicate scenario id in a scenario table."""


class ParseError(XferodError):
    """Unparseable cell or document fragment."""


class RangeError(XferodError):
    """Value outside its contractual range (e.g. map not in [0, 1])."""


class TooFewScenarios(XferodError):
    """Fewer scenarios than a correlation statistic needs."""


class DegenerateTarget(XferodError):
    """Regression/classification target carries no signal (constant column)."""


class DegenerateSeries(XferodError):
    """Correlation input series is constant or all-tied."""


class ProbeError(XferodError):
    """Synthetic probe could not build a valid train/test split."""


class NonConvergedWarning(UserWarning):
    """Evidence fixed point hit the iteration cap; best iterate returned."""
