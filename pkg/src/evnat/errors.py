"""Exception hierarchy.

Every exception carries a stable ``code`` used in the CLI's machine-readable
error record, so callers can branch on the code instead of the class name.
"""

from __future__ import annotations


class EvnatError(Exception):
    code = "EvnatError"


# -- parsing / IO ---------------------------------------------------------


class ParseError(EvnatError, ValueError):
    code = "ParseError"


class TruncatedRecordError(ParseError):
    code = "TruncatedRecord"


class AddressOutOfBoundsError(ParseError):
    code = "AddressOutOfBounds"


class EmptyHeaderMalformedError(ParseError):
    code = "EmptyHeaderMalformed"


class ValueOverflowError(EvnatError, ValueError):
    code = "ValueOverflow"


class LabelOutOfRangeError(EvnatError, ValueError):
    code = "LabelOutOfRange"


class UnsupportedMagicError(ParseError):
    code = "UnsupportedMagic"


class MaxvalUnsupportedError(ParseError):
    code = "MaxvalUnsupported"


class BodyTooShortError(ParseError):
    code = "BodyTooShort"


class MissingCounterpartError(EvnatError, FileNotFoundError):
    code = "MissingCounterpart"


class SizeMismatchError(EvnatError, ValueError):
    code = "SizeMismatch"


# -- image / spike processing ---------------------------------------------


class MultiChannelInputError(EvnatError, ValueError):
    code = "MultiChannelInput"


class ThresholdOrderError(EvnatError, ValueError):
    code = "ThresholdOrder"


# -- tensors / networks ---------------------------------------------------


class ShapeMismatchError(EvnatError, ValueError):
    code = "ShapeMismatch"


class NonIntegralOutputError(EvnatError, ValueError):
    code = "NonIntegralOutput"


class GraphConsumedError(EvnatError, RuntimeError):
    code = "GraphConsumed"


class IndivisibleSpatialSizeError(EvnatError, ValueError):
    code = "IndivisibleSpatialSize"


class SpatialCollapseError(EvnatError, ValueError):
    code = "SpatialCollapse"


class EmptyDatasetError(EvnatError, ValueError):
    code = "EmptyDataset"


class GeometryMismatchError(EvnatError, ValueError):
    code = "GeometryMismatch"


class CheckpointFormatError(ParseError):
    code = "CheckpointFormat"


# -- harness --------------------------------------------------------------


class MissingInputError(EvnatError, FileNotFoundError):
    code = "MissingInput"


class UnsupportedCombinationError(EvnatError, ValueError):
    code = "UnsupportedCombination"


class ReportWriteFailureError(EvnatError, OSError):
    code = "ReportWriteFailure"


class CountMismatchError(EvnatError, ValueError):
    code = "CountMismatch"
