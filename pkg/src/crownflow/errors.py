"""Exception hierarchy with machine-parsable error ids.

Every error carries an ``err_id`` used by the CLI on stderr, and an
``exit_code`` (2 = validation/IO, 3 = internal invariant violation).
"""


class CrownflowError(Exception):
    err_id = "error"
    exit_code = 2


class DimensionMismatchError(CrownflowError):
    err_id = "dim_mismatch"


class ValidationError(CrownflowError):
    err_id = "validation"


class UnknownLabelError(CrownflowError):
    err_id = "unknown_label"


class LabelCapacityError(ValidationError):
    """More than 65535 instances in one tile."""

    err_id = "label_capacity"


class PlacementError(CrownflowError):
    """Scene generator could not place the requested crowns."""

    err_id = "placement"

    def __init__(self, msg, achieved=0):
        super().__init__(msg)
        self.achieved = achieved


class InternalError(CrownflowError):
    err_id = "internal"
    exit_code = 3


# --- file format errors (io_formats) -------------------------------------

class NpyFormatError(ValidationError):
    err_id = "npy_format"


class NpyMagicError(NpyFormatError):
    err_id = "npy_bad_magic"


class NpyVersionError(NpyFormatError):
    err_id = "npy_bad_version"


class NpyDtypeError(NpyFormatError):
    err_id = "npy_bad_dtype"


class NpyOrderError(NpyFormatError):
    err_id = "npy_fortran_order"


class NpyTruncatedError(NpyFormatError):
    err_id = "npy_truncated"


class PngFormatError(ValidationError):
    err_id = "png_format"


class ManifestError(ValidationError):
    err_id = "manifest"
