"""Exception hierarchy shared across the package."""


class SegafurnError(Exception):
    """Base class for all package errors."""

    code = "error"

    def as_dict(self):
        return {"error": self.code, "message": str(self)}


class UnreadableFile(SegafurnError):
    code = "unreadable_file"


class UnsupportedFormat(SegafurnError):
    code = "unsupported_format"


class DegenerateImage(SegafurnError):
    code = "degenerate_image"


class InvalidDims(SegafurnError):
    code = "invalid_dims"


class IndivisibleSize(SegafurnError):
    code = "indivisible_size"


class EmptySplit(SegafurnError):
    code = "empty_split"


class IoError(SegafurnError):
    code = "io_error"


class ShapeMismatch(SegafurnError):
    code = "shape_mismatch"


class MissingWeightFile(IoError):
    code = "missing_weight_file"


class SizeMismatch(SegafurnError):
    code = "size_mismatch"


class UnknownTap(SegafurnError):
    code = "unknown_tap"


class InvalidConfig(SegafurnError):
    code = "invalid_config"


class ChannelMismatch(SegafurnError):
    code = "channel_mismatch"


class WidthMismatch(SegafurnError):
    code = "width_mismatch"


class EmptyBatch(SegafurnError):
    code = "empty_batch"


class UnknownVariant(SegafurnError):
    code = "unknown_variant"


class NonFiniteLoss(SegafurnError):
    code = "non_finite_loss"


class TooSmall(SegafurnError):
    code = "too_small"
