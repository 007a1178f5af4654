"""
Training schemes: what each one puts on the wire and how.

syncSGD all-reduces the full gradient in fixed-size buckets while the
backward pass is still running. Compressed schemes encode after the
backward pass and send their compressed payload in one phase:

    PowerSGD   two low-rank factors P and Q, each ring all-reduced
    MSTop-K    top-k values plus equally sized 32-bit indices, all-gathered
    signSGD    one bit per 32-bit element, all-gathered
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import ClassVar, Optional

from gradsim.costmodel import BYTES_PER_MB, Collective, Payload, check_number
from gradsim.errors import ConfigurationError, UndefinedRatioError, ValidationError

DEFAULT_BUCKET_SIZE = 25 * BYTES_PER_MB
DEFAULT_GAMMA = 1.07
SIGN_BITS_PER_ELEMENT = 32


@dataclass(frozen=True)
class ModelProfile:
    """Measured characteristics of one model at one per-worker batch size.

    ``backward_time`` is the single-worker backward pass in seconds and
    ``gamma`` the slowdown of that pass while bucket all-reduces overlap it.
    """

    gradient_size: float
    backward_time: float
    gamma: float = DEFAULT_GAMMA
    bucket_size: float = DEFAULT_BUCKET_SIZE
    batch_size: Optional[int] = None
    name: str = ""

    def __post_init__(self):
        for name in ("gradient_size", "backward_time", "bucket_size"):
            value = getattr(self, name)
            check_number(name, value)
            if value <= 0:
                raise ValidationError(name, f"must be > 0, got {value}")
        check_number("gamma", self.gamma)
        if self.gamma < 1:
            raise ValidationError("gamma", f"must be >= 1, got {self.gamma}")
        if self.batch_size is not None:
            if isinstance(self.batch_size, bool) or not isinstance(self.batch_size, int):
                raise ValidationError("batch_size", f"expected an integer, got {self.batch_size!r}")
            if self.batch_size < 1:
                raise ValidationError("batch_size", f"must be >= 1, got {self.batch_size}")


@dataclass(frozen=True)
class BucketPlan:
    full_buckets: int
    full_size: float
    tail_size: float

    @property
    def count(self):
        return self.full_buckets + 1


def bucketize(model):
    """Split the gradient into k-1 full buckets plus one tail bucket.

    The tail is the remainder, or a full bucket when the gradient size is
    an exact multiple of the bucket size.
    """
    g, b = model.gradient_size, model.bucket_size
    whole, rest = divmod(g, b)
    whole = int(whole)
    if rest == 0:
        return BucketPlan(full_buckets=whole - 1, full_size=b, tail_size=b)
    return BucketPlan(full_buckets=whole, full_size=b, tail_size=rest)


@dataclass(frozen=True)
class CompressionScheme:
    """Base for all training schemes.

    ``payload_scale`` multiplies every compressed payload; it is 1 except
    for hypothetical schemes built by the encode/size tradeoff analysis.
    """

    name: str
    encode_decode_time: float = 0.0
    payload_scale: float = 1.0

    kind: ClassVar[str] = ""
    allreduce_compatible: ClassVar[bool] = False

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise ValidationError("name", "scheme name must be a non-empty string")
        check_number("encode_decode_time", self.encode_decode_time)
        if self.encode_decode_time < 0:
            raise ValidationError(
                "encode_decode_time", f"must be >= 0, got {self.encode_decode_time}"
            )
        check_number("payload_scale", self.payload_scale)
        if self.payload_scale <= 0:
            raise ValidationError("payload_scale", f"must be > 0, got {self.payload_scale}")

    @property
    def compressed(self):
        return True

    def payloads(self, model):
        raise NotImplementedError


@dataclass(frozen=True)
class SyncSGD(CompressionScheme):
    kind: ClassVar[str] = "syncsgd"
    allreduce_compatible: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        if self.encode_decode_time != 0:
            raise ValidationError("encode_decode_time", "syncSGD does no encoding; must be 0")
        if self.payload_scale != 1:
            raise ValidationError("payload_scale", "syncSGD sends the raw gradient; must be 1")

    @property
    def compressed(self):
        return False

    def payloads(self, model):
        plan = bucketize(model)
        sizes = [plan.full_size] * plan.full_buckets + [plan.tail_size]
        return [(Payload(size), Collective.RING_REDUCE) for size in sizes]


@dataclass(frozen=True)
class PowerSGD(CompressionScheme):
    """Rank-``rank`` PowerSGD.

    Payload bytes may be given directly or derived from ``layer_shapes``;
    direct values win when both are present.
    """

    rank: int = 4
    payload_p: Optional[float] = None
    payload_q: Optional[float] = None
    layer_shapes: Optional[tuple] = None
    element_size: int = 4

    kind: ClassVar[str] = "powersgd"
    allreduce_compatible: ClassVar[bool] = True

    def __post_init__(self):
        super().__post_init__()
        if isinstance(self.rank, bool) or not isinstance(self.rank, int) or self.rank < 1:
            raise ValidationError("rank", f"must be an integer >= 1, got {self.rank!r}")
        for name in ("payload_p", "payload_q"):
            value = getattr(self, name)
            if value is not None:
                check_number(name, value)
                if value < 0:
                    raise ValidationError(name, f"must be >= 0, got {value}")
        if (self.payload_p is None) != (self.payload_q is None):
            raise ValidationError("payload_p", "payload_p and payload_q must be given together")
        if self.layer_shapes is not None:
            object.__setattr__(
                self, "layer_shapes", tuple(tuple(shape) for shape in self.layer_shapes)
            )

    def resolved_payloads(self):
        """(P bytes, Q bytes) before ``payload_scale`` is applied."""
        if self.payload_p is not None:
            return self.payload_p, self.payload_q
        if self.layer_shapes:
            return derive_powersgd_payloads(self.layer_shapes, self.rank, self.element_size)
        raise ConfigurationError(
            f"PowerSGD scheme {self.name!r} needs payload_p/payload_q or layer_shapes"
        )

    def payloads(self, model):
        p_bytes, q_bytes = self.resolved_payloads()
        return [
            (Payload(p_bytes * self.payload_scale), Collective.RING_REDUCE),
            (Payload(q_bytes * self.payload_scale), Collective.RING_REDUCE),
        ]


@dataclass(frozen=True)
class MSTopK(CompressionScheme):
    """Top-``fraction`` sparsification; indices cost as much as values."""

    fraction: float = 0.01

    kind: ClassVar[str] = "mstopk"

    def __post_init__(self):
        super().__post_init__()
        check_number("fraction", self.fraction)
        if not 0 <= self.fraction <= 1:
            raise ValidationError("fraction", f"must lie in [0, 1], got {self.fraction}")

    def value_payload(self, model):
        return self.fraction * model.gradient_size * self.payload_scale

    def index_payload(self, model):
        return self.value_payload(model)

    def payloads(self, model):
        return [
            (Payload(self.value_payload(model)), Collective.ALL_GATHER),
            (Payload(self.index_payload(model)), Collective.ALL_GATHER),
        ]


@dataclass(frozen=True)
class SignSGD(CompressionScheme):
    kind: ClassVar[str] = "signsgd"

    def payloads(self, model):
        size = model.gradient_size / SIGN_BITS_PER_ELEMENT * self.payload_scale
        return [(Payload(size), Collective.ALL_GATHER)]


SCHEME_TYPES = {cls.kind: cls for cls in (SyncSGD, PowerSGD, MSTopK, SignSGD)}


def compressed_payloads(scheme, model):
    """List of (Payload, Collective) the scheme sends per iteration."""
    return scheme.payloads(model)


def _matricize(shape):
    if len(shape) == 0:
        raise ConfigurationError("layer shape must have at least one dimension")
    if any(isinstance(d, bool) or not isinstance(d, int) or d < 1 for d in shape):
        raise ConfigurationError(f"layer dimensions must be integers >= 1, got {shape!r}")
    if len(shape) == 1:
        return None
    return shape[0], math.prod(shape[1:])


def derive_powersgd_payloads(layer_shapes, rank, element_size=4):
    """Bytes of the P and Q factors for a list of layer shapes.

    A matrix layer of shape (rows, cols) contributes rows*r' elements to P
    and cols*r' to Q, with r' = min(rank, rows, cols). Higher-rank tensors
    are flattened to (shape[0], rest). One-dimensional layers (biases,
    norms) are sent uncompressed and counted in P.
    """
    if not layer_shapes:
        raise ConfigurationError("layer_shapes is empty")
    if isinstance(rank, bool) or not isinstance(rank, int) or rank < 1:
        raise ConfigurationError(f"rank must be an integer >= 1, got {rank!r}")
    p_elems = q_elems = raw_elems = 0
    for shape in layer_shapes:
        shape = tuple(shape)
        matrix = _matricize(shape)
        if matrix is None:
            p_elems += shape[0]
            raw_elems += shape[0]
            continue
        rows, cols = matrix
        r = min(rank, rows, cols)
        p_elems += rows * r
        q_elems += cols * r
        raw_elems += rows * cols
    if p_elems + q_elems >= raw_elems:
        warnings.warn(
            f"rank {rank} PowerSGD sends {p_elems + q_elems} elements for a "
            f"{raw_elems}-element gradient (ratio {raw_elems / (p_elems + q_elems):.3g}x)",
            stacklevel=2,
        )
    return p_elems * element_size, q_elems * element_size


def wire_bytes(scheme, model):
    return sum(payload.size for payload, _ in scheme.payloads(model))


def effective_compression_ratio(scheme, model):
    """Gradient bytes over bytes actually sent per iteration."""
    total = wire_bytes(scheme, model)
    if total == 0:
        raise UndefinedRatioError(f"scheme {scheme.name!r} sends no bytes")
    return model.gradient_size / total


def values_only_compression_ratio(scheme, model):
    """Like :func:`effective_compression_ratio` but ignoring MSTop-K indices.

    This is the figure sparsification methods usually advertise (1% -> 100x).
    """
    if isinstance(scheme, MSTopK):
        values = scheme.value_payload(model)
        if values == 0:
            raise UndefinedRatioError(f"scheme {scheme.name!r} sends no bytes")
        return model.gradient_size / values
    return effective_compression_ratio(scheme, model)
