"""
Latency-bandwidth (alpha-beta) cost models for the collectives used in
data-parallel gradient aggregation.

All quantities are in canonical units: bytes, seconds, bytes per second.
Every function here is pure.

    ring-reduce       2*alpha*(p-1)      + 2*n*(p-1) / (p*BW)
    tree-reduce       2*alpha*ceil(lg p) + 2*n*ceil(lg p) / BW
    parameter server  2*alpha            + 2*n*(p-1) / BW
    all-gather        alpha_ag*(p-1)     + n*(p-1) / BW

``alpha`` is a per-hop latency. All-gather uses its own per-step latency
``allgather_latency``, which defaults to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

from gradsim.errors import ValidationError

# Decimal prefixes throughout: vendor-reported model sizes are decimal.
BYTES_PER_MB = 1e6
BYTES_PER_S_PER_GBPS = 1.25e8


class Collective(str, Enum):
    RING_REDUCE = "ring-reduce"
    TREE_REDUCE = "tree-reduce"
    PARAMETER_SERVER = "parameter-server"
    ALL_GATHER = "all-gather"


def check_number(field, value):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(field, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(field, f"must be finite, got {value!r}")


@dataclass(frozen=True)
class NetworkProfile:
    """Flat network of ``workers`` peers joined by links of equal bandwidth.

    Every GPU counts as one ring member; intra-node peers are not treated
    specially.
    """

    workers: int
    bandwidth: float
    latency: float = 0.0
    allgather_latency: float = 0.0

    def __post_init__(self):
        if isinstance(self.workers, bool) or not isinstance(self.workers, int):
            raise ValidationError("workers", f"expected an integer, got {self.workers!r}")
        if self.workers < 1:
            raise ValidationError("workers", f"must be >= 1, got {self.workers}")
        check_number("bandwidth", self.bandwidth)
        if self.bandwidth <= 0:
            raise ValidationError("bandwidth", f"must be > 0, got {self.bandwidth}")
        for name in ("latency", "allgather_latency"):
            value = getattr(self, name)
            check_number(name, value)
            if value < 0:
                raise ValidationError(name, f"must be >= 0, got {value}")


@dataclass(frozen=True)
class Payload:
    size: float

    def __post_init__(self):
        check_number("size", self.size)
        if self.size < 0:
            raise ValidationError("size", f"must be >= 0, got {self.size}")


def tree_depth(workers):
    """Binary-tree depth ceil(log2 p), computed exactly on integers."""
    return (workers - 1).bit_length()


def latency_term(collective, net):
    p = net.workers
    if p == 1:
        return 0.0
    collective = Collective(collective)
    if collective is Collective.RING_REDUCE:
        return 2 * net.latency * (p - 1)
    if collective is Collective.TREE_REDUCE:
        return 2 * net.latency * tree_depth(p)
    if collective is Collective.PARAMETER_SERVER:
        return 2 * net.latency
    return net.allgather_latency * (p - 1)


def bandwidth_term(collective, size, net):
    p, bw = net.workers, net.bandwidth
    if p == 1:
        return 0.0
    collective = Collective(collective)
    if collective is Collective.RING_REDUCE:
        return 2 * size * (p - 1) / (p * bw)
    if collective is Collective.TREE_REDUCE:
        return 2 * size * tree_depth(p) / bw
    if collective is Collective.PARAMETER_SERVER:
        return 2 * size * (p - 1) / bw
    return size * (p - 1) / bw


def comm_time(collective, payload, net):
    """Seconds to run ``collective`` on ``payload`` across ``net``.

    ``payload`` may be a :class:`Payload` or a plain byte count.
    Returns 0 for a single worker.
    """
    if not isinstance(payload, Payload):
        payload = Payload(payload)
    if net.workers == 1:
        return 0.0
    return latency_term(collective, net) + bandwidth_term(collective, payload.size, net)


def ring_reduce_time(size, net):
    return comm_time(Collective.RING_REDUCE, size, net)


def all_gather_time(size, net):
    return comm_time(Collective.ALL_GATHER, size, net)
