"""Per-iteration time estimates (backward pass plus gradient synchronization).

syncSGD overlaps all but the last bucket with the backward pass, which runs
``gamma`` times slower while it is being overlapped:

    T_obs = max(gamma*T_comp, (k-1)*T_ring(b)) + T_ring(b_tail)

Compressed schemes run the backward pass alone, then encode/decode, then
communicate every compressed payload:

    T_obs = T_comp + T_encode_decode + sum(T_comm(payload))

Forward pass and optimizer step are not modelled.
"""

from __future__ import annotations

from dataclasses import dataclass

from gradsim.costmodel import comm_time, ring_reduce_time
from gradsim.errors import ConfigurationError
from gradsim.schemes import SyncSGD, bucketize


@dataclass(frozen=True)
class IterationEstimate:
    """Predicted time of one iteration, with its critical-path breakdown.

    ``total == compute + encode_decode + comm_exposed`` up to rounding;
    ``comm_overlapped`` is communication hidden under the backward pass.
    """

    total: float
    compute: float
    encode_decode: float
    comm_overlapped: float
    comm_exposed: float
    scheme_label: str


def estimate_syncsgd(model, net, label="syncsgd"):
    if net.workers == 1:
        return IterationEstimate(
            total=model.backward_time,
            compute=model.backward_time,
            encode_decode=0.0,
            comm_overlapped=0.0,
            comm_exposed=0.0,
            scheme_label=label,
        )
    plan = bucketize(model)
    compute = model.gamma * model.backward_time
    overlappable = plan.full_buckets * ring_reduce_time(plan.full_size, net)
    tail = ring_reduce_time(plan.tail_size, net)
    return IterationEstimate(
        total=max(compute, overlappable) + tail,
        compute=compute,
        encode_decode=0.0,
        comm_overlapped=min(compute, overlappable),
        comm_exposed=max(0.0, overlappable - compute) + tail,
        scheme_label=label,
    )


def estimate_compressed(model, net, scheme):
    if not scheme.compressed:
        raise ConfigurationError(
            f"scheme {scheme.name!r} is uncompressed; use estimate_syncsgd"
        )
    comm = sum(
        comm_time(collective, payload, net) for payload, collective in scheme.payloads(model)
    )
    return IterationEstimate(
        total=model.backward_time + scheme.encode_decode_time + comm,
        compute=model.backward_time,
        encode_decode=scheme.encode_decode_time,
        comm_overlapped=0.0,
        comm_exposed=comm,
        scheme_label=scheme.name,
    )


def estimate(model, net, scheme):
    """Dispatch to the syncSGD or compressed-scheme model."""
    if isinstance(scheme, SyncSGD):
        return estimate_syncsgd(model, net, label=scheme.name)
    return estimate_compressed(model, net, scheme)


def linear_scaling_gap(estimate, model):
    """Seconds by which an iteration exceeds single-worker backward time.

    Under weak scaling, perfectly linear scaling keeps the iteration at
    ``model.backward_time``.
    """
    return estimate.total - model.backward_time


def speedup(baseline, candidate):
    if candidate.total == 0:
        raise ZeroDivisionError(f"candidate {candidate.scheme_label!r} has zero total time")
    return baseline.total / candidate.total
