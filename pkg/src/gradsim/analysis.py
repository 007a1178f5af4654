"""What-if analyses built on the iteration-time engine.

Each sweep re-evaluates the engine at every parameter value; a row can be
reproduced exactly by calling the matching ``*_point`` helper and
:func:`gradsim.engine.estimate` on its value. Continuous sweeps
(bandwidth, compute speedup) also report where two schemes' totals cross.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field, replace
from typing import Optional

from gradsim.costmodel import check_number
from gradsim.engine import estimate, linear_scaling_gap
from gradsim.errors import ConfigurationError, ValidationError

log = logging.getLogger(__name__)

CROSSOVER_REL_TOL = 1e-6


@dataclass(frozen=True)
class SweepRow:
    value: float
    estimates: dict
    gaps: dict
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Crossover:
    schemes: tuple
    value: float


@dataclass(frozen=True)
class SweepResult:
    parameter_name: str
    scheme_labels: tuple
    rows: tuple
    crossovers: tuple = ()

    def totals(self, label):
        return [row.estimates[label].total for row in self.rows]


@dataclass(frozen=True)
class CompressionRequirement:
    """Smallest compression that lets communication hide under compute.

    ``required_ratio`` is None when no compression suffices because the
    latency term alone already exceeds the backward pass.
    """

    required_payload: float
    required_ratio: Optional[float]
    feasible: bool
    degenerate: bool = False

    @property
    def latency_bound(self):
        return not self.feasible


def _check_schemes(schemes):
    schemes = list(schemes)
    if not schemes:
        raise ConfigurationError("at least one scheme is required")
    names = [s.name for s in schemes]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ConfigurationError(f"duplicate scheme names: {', '.join(dupes)}")
    return schemes


def _bisect(f, lo, hi, f_lo, rel_tol):
    while hi - lo > rel_tol * max(abs(lo), abs(hi)):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        f_mid = f(mid)
        if f_mid == 0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_crossovers(values, rows, labels, total_at, rel_tol=CROSSOVER_REL_TOL):
    """Locate every sign change of pairwise total differences.

    A scan over the sampled rows brackets each change, then bisection on
    ``total_at(label, x)`` narrows it to ``rel_tol``. Pairs whose difference
    is identically zero, or only touches zero, produce nothing.
    """
    found = []
    for a, b in itertools.combinations(labels, 2):
        diffs = [row.estimates[a].total - row.estimates[b].total for row in rows]
        prev = None
        for i, d in enumerate(diffs):
            if d == 0:
                continue
            if prev is not None and (diffs[prev] > 0) != (d > 0):
                exact = [j for j in range(prev + 1, i) if diffs[j] == 0]
                if exact:
                    x = values[exact[0]]
                else:
                    x = _bisect(
                        lambda v: total_at(a, v) - total_at(b, v),
                        values[prev],
                        values[i],
                        diffs[prev],
                        rel_tol,
                    )
                found.append(Crossover(schemes=(a, b), value=x))
            prev = i
    found.sort(key=lambda c: (c.value, c.schemes))
    return tuple(found)


def _run_sweep(parameter_name, values, schemes, point, continuous):
    labels = tuple(s.name for s in schemes)
    rows = []
    for value in values:
        estimates, gaps = {}, {}
        for scheme in schemes:
            model, net, sch = point(value, scheme)
            est = estimate(model, net, sch)
            estimates[scheme.name] = est
            gaps[scheme.name] = linear_scaling_gap(est, model)
        rows.append(SweepRow(value=value, estimates=estimates, gaps=gaps))
    crossovers = ()
    if continuous and len(labels) > 1:
        by_name = {s.name: s for s in schemes}

        def total_at(label, x):
            return estimate(*point(x, by_name[label])).total

        crossovers = find_crossovers(values, rows, labels, total_at)
    log.debug("%s sweep: %d rows, %d crossovers", parameter_name, len(rows), len(crossovers))
    return SweepResult(parameter_name, labels, tuple(rows), crossovers)


def linear_range(lo, hi, steps):
    """``steps`` evenly spaced values from lo to hi, both ends exact."""
    if isinstance(steps, bool) or not isinstance(steps, int) or steps < 2:
        raise ValidationError("steps", f"must be an integer >= 2, got {steps!r}")
    if not lo < hi:
        raise ValidationError("range", f"expected lo < hi, got {lo}:{hi}")
    values = [lo + (hi - lo) * i / (steps - 1) for i in range(steps)]
    values[-1] = hi
    return values


def bandwidth_point(model, net, scheme, bandwidth):
    return model, replace(net, bandwidth=bandwidth), scheme


def sweep_bandwidth(model, net_template, schemes, bw_range, steps):
    """Evaluate every scheme at ``steps`` bandwidths spanning ``bw_range``."""
    schemes = _check_schemes(schemes)
    lo, hi = bw_range
    for name, v in (("bandwidth_lo", lo), ("bandwidth_hi", hi)):
        check_number(name, v)
        if v <= 0:
            raise ValidationError(name, f"must be > 0, got {v}")
    values = linear_range(lo, hi, steps)
    return _run_sweep(
        "bandwidth",
        values,
        schemes,
        lambda bw, s: bandwidth_point(model, net_template, s, bw),
        continuous=True,
    )


def compute_speedup_point(model, scheme, factor, freeze_encode=False):
    """Model and scheme as they would run on hardware ``factor`` times faster.

    Encode/decode is compute bound and scales with the backward pass unless
    ``freeze_encode`` is set.
    """
    check_number("speedup", factor)
    if factor <= 0:
        raise ValidationError("speedup", f"must be > 0, got {factor}")
    model = replace(model, backward_time=model.backward_time / factor)
    if not freeze_encode and scheme.compressed:
        scheme = replace(scheme, encode_decode_time=scheme.encode_decode_time / factor)
    return model, scheme


def sweep_compute_speedup(model, net, schemes, speedup_range, freeze_encode=False):
    schemes = _check_schemes(schemes)
    factors = sorted(speedup_range)
    if not factors:
        raise ValidationError("speedup", "no speedup factors given")
    for s in factors:
        check_number("speedup", s)
        if s <= 0:
            raise ValidationError("speedup", f"must be > 0, got {s}")

    def point(s, scheme):
        m, sch = compute_speedup_point(model, scheme, s, freeze_encode)
        return m, net, sch

    return _run_sweep("compute_speedup", factors, schemes, point, continuous=True)


def workers_point(model, net, scheme, workers):
    return model, replace(net, workers=workers), scheme


def sweep_workers(model, net_template, schemes, p_values):
    """Evaluate every scheme at each worker count.

    Worker counts are discrete, so no crossovers are reported.
    """
    schemes = _check_schemes(schemes)
    p_values = sorted(p_values)
    if not p_values:
        raise ValidationError("workers", "no worker counts given")
    for p in p_values:
        if isinstance(p, bool) or not isinstance(p, int) or p < 1:
            raise ValidationError("workers", f"must be integers >= 1, got {p!r}")
    return _run_sweep(
        "workers",
        p_values,
        schemes,
        lambda p, s: workers_point(model, net_template, s, p),
        continuous=False,
    )


def tradeoff_scheme(scheme, k, l):
    """Hypothetical scheme encoding ``k`` times faster at ``l*k`` times the bytes.

    k = 1 is the unmodified scheme for every l.
    """
    if not scheme.compressed:
        raise ConfigurationError("the encode tradeoff only applies to compressed schemes")
    for name, v in (("k", k), ("l", l)):
        check_number(name, v)
        if v < 1:
            raise ValidationError(name, f"must be >= 1, got {v}")
    if k == 1:
        return scheme
    return replace(
        scheme,
        encode_decode_time=scheme.encode_decode_time / k,
        payload_scale=scheme.payload_scale * l * k,
    )


def sweep_encode_tradeoff(model, net, base_scheme, k_range, l_values, baseline=None):
    """Totals of ``base_scheme`` under each (k, l) tradeoff, sorted by k then l.

    When ``baseline`` (usually syncSGD) is given it is evaluated alongside
    for reference; it does not depend on k or l.
    """
    if not base_scheme.compressed:
        raise ConfigurationError("the encode tradeoff only applies to compressed schemes")
    pairs = sorted(itertools.product(k_range, l_values))
    if not pairs:
        raise ValidationError("k", "empty k or l range")
    schemes = [base_scheme] + ([baseline] if baseline is not None else [])
    schemes = _check_schemes(schemes)

    rows = []
    for k, l in pairs:
        modified = tradeoff_scheme(base_scheme, k, l)
        estimates, gaps = {}, {}
        for scheme in schemes:
            est = estimate(model, net, modified if scheme is base_scheme else scheme)
            estimates[scheme.name] = est
            gaps[scheme.name] = linear_scaling_gap(est, model)
        rows.append(SweepRow(value=k, estimates=estimates, gaps=gaps, params={"l": l}))
    labels = tuple(s.name for s in schemes)
    return SweepResult("k", labels, tuple(rows), ())


def required_compression(model, net):
    """Compressed size at which one ring all-reduce takes exactly T_comp.

    Solves T_comp = 2*alpha*(p-1) + 2*g_hat*(p-1)/(p*BW) for g_hat, ignoring
    encode/decode time and the unoverlapped tail bucket: a best case.
    """
    p = net.workers
    g = model.gradient_size
    if p == 1:
        return CompressionRequirement(required_payload=g, required_ratio=1.0,
                                      feasible=True, degenerate=True)
    budget = model.backward_time - 2 * net.latency * (p - 1)
    g_hat = budget * p * net.bandwidth / (2 * (p - 1))
    if g_hat <= 0:
        return CompressionRequirement(required_payload=0.0, required_ratio=None, feasible=False)
    return CompressionRequirement(required_payload=g_hat, required_ratio=g / g_hat, feasible=True)

