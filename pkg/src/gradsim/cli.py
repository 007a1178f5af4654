"""gradsim command-line interface.

    gradsim estimate --preset resnet101-ec2 --bw-gbps 25
    gradsim sweep bandwidth --preset resnet101-ec2 --bw-gbps 1:30:30 --format csv
    gradsim sweep encode-tradeoff --preset resnet50-ec2 --k 1:4 --l 1,2,3
    gradsim required-compression --profile my.json
    gradsim presets --dump bert-base-ec2

Tables round to 0.1 ms. CSV and JSON carry full-precision floats in
canonical units (seconds, bytes, bytes/s). Exit status is 0 on success, 1
on a validation or computation error and 2 on a usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

from gradsim import analysis, profiles
from gradsim.costmodel import BYTES_PER_MB, BYTES_PER_S_PER_GBPS
from gradsim.engine import estimate, linear_scaling_gap, speedup
from gradsim.errors import GradsimError, ValidationError
from gradsim.schemes import SyncSGD

FORMATS = ("table", "csv", "json")
DEFAULT_WORKERS = "4,8,16,32,64,96"


# --- argument helpers -------------------------------------------------------


def parse_span(text, flag):
    """Parse ``A:B:N`` into (A, B, N)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValidationError(flag, f"expected A:B:N, got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
        steps = int(parts[2])
    except ValueError:
        raise ValidationError(flag, f"expected A:B:N with numeric A, B and integer N, got {text!r}") from None
    if steps < 1:
        raise ValidationError(flag, f"step count must be >= 1, got {steps}")
    if lo > hi:
        raise ValidationError(flag, f"inverted range {lo}:{hi}")
    return lo, hi, steps


def span_values(text, flag):
    lo, hi, steps = parse_span(text, flag)
    if steps < 2:
        raise ValidationError(flag, f"a sweep needs at least 2 steps, got {steps}")
    if lo == hi:
        raise ValidationError(flag, f"empty range {lo}:{hi}")
    return analysis.linear_range(lo, hi, steps)


def parse_int_range(text, flag):
    parts = text.split(":")
    try:
        if len(parts) == 1:
            lo = hi = int(parts[0])
        elif len(parts) == 2:
            lo, hi = int(parts[0]), int(parts[1])
        else:
            raise ValueError
    except ValueError:
        raise ValidationError(flag, f"expected an integer range A:B, got {text!r}") from None
    if lo > hi:
        raise ValidationError(flag, f"inverted range {lo}:{hi}")
    return list(range(lo, hi + 1))


def parse_list(text, flag, cast):
    try:
        values = [cast(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise ValidationError(flag, f"expected a comma-separated list, got {text!r}") from None
    if not values:
        raise ValidationError(flag, "empty list")
    return values


def _load(args):
    if args.profile and args.preset:
        raise ValidationError("--profile", "give either --profile or --preset, not both")
    if args.profile:
        try:
            bundle = profiles.load_bundle_file(args.profile)
        except OSError as exc:
            raise ValidationError("--profile", f"cannot read {args.profile}: {exc.strerror}") from None
        if args.batch_size is not None:
            raise ValidationError("--batch-size", "only applies to presets")
        return bundle
    if not args.preset:
        names = ", ".join(profiles.PRESET_NAMES)
        raise ValidationError("--preset", f"a profile is required; use --profile PATH or --preset ({names})")
    return profiles.get_preset(args.preset, args.batch_size)


def _selected(bundle, args):
    if not args.schemes:
        return list(bundle.schemes)
    return list(bundle.select(parse_list(args.schemes, "--schemes", str.strip)))


def _baseline(bundle):
    for s in bundle.schemes:
        if not s.compressed:
            return s
    return SyncSGD("syncsgd")


def _override_network(bundle, args):
    changes = {}
    if getattr(args, "bw_gbps", None) is not None:
        try:
            changes["bandwidth"] = float(args.bw_gbps) * BYTES_PER_S_PER_GBPS
        except ValueError:
            raise ValidationError("--bw-gbps", f"expected a number, got {args.bw_gbps!r}") from None
    if getattr(args, "workers", None) is not None:
        try:
            changes["workers"] = int(args.workers)
        except ValueError:
            raise ValidationError("--workers", f"expected an integer, got {args.workers!r}") from None
    if not changes:
        return bundle
    try:
        return profiles.with_network(bundle, **changes)
    except ValidationError as exc:
        flag = {"bandwidth": "--bw-gbps", "workers": "--workers"}.get(exc.field, exc.field)
        raise ValidationError(flag, exc.detail) from None


# --- formatting -------------------------------------------------------------


def _ms(seconds):
    return f"{seconds * 1000:.1f}"


def _table(header, rows):
    widths = [max(len(str(c)) for c in col) for col in zip(header, *rows)]
    lines = []
    for i, row in enumerate([header] + rows):
        cells = [str(c).ljust(w) if j == 0 else str(c).rjust(w) for j, (c, w) in enumerate(zip(row, widths))]
        lines.append("  ".join(cells).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _csv(header, rows, comments=()):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    for line in comments:
        buf.write(f"# {line}\n")
    return buf.getvalue()


def _num(x):
    """Full-precision CSV cell; repr round-trips floats exactly."""
    if x is None:
        return ""
    if isinstance(x, int):
        return str(x)
    return repr(float(x))


def _json(doc):
    return json.dumps(doc, indent=2) + "\n"


def _network_doc(net):
    return {
        "workers": net.workers,
        "bandwidth_bytes_per_s": net.bandwidth,
        "latency_s": net.latency,
        "allgather_latency_s": net.allgather_latency,
    }


# --- commands ---------------------------------------------------------------

ESTIMATE_FIELDS = ("total", "compute", "encode_decode", "comm_overlapped", "comm_exposed")


def cmd_estimate(args):
    bundle = _override_network(_load(args), args)
    model, net = bundle.model, bundle.network
    schemes = _selected(bundle, args)
    base = estimate(model, net, _baseline(bundle))
    results = []
    for scheme in schemes:
        est = estimate(model, net, scheme)
        results.append((scheme.name, est, linear_scaling_gap(est, model), speedup(base, est)))

    if args.format == "json":
        return _json({
            "profile": bundle.name,
            "network": _network_doc(net),
            "baseline": base.scheme_label,
            "estimates": [
                {"scheme": name, **{f"{f}_s": getattr(est, f) for f in ESTIMATE_FIELDS},
                 "gap_s": gap, "speedup": sp}
                for name, est, gap, sp in results
            ],
        })
    if args.format == "csv":
        header = ["scheme"] + [f"{f}_s" for f in ESTIMATE_FIELDS] + ["gap_s", "speedup"]
        rows = [[name] + [_num(getattr(est, f)) for f in ESTIMATE_FIELDS] + [_num(gap), _num(sp)]
                for name, est, gap, sp in results]
        return _csv(header, rows)
    header = ["scheme", "total_ms", "compute_ms", "encode_ms", "overlap_ms", "exposed_ms", "gap_ms",
              f"speedup_vs_{base.scheme_label}"]
    rows = [[name] + [_ms(getattr(est, f)) for f in ESTIMATE_FIELDS] + [_ms(gap), f"{sp:.3f}"]
            for name, est, gap, sp in results]
    title = (f"{bundle.name or 'profile'}: p={net.workers}, "
             f"{net.bandwidth / BYTES_PER_S_PER_GBPS:g} Gbps\n")
    return title + _table(header, rows)


SWEEP_UNITS = {
    "bandwidth": ("bandwidth_bytes_per_s", "bandwidth_gbps", lambda v: f"{v / BYTES_PER_S_PER_GBPS:.2f}"),
    "workers": ("workers", "workers", str),
    "compute_speedup": ("compute_speedup", "speedup", lambda v: f"{v:g}"),
    "k": ("k", "k", str),
}


def _run_sweep_kind(args, bundle):
    model, net = bundle.model, bundle.network
    kind = args.kind
    if kind == "encode-tradeoff":
        base = bundle.scheme(args.base_scheme)
        k_values = parse_int_range(args.k, "--k")
        l_values = parse_list(args.l, "--l", float)
        l_values = [int(v) if v.is_integer() else v for v in l_values]
        baseline = _baseline(bundle)
        return analysis.sweep_encode_tradeoff(model, net, base, k_values, l_values, baseline)
    schemes = _selected(bundle, args)
    if kind == "bandwidth":
        lo, hi, steps = parse_span(args.bw_gbps or "1:30:30", "--bw-gbps")
        span_values(args.bw_gbps or "1:30:30", "--bw-gbps")
        if lo <= 0:
            raise ValidationError("--bw-gbps", f"bandwidth must be > 0, got {lo}")
        return analysis.sweep_bandwidth(
            model, net, schemes, (lo * BYTES_PER_S_PER_GBPS, hi * BYTES_PER_S_PER_GBPS), steps)
    if kind == "workers":
        return analysis.sweep_workers(model, net, schemes, parse_list(args.workers or DEFAULT_WORKERS, "--workers", int))
    factors = span_values(args.speedup or "1:4:7", "--speedup")
    return analysis.sweep_compute_speedup(model, net, schemes, factors, args.freeze_encode)


def cmd_sweep(args):
    bundle = _load(args)
    result = _run_sweep_kind(args, bundle)
    col, human, fmt = SWEEP_UNITS[result.parameter_name]
    tradeoff = result.parameter_name == "k"
    labels = result.scheme_labels

    if args.format == "json":
        return _json({
            "profile": bundle.name,
            "network": _network_doc(bundle.network),
            "parameter": col,
            "schemes": list(labels),
            "rows": [
                {col: row.value, **row.params,
                 "totals_s": {lb: row.estimates[lb].total for lb in labels},
                 "gaps_s": dict(row.gaps)}
                for row in result.rows
            ],
            "crossovers": [{"schemes": list(c.schemes), col: c.value} for c in result.crossovers],
        })
    extra = ["l"] if tradeoff else []
    if args.format == "csv":
        rows = [[_num(row.value)] + [_num(row.params[e]) for e in extra]
                + [_num(row.estimates[lb].total) for lb in labels] for row in result.rows]
        comments = [f"crossover,{c.schemes[0]},{c.schemes[1]},{_num(c.value)}" for c in result.crossovers]
        return _csv([col] + extra + list(labels), rows, comments)
    rows = [[fmt(row.value)] + [str(row.params[e]) for e in extra]
            + [_ms(row.estimates[lb].total) for lb in labels] for row in result.rows]
    text = _table([human] + extra + [f"{lb}_ms" for lb in labels], rows)
    if result.crossovers:
        text += "\ncrossovers:\n"
        for c in result.crossovers:
            text += f"  {c.schemes[0]} = {c.schemes[1]} at {human} {fmt(c.value)}\n"
    elif result.parameter_name in ("bandwidth", "compute_speedup") and len(labels) > 1:
        text += "\ncrossovers: none in range\n"
    return text


def cmd_required_compression(args):
    bundle = _override_network(_load(args), args)
    req = analysis.required_compression(bundle.model, bundle.network)
    if args.format == "json":
        return _json({
            "profile": bundle.name,
            "network": _network_doc(bundle.network),
            "gradient_size_bytes": bundle.model.gradient_size,
            "required_payload_bytes": req.required_payload,
            "required_ratio": req.required_ratio,
            "feasible": req.feasible,
            "degenerate": req.degenerate,
        })
    if args.format == "csv":
        return _csv(
            ["gradient_size_bytes", "required_payload_bytes", "required_ratio", "feasible", "degenerate"],
            [[_num(bundle.model.gradient_size), _num(req.required_payload), _num(req.required_ratio),
              str(req.feasible).lower(), str(req.degenerate).lower()]],
        )
    if not req.feasible:
        return ("infeasible: latency-bound "
                "(per-hop latency alone exceeds the backward pass; no compression ratio suffices)\n")
    lines = [
        f"gradient size:     {bundle.model.gradient_size / BYTES_PER_MB:.1f} MB",
        f"required payload:  {req.required_payload / BYTES_PER_MB:.3f} MB",
        f"required ratio:    {req.required_ratio:.2f}x",
    ]
    if req.degenerate:
        lines.append("single worker: nothing to communicate")
    elif req.required_ratio < 1:
        lines.append("ratio below 1: the uncompressed gradient already hides under compute")
    return "\n".join(lines) + "\n"


def cmd_presets(args):
    if args.dump:
        return profiles.dump_bundle(profiles.get_preset(args.dump, args.batch_size))
    rows = []
    for name in profiles.PRESET_NAMES:
        b = profiles.get_preset(name)
        batches = ",".join(str(x) for x in profiles.preset_batch_sizes(name))
        rows.append([name, b.model.name, f"{b.model.gradient_size / BYTES_PER_MB:g}",
                     _ms(b.model.backward_time), batches, str(len(b.schemes))])
    return _table(["preset", "model", "gradient_mb", "backward_ms", "batch_sizes", "schemes"], rows)


# --- parser -----------------------------------------------------------------


def _add_common(p, schemes=True):
    p.add_argument("--profile", help="profile document (JSON)")
    p.add_argument("--preset", help=f"built-in preset: {', '.join(profiles.PRESET_NAMES)}")
    p.add_argument("--batch-size", type=int, help="preset batch size")
    if schemes:
        p.add_argument("--schemes", help="comma-separated scheme names (default: all)")
    p.add_argument("--format", choices=FORMATS, default="table")
    p.add_argument("--out", help="write output to this file instead of stdout")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="gradsim",
        description="Predict data-parallel iteration time with and without gradient compression.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="per-scheme iteration time breakdown")
    _add_common(p)
    p.add_argument("--bw-gbps", help="override network bandwidth (Gbps)")
    p.add_argument("--workers", help="override worker count")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("sweep", help="what-if sweeps")
    p.add_argument("kind", choices=("bandwidth", "workers", "compute-speedup", "encode-tradeoff"))
    _add_common(p)
    p.add_argument("--bw-gbps", help="bandwidth span A:B:N in Gbps (default 1:30:30)")
    p.add_argument("--workers", help=f"worker counts (default {DEFAULT_WORKERS})")
    p.add_argument("--speedup", help="compute speedup span A:B:N (default 1:4:7)")
    p.add_argument("--freeze-encode", action="store_true",
                   help="keep encode/decode time fixed when compute speeds up")
    p.add_argument("--k", default="1:4", help="encode speedup range A:B (default 1:4)")
    p.add_argument("--l", default="1,2,3", help="payload growth factors (default 1,2,3)")
    p.add_argument("--base-scheme", default="powersgd-r4", help="scheme for encode-tradeoff")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("required-compression", help="compression needed to hide communication")
    _add_common(p, schemes=False)
    p.add_argument("--bw-gbps", help="override network bandwidth (Gbps)")
    p.add_argument("--workers", help="override worker count")
    p.set_defaults(func=cmd_required_compression)

    p = sub.add_parser("presets", help="list built-in presets")
    p.add_argument("--dump", metavar="NAME", help="print a preset as a profile document")
    p.add_argument("--batch-size", type=int, help="batch size for --dump")
    p.add_argument("--out", help="write output to this file instead of stdout")
    p.set_defaults(func=cmd_presets)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        text = args.func(args)
    except (GradsimError, ZeroDivisionError) as exc:
        print(f"gradsim: error: {exc}", file=sys.stderr)
        return 1
    if args.out:
        try:
            with open(args.out, "w", newline="") as fh:
                fh.write(text)
        except OSError as exc:
            print(f"gradsim: error: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
            return 1
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
