import warnings

import pytest
from hypothesis import given, strategies as st

from gradsim.costmodel import Collective
from gradsim.errors import ConfigurationError, UndefinedRatioError, ValidationError
from gradsim.schemes import (
    SCHEME_TYPES,
    ModelProfile,
    MSTopK,
    PowerSGD,
    SignSGD,
    SyncSGD,
    bucketize,
    derive_powersgd_payloads,
    effective_compression_ratio,
    values_only_compression_ratio,
    wire_bytes,
)

R50 = ModelProfile(gradient_size=97e6, backward_time=0.122)


def test_defaults():
    assert R50.gamma == 1.07
    assert R50.bucket_size == 25e6


@pytest.mark.parametrize(
    "g,b,full,tail",
    [(97e6, 25e6, 3, 22e6), (100e6, 25e6, 3, 25e6), (10e6, 25e6, 0, 10e6), (25e6, 25e6, 0, 25e6)],
)
def test_bucketize_examples(g, b, full, tail):
    plan = bucketize(ModelProfile(g, 0.1, bucket_size=b))
    assert (plan.full_buckets, plan.tail_size) == (full, pytest.approx(tail))
    assert plan.count == full + 1


@given(
    st.floats(min_value=1, max_value=1e10),
    st.floats(min_value=1, max_value=1e9),
)
def test_bucketize_reconstructs_gradient(g, b):
    plan = bucketize(ModelProfile(g, 0.1, bucket_size=b))
    assert plan.full_buckets >= 0
    assert 0 < plan.tail_size <= b
    assert plan.full_buckets * plan.full_size + plan.tail_size == pytest.approx(g, rel=1e-9)


def test_syncsgd_payloads_are_ring_buckets():
    pl = SyncSGD("syncsgd").payloads(R50)
    assert [c for _, c in pl] == [Collective.RING_REDUCE] * 4
    assert sum(p.size for p, _ in pl) == pytest.approx(97e6)
    assert not SyncSGD("s").compressed


def test_syncsgd_rejects_encode_time():
    with pytest.raises(ValidationError):
        SyncSGD("s", encode_decode_time=0.01)


def test_powersgd_direct_payloads():
    s = PowerSGD("p", 0.045, rank=4, payload_p=1e6, payload_q=2e6)
    assert [(p.size, c) for p, c in s.payloads(R50)] == [
        (1e6, Collective.RING_REDUCE),
        (2e6, Collective.RING_REDUCE),
    ]
    assert effective_compression_ratio(s, R50) == pytest.approx(97 / 3)


def test_powersgd_derives_from_shapes():
    # conv 64x3x3x3 -> 64 x 27 matrix; linear 1000x2048; bias 1000
    shapes = [(64, 3, 3, 3), (1000, 2048), (1000,)]
    p, q = derive_powersgd_payloads(shapes, rank=4)
    assert p == 4 * (64 * 4 + 1000 * 4 + 1000)
    assert q == 4 * (27 * 4 + 2048 * 4)
    s = PowerSGD("p", 0.0, rank=4, layer_shapes=shapes)
    assert s.resolved_payloads() == (p, q)


def test_powersgd_rank_capped_by_matrix_dims():
    with pytest.warns(UserWarning):
        p, q = derive_powersgd_payloads([(3, 5)], rank=16)
    assert (p, q) == (4 * 3 * 3, 4 * 5 * 3)


def test_powersgd_direct_values_win_over_shapes():
    s = PowerSGD("p", 0.0, payload_p=10.0, payload_q=20.0, layer_shapes=[(100, 100)])
    assert s.resolved_payloads() == (10.0, 20.0)


def test_powersgd_without_sizes_is_configuration_error():
    with pytest.raises(ConfigurationError):
        PowerSGD("p", 0.0).payloads(R50)


def test_powersgd_rejects_half_specified_payload():
    with pytest.raises(ValidationError):
        PowerSGD("p", 0.0, payload_p=1.0)


def test_powersgd_warns_when_not_compressing():
    with pytest.warns(UserWarning, match="ratio"):
        derive_powersgd_payloads([(4, 4)], rank=4)


def test_powersgd_no_warning_when_compressing():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        derive_powersgd_payloads([(512, 512)], rank=4)


@pytest.mark.parametrize("shapes", [[], [()], [(0, 4)], [(2.5, 4)]])
def test_powersgd_bad_shapes(shapes):
    with pytest.raises(ConfigurationError):
        derive_powersgd_payloads(shapes, rank=4)


def test_mstopk_indices_double_the_wire():
    s = MSTopK("m", 0.1, fraction=0.01)
    assert [c for _, c in s.payloads(R50)] == [Collective.ALL_GATHER] * 2
    assert wire_bytes(s, R50) == pytest.approx(2 * 0.97e6)
    assert effective_compression_ratio(s, R50) == pytest.approx(50)
    assert values_only_compression_ratio(s, R50) == pytest.approx(100)


def test_mstopk_zero_fraction_ratio_undefined():
    s = MSTopK("m", 0.0, fraction=0.0)
    with pytest.raises(UndefinedRatioError):
        effective_compression_ratio(s, R50)
    with pytest.raises(UndefinedRatioError):
        values_only_compression_ratio(s, R50)


@pytest.mark.parametrize("fraction", [-0.1, 1.5, float("nan")])
def test_mstopk_fraction_bounds(fraction):
    with pytest.raises(ValidationError):
        MSTopK("m", 0.0, fraction=fraction)


def test_signsgd_is_one_bit_per_float():
    s = SignSGD("s", 0.016)
    (payload, collective), = s.payloads(R50)
    assert collective is Collective.ALL_GATHER
    assert payload.size == pytest.approx(97e6 / 32)
    assert effective_compression_ratio(s, R50) == pytest.approx(32)


@given(st.floats(min_value=1, max_value=1e4))
def test_payload_scale_multiplies_wire_bytes(scale):
    for s in (SignSGD("s", 0.0), MSTopK("m", 0.0, fraction=0.01),
              PowerSGD("p", 0.0, payload_p=1e5, payload_q=2e5)):
        scaled = type(s)(**{**s.__dict__, "payload_scale": scale})
        assert wire_bytes(scaled, R50) == pytest.approx(wire_bytes(s, R50) * scale, rel=1e-12)


def test_allreduce_compatibility():
    assert SyncSGD.allreduce_compatible and PowerSGD.allreduce_compatible
    assert not MSTopK.allreduce_compatible and not SignSGD.allreduce_compatible
    assert set(SCHEME_TYPES) == {"syncsgd", "powersgd", "mstopk", "signsgd"}


@pytest.mark.parametrize(
    "kwargs,field",
    [
        (dict(gradient_size=0, backward_time=0.1), "gradient_size"),
        (dict(gradient_size=1e6, backward_time=-0.1), "backward_time"),
        (dict(gradient_size=1e6, backward_time=0.1, gamma=0.9), "gamma"),
        (dict(gradient_size=1e6, backward_time=0.1, bucket_size=0), "bucket_size"),
        (dict(gradient_size=1e6, backward_time=0.1, batch_size=0), "batch_size"),
        (dict(gradient_size="1", backward_time=0.1), "gradient_size"),
    ],
)
def test_model_validation(kwargs, field):
    with pytest.raises(ValidationError) as info:
        ModelProfile(**kwargs)
    assert info.value.field == field


@pytest.mark.parametrize(
    "make,field",
    [
        (lambda: SignSGD("", 0.0), "name"),
        (lambda: SignSGD("s", -1.0), "encode_decode_time"),
        (lambda: SignSGD("s", 0.0, payload_scale=0), "payload_scale"),
        (lambda: PowerSGD("p", 0.0, rank=0), "rank"),
        (lambda: PowerSGD("p", 0.0, payload_p=-1.0, payload_q=1.0), "payload_p"),
    ],
)
def test_scheme_validation(make, field):
    with pytest.raises(ValidationError) as info:
        make()
    assert info.value.field == field
