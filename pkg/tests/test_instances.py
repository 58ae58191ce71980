import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tspd.instances import (
    Instance,
    InstanceFormatError,
    InstanceValidationError,
    distance,
    format_instance,
    generate_instances,
    load_instance,
    load_instances,
    parse_instance,
    rng_stream,
    save_instances,
    travel_time,
)


def test_corner_depot_is_origin():
    inst = generate_instances(2, 1, 0, "random-corner-depot", 100)[0]
    assert inst.depot == 0
    assert inst.coords[0] == (0.0, 0.0)


def test_generation_is_deterministic(tmp_path):
    a = generate_instances(9, 5, 7)
    b = generate_instances(9, 5, 7)
    assert a == b
    save_instances(a, tmp_path / "a")
    save_instances(b, tmp_path / "b")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_random_depot_family():
    s = generate_instances(20, 100, 1, "uniform-random-depot", 100)
    assert len(s) == 100
    pts = np.array([inst.coords for inst in s])
    assert pts.min() >= 0 and pts.max() <= 100
    assert len({inst.depot for inst in s}) > 1


def test_generator_stream_layout():
    # coordinates are the first 2n uniforms of the Philox stream keyed [seed, i],
    # the random-depot family then consumes one more for the depot index
    rng = rng_stream(3, 1)
    u = rng.random(2 * 5 + 1)
    inst = generate_instances(5, 2, 3, "uniform-random-depot", 1)[1]
    assert np.array_equal(np.array(inst.coords).ravel(), u[:10])
    assert inst.depot == math.floor(u[10] * 5)


def test_unit_scale():
    s = generate_instances(6, 3, 2, scale=1)
    assert max(max(c) for inst in s for c in inst.coords) <= 1.0


@pytest.mark.parametrize("kwargs", [
    dict(n=1, count=1, seed=0), dict(n=5, count=0, seed=0), dict(n=5, count=1, seed=0, scale=10),
    dict(n=5, count=1, seed=0, family="external"),
])
def test_generation_argument_errors(kwargs):
    with pytest.raises(ValueError):
        generate_instances(**kwargs)


def test_distance_examples():
    assert distance((0, 0), (3, 4)) == 5
    assert distance((1, 1), (1, 1)) == 0
    assert distance((0, 0), (1, 1)) == pytest.approx(1.41421356, abs=1e-8)


def test_travel_time_examples():
    inst = Instance(((0.0, 0.0), (1.0, 0.0)))
    assert travel_time("truck", 10, inst) == 10
    assert travel_time("drone", 10, inst) == 5
    assert travel_time("drone", 0, inst) == 0
    with pytest.raises(ValueError):
        travel_time("truck", -1, inst)


finite = st.floats(-1e3, 1e3, allow_nan=False)
point = st.tuples(finite, finite)


@settings(max_examples=10_000)
@given(point, point, point)
def test_triangle_inequality(a, b, c):
    assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9
    assert distance(a, b) == distance(b, a)


def test_round_trip(tmp_path):
    s = generate_instances(8, 4, 11, "uniform-random-depot", 1)
    loaded = load_instances(save_instances(s, tmp_path / "set"))
    assert loaded == s
    for a, b in zip(s, loaded):
        assert a.coords == b.coords  # bit-exact floats


def test_single_file_round_trip(tmp_path):
    inst = Instance(((0.1, 0.2), (1 / 3, 2 / 7)), depot=1, alpha=1.5, truck_speed=2.0)
    p = tmp_path / "x.txt"
    p.write_text(format_instance(inst))
    assert load_instance(p) == inst


def test_non_numeric_coordinate_reports_line():
    with pytest.raises(InstanceFormatError) as exc:
        parse_instance("2 0 2.0\n0 0\n1 abc\n")
    assert exc.value.lineno == 3


def test_depot_out_of_range():
    with pytest.raises(InstanceValidationError):
        parse_instance("2 5 2.0\n0 0\n1 0\n")


@pytest.mark.parametrize("coords,kw", [
    (((0.0, 0.0),), {}),
    (((0.0, 0.0), (math.inf, 0.0)), {}),
    (((0.0, 0.0), (1.0, 0.0)), {"alpha": 0.0}),
])
def test_instance_invariants(coords, kw):
    with pytest.raises(InstanceValidationError):
        Instance(coords, **kw)
