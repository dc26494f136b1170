import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hashvpr.geo import (
    PITTS_MSLS,
    SFXL,
    CategoryLabel,
    DivisionConfig,
    PlaceRecord,
    assign_category,
    divide,
    group_of,
    pitts_pseudo_yaw,
    sample_batches,
)


def test_worked_example():
    r = PlaceRecord("a", 1234.9, 56.2, 125.0)
    assert assign_category(r, PITTS_MSLS) == CategoryLabel(82, 3, 2)


def test_group_counts():
    assert PITTS_MSLS.n_groups == 18
    assert SFXL.n_groups == 50


def test_negative_coordinates_floor():
    assert assign_category(PlaceRecord("b", -0.5, -15.0, 359.99), PITTS_MSLS) == (-1, -1, 5)


def test_heading_wraps():
    assert PlaceRecord("c", 0, 0, -30.0).heading == 330.0
    assert assign_category(PlaceRecord("c", 0, 0, 360.0), PITTS_MSLS).h == 0


def test_bad_angle_bin():
    with pytest.raises(ValueError):
        DivisionConfig(alpha_deg=70.0)


def test_missing_heading():
    with pytest.raises(ValueError):
        assign_category(PlaceRecord("d", 1.0, 2.0), PITTS_MSLS)


def test_pitts_yaw():
    assert [pitts_pseudo_yaw(i) for i in (0, 1, 11)] == [0.0, 30.0, 330.0]
    with pytest.raises(ValueError):
        pitts_pseudo_yaw(12)


coord = st.floats(-1e5, 1e5, allow_nan=False)


@given(coord, coord, st.floats(0, 359.9), coord, coord, st.floats(0, 359.9))
def test_adjacent_cells_in_different_groups(e1, n1, h1, e2, n2, h2):
    a = assign_category(PlaceRecord("a", e1, n1, h1), PITTS_MSLS)
    b = assign_category(PlaceRecord("b", e2, n2, h2), PITTS_MSLS)
    close = (abs(a.e - b.e) <= 1 and abs(a.n - b.n) <= 1
             and min(abs(a.h - b.h), 6 - abs(a.h - b.h)) <= 1)
    if close and a != b:
        assert group_of(a, PITTS_MSLS) != group_of(b, PITTS_MSLS)


@given(coord, coord, st.floats(0, 359.9), st.floats(0, 14.9), st.floats(0, 14.9))
def test_same_category_within_cell(e, n, h, de, dn):
    a = PlaceRecord("a", e, n, h)
    lab = assign_category(a, PITTS_MSLS)
    e2 = lab.e * 15.0 + de
    n2 = lab.n * 15.0 + dn
    b = assign_category(PlaceRecord("b", e2, n2, h), PITTS_MSLS)
    if b == lab:
        assert math.hypot(e - e2, n - n2) <= 15.0 * math.sqrt(2) + 1e-9


def grid_records(n_cells=12, per_cell=5, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n_cells):
        for j in range(n_cells):
            for k in range(per_cell):
                out.append(PlaceRecord(f"{i}-{j}-{k}", 15 * i + rng.uniform(0, 15),
                                       15 * j + rng.uniform(0, 15), rng.uniform(0, 60)))
    return out


def test_batches_deterministic_and_sized():
    rows = divide(grid_records(), PITTS_MSLS)
    a = list(sample_batches(rows, PITTS_MSLS, places_per_batch=10, images_per_place=4,
                            seed=3, steps=6))
    b = list(sample_batches(rows, PITTS_MSLS, places_per_batch=10, images_per_place=4,
                            seed=3, steps=6))
    assert a == b
    for batch in a:
        assert batch.size == 40
        groups = {group_of(assign_category(r.record, PITTS_MSLS), PITTS_MSLS)
                  for r in rows if r.place_key in batch.places}
        assert len(groups) == 1
    assert len({x.group for x in a}) > 1


def test_full_size_batch():
    rows = divide(grid_records(n_cells=33, per_cell=4), PITTS_MSLS)
    batch = next(sample_batches(rows, PITTS_MSLS, seed=0, steps=1))
    assert batch.size == 480 and len(set(batch.places)) == 120


def test_small_groups_skipped_with_warning():
    rows = divide(grid_records(n_cells=3), PITTS_MSLS)
    warnings = []
    assert list(sample_batches(rows, PITTS_MSLS, 120, 4, steps=2, warnings=warnings)) == []
    assert warnings and all(w["warning"] == "group_too_small" for w in warnings)


def test_prelabeled_records_keep_place():
    rows = divide([PlaceRecord("x", place="p7", source="gsv")], PITTS_MSLS)
    d = rows[0].to_dict(PITTS_MSLS)
    assert d["group"] == -1 and d["place_key"] == "gsv:p7"
