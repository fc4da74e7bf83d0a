import numpy as np
import pytest
from hypothesis import given, strategies as st

from nervetrace.errors import GeometryError
from nervetrace.geometry import MIN_BOX_SIDE, BoundingBox, as_bool_mask


class TestBoundingBox:
    def test_basic_fields(self):
        box = BoundingBox(x=10, y=20, w=30, h=40)
        assert box.center == (40.0, 25.0)
        assert box.area == 1200

    def test_rejects_undersized(self):
        with pytest.raises(GeometryError):
            BoundingBox(x=0, y=0, w=MIN_BOX_SIDE - 1, h=20)
        with pytest.raises(GeometryError):
            BoundingBox(x=0, y=0, w=20, h=MIN_BOX_SIDE - 1)
        BoundingBox(x=0, y=0, w=MIN_BOX_SIDE, h=MIN_BOX_SIDE)

    def test_intersects(self):
        box = BoundingBox(x=-5, y=10, w=20, h=20)
        assert box.intersects(100, 100)
        assert not BoundingBox(x=200, y=10, w=20, h=20).intersects(100, 100)
        assert not BoundingBox(x=10, y=-50, w=20, h=20).intersects(100, 100)

    def test_clipped_truncates_to_frame(self):
        box = BoundingBox(x=-5, y=90, w=20, h=20)
        assert box.clipped(100, 100) == (0, 90, 15, 100)

    def test_clamped_translates_inside(self):
        box = BoundingBox(x=-5, y=95, w=20, h=20)
        moved = box.clamped(100, 100)
        assert (moved.x, moved.y, moved.w, moved.h) == (0, 80, 20, 20)
        # already-inside boxes come back unchanged
        inside = BoundingBox(x=10, y=10, w=20, h=20)
        assert inside.clamped(100, 100) == inside

    def test_json_round_trip(self):
        box = BoundingBox(x=3, y=4, w=10, h=11)
        assert BoundingBox.from_json(box.to_json()) == box
        assert set(box.to_json()) == {"x", "y", "w", "h"}

    @given(x=st.integers(-50, 150), y=st.integers(-50, 150),
           w=st.integers(MIN_BOX_SIDE, 60), h=st.integers(MIN_BOX_SIDE, 60))
    def test_clamped_always_inside_when_it_fits(self, x, y, w, h):
        box = BoundingBox(x=x, y=y, w=w, h=h)
        moved = box.clamped(200, 200)
        assert 0 <= moved.x and moved.x + moved.w <= 200
        assert 0 <= moved.y and moved.y + moved.h <= 200
        assert (moved.w, moved.h) == (w, h)


class TestAsBoolMask:
    def test_accepts_bool_and_binary_ints(self):
        m = np.array([[True, False], [False, True]])
        assert as_bool_mask(m).dtype == bool
        assert np.array_equal(as_bool_mask(m.astype(np.uint8)), m)
        assert np.array_equal(as_bool_mask(m.astype(np.uint8) * 255), m)

    def test_rejects_other_values(self):
        with pytest.raises(GeometryError):
            as_bool_mask(np.array([[0, 7]], dtype=np.uint8))
