import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from nervetrace.errors import MaskError
from nervetrace.rle import decode_mask, encode_mask


def test_known_encoding():
    mask = np.array([[0, 1, 1, 0],
                     [1, 1, 0, 0]], dtype=bool)
    payload = encode_mask(mask)
    assert (payload["width"], payload["height"]) == (4, 2)
    # row-major: one 0, two 1s, one 0, two 1s, two 0s
    assert payload["runs"] == [1, 2, 1, 2, 2]


def test_leading_zero_when_mask_starts_set():
    mask = np.ones((2, 2), dtype=bool)
    assert encode_mask(mask)["runs"] == [0, 4]


def test_empty_mask():
    mask = np.zeros((3, 5), dtype=bool)
    payload = encode_mask(mask)
    assert payload["runs"] == [15]
    assert np.array_equal(decode_mask(payload), mask)


@settings(max_examples=200)
@given(hnp.arrays(dtype=bool, shape=hnp.array_shapes(min_dims=2, max_dims=2,
                                                     min_side=1, max_side=48)))
def test_round_trip(mask):
    assert np.array_equal(decode_mask(encode_mask(mask)), mask)


def test_decode_rejects_bad_total():
    with pytest.raises(MaskError):
        decode_mask({"width": 2, "height": 2, "runs": [5]})


def test_decode_rejects_negative_run():
    with pytest.raises(MaskError):
        decode_mask({"width": 2, "height": 2, "runs": [-1, 5]})
