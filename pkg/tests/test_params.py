import pytest

from quadpida.params import QuadParams


def test_stock_values_load_exactly():
    p = QuadParams()
    assert p.m == 0.8
    assert p.l == 0.2
    assert p.g == 9.81
    assert p.c == 3.00e-5
    assert p.ixx == 2.28e-2
    assert p.iyy == 3.10e-2
    assert p.izz == 4.40e-2
    assert p.im == 8.30e-5
    assert p.b == 3.0e-5


def test_derived_quantities():
    p = QuadParams()
    assert p.hover_thrust == pytest.approx(7.848)
    assert p.fmax == pytest.approx(15.696)


@pytest.mark.parametrize("field", ["m", "l", "g", "c", "ixx", "iyy", "izz", "im", "b"])
def test_rejects_non_positive(field):
    with pytest.raises(ValueError, match=field):
        QuadParams(**{field: 0.0})
    with pytest.raises(ValueError, match=field):
        QuadParams(**{field: -1.0})


def test_rejects_non_finite():
    with pytest.raises(ValueError):
        QuadParams(m=float("inf"))


def test_as_array_layout():
    arr = QuadParams().as_array()
    assert arr.shape == (10,)
    assert arr[0] == 0.8 and arr[9] == pytest.approx(15.696)
