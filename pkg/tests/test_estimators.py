import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from levelcover import LevelCoverage, SquarePacker
from levelcover.exceptions import InvalidPolygonError
from levelcover.validation import check_points, check_positive, check_vertices
from oracles import UH_BASE_SQUARES_FLAT, UH_X, UH_Y

UH = np.column_stack([UH_X, UH_Y]).astype(float)


def test_square_packer_fit_predict():
    est = SquarePacker().fit(UH)
    assert est.n_base_squares_ == UH_BASE_SQUARES_FLAT
    assert est.centers_.shape == (UH_BASE_SQUARES_FLAT, 2)
    ids = est.predict(est.centers_)
    assert (ids == est.base_squares_).all()
    assert est.predict([[-1e4, -1e4]])[0] == -1
    t = est.transform(est.centers_[:3])
    assert t.shape == (3, 4) and (t >= 0).all()


def test_params_and_clone():
    est = SquarePacker(r_l_min=100.0, classification="robust")
    assert est.get_params() == {"r_l_min": 100.0, "classification": "robust", "anchor": "per-axis"}
    c = clone(est)
    assert c.get_params() == est.get_params() and not hasattr(c, "packing_")
    lc = LevelCoverage(resolution=8.0).set_params(r_l_min=90.0)
    assert lc.r_l_min == 90.0


def test_not_fitted():
    with pytest.raises(NotFittedError):
        SquarePacker().predict([[0, 0]])
    with pytest.raises(NotFittedError):
        LevelCoverage().predict([[0, 0]])


def test_level_coverage_scores_full():
    est = LevelCoverage(resolution=8.0).fit(UH)
    assert est.n_agents_ == UH_BASE_SQUARES_FLAT
    assert est.score() == 1.0
    rng = np.random.default_rng(0)
    pts = rng.uniform([50, 100], [1250, 1000], (2000, 2))
    from levelcover.geometry import points_in_polygon

    inside = points_in_polygon(pts, est.polygon_)
    assert est.predict(pts)[inside].all()
    assert not est.predict(pts)[~inside].any()


def test_validation_helpers():
    with pytest.raises(InvalidPolygonError):
        check_vertices([[0, 0], [1, 1]])
    with pytest.raises(InvalidPolygonError):
        check_vertices([[0, 0, 0], [1, 1, 1], [2, 0, 0]])
    with pytest.raises((InvalidPolygonError, ValueError)):
        check_vertices([[0, 0], [1, np.nan], [2, 0]])
    assert check_points([[1.0, 2.0]]).shape == (1, 2)
    # a bare 1D point is rejected, as in scikit-learn
    with pytest.raises(ValueError):
        check_points([1.0, 2.0])
    assert check_positive("x", 2) == 2.0
    with pytest.raises(ValueError):
        check_positive("x", -1)
