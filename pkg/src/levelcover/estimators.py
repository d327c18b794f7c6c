"""scikit-learn style wrappers around packing and per-cycle coverage.

Both estimators are fitted on a polygon given as an (n, 2) vertex array.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .config import FleetConfig
from .coverage import cycle_cover_bounds, verify_full_coverage
from .engine import initial_deploy
from .fleet import LOITERING
from .geometry import Point2, points_in_polygon
from .packing import build_packing
from .validation import check_points, check_polygon, check_positive


class SquarePacker(BaseEstimator):
    """Four-level square packing of a polygon.

    After ``fit``, ``predict`` maps points to the id of the inside base square
    holding them (-1 when none) and ``transform`` gives the containing square id
    at every level (columns are levels 1..4, -1 outside the bounding square).
    """

    def __init__(self, r_l_min=80.0, classification="vertex", anchor="per-axis"):
        self.r_l_min = r_l_min
        self.classification = classification
        self.anchor = anchor

    def _config(self):
        return FleetConfig(r_l_min=check_positive("r_l_min", self.r_l_min))

    def fit(self, X, y=None):
        poly = check_polygon(X)
        self.packing_ = build_packing(poly, self._config(), self.classification, self.anchor)
        self.polygon_ = poly
        self.base_squares_ = np.array(self.packing_.base_squares, dtype=int)
        self.n_base_squares_ = len(self.base_squares_)
        self.centers_ = np.array(
            [[self.packing_[s].center.x, self.packing_[s].center.y] for s in self.base_squares_]
        ).reshape(-1, 2)
        return self

    def transform(self, X):
        check_is_fitted(self, "packing_")
        pts = check_points(X)
        out = np.full((len(pts), 4), -1, dtype=int)
        for k, (x, y) in enumerate(pts):
            for lvl in range(1, 5):
                sid = self.packing_.locate(Point2(float(x), float(y)), lvl)
                if sid is not None:
                    out[k, lvl - 1] = sid
        return out

    def predict(self, X):
        ids = self.transform(X)[:, 0]
        inside = {int(s) for s in self.base_squares_}
        return np.array([i if i in inside else -1 for i in ids], dtype=int)


class LevelCoverage(BaseEstimator):
    """Initial level-1 deployment over a polygon and its per-cycle coverage.

    ``predict`` returns, per point, whether some loitering agent sweeps it once
    per cycle; ``score`` is the covered fraction of the sample lattice.
    """

    def __init__(self, r_l_min=80.0, fov_half_angle=np.pi / 4, velocity=20.0, psi_max=0.5,
                 classification="vertex", anchor="per-axis", resolution=None):
        self.r_l_min = r_l_min
        self.fov_half_angle = fov_half_angle
        self.velocity = velocity
        self.psi_max = psi_max
        self.classification = classification
        self.anchor = anchor
        self.resolution = resolution

    def fit(self, X, y=None):
        poly = check_polygon(X)
        cfg = FleetConfig(r_l_min=check_positive("r_l_min", self.r_l_min), fov_half_angle=self.fov_half_angle,
                          velocity=self.velocity, psi_max=self.psi_max)
        self.config_ = cfg
        self.polygon_ = poly
        self.packing_ = build_packing(poly, cfg, self.classification, self.anchor)
        self.fleet_ = initial_deploy(self.packing_, cfg)
        self.n_agents_ = len(self.fleet_)
        return self

    def predict(self, X):
        check_is_fitted(self, "fleet_")
        pts = check_points(X)
        hit = np.zeros(len(pts), dtype=bool)
        for a in self.fleet_:
            if a.mode != LOITERING:
                continue
            r_in, r_out = cycle_cover_bounds(a, self.config_.fov_half_angle)
            d = np.hypot(pts[:, 0] - a.loiter_circle.center.x, pts[:, 1] - a.loiter_circle.center.y)
            hit |= (d >= r_in) & (d <= r_out)
        return hit & points_in_polygon(pts, self.polygon_)

    def coverage_report(self):
        check_is_fitted(self, "fleet_")
        res = self.resolution if self.resolution is not None else self.config_.r_l_min / 20.0
        return verify_full_coverage(self.fleet_, self.polygon_, res, self.config_)

    def score(self, X=None, y=None):
        return self.coverage_report().fraction_covered
