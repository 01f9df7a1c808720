import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import minimize_scalar

from conftest import cuboids
from cubeval.camera import Intrinsics
from cubeval.geometry import Cuboid, CubeParams, Roi2D, corners, matrix_to_rot6d
from cubeval.losses import (
    GROUPS,
    DecodeContext,
    chamfer_corners,
    disentangled_loss,
    l1_corners,
    loss_breakdown,
    pseudo_params,
    total_loss,
)
from cubeval.synthetic import random_rotation
from test_geometry import reference_box

K = Intrinsics(1000.0, 1000.0, 500.0, 500.0, 1000.0, 1000.0)
ROI = Roi2D(400.0, 400.0, 200.0, 200.0)
CTX = DecodeContext(ROI, K, {"box": (1.0, 1.0, 1.0)}, "box")
GT = CubeParams(0.5, 0.5, 5.0, 0.0, 0.0, 0.0, (1, 0, 0, 0, 1, 0))

finite = st.floats(-0.3, 0.3)


@st.composite
def cube_params(draw):
    R = random_rotation(np.random.default_rng(draw(st.integers(0, 2**32 - 1))))
    return CubeParams(
        0.5 + draw(finite),
        0.5 + draw(finite),
        draw(st.floats(2.0, 40.0)),
        draw(finite),
        draw(finite),
        draw(finite),
        tuple(matrix_to_rot6d(R)),
        draw(st.floats(-2.0, 2.0)),
    )


class TestChamfer:
    @given(cuboids())
    def test_zero_on_itself_and_order_invariant(self, c):
        pts = c.corners()
        assert chamfer_corners(pts, pts) == 0.0
        assert chamfer_corners(pts, pts[::-1]) == 0.0
        rng = np.random.default_rng(0)
        assert chamfer_corners(pts[rng.permutation(8)], pts) == 0.0

    @pytest.mark.parametrize("axis", [0, 1, 2])
    def test_half_turn_about_box_axis_is_free(self, axis):
        box = Cuboid([0.3, -1.0, 8.0], [1.2, 1.6, 4.1], random_rotation(np.random.default_rng(axis)))
        flip = np.diag([-1.0, -1.0, -1.0])
        flip[axis, axis] = 1.0
        turned = Cuboid(box.center, box.dims, box.rotation @ flip)
        assert chamfer_corners(box.corners(), turned.corners()) < 1e-12
        assert l1_corners(box.corners(), turned.corners()) > 1.0

    @given(cuboids(), cuboids())
    def test_symmetric_nonnegative(self, a, b):
        ab = chamfer_corners(a.corners(), b.corners())
        assert ab >= 0.0
        assert ab == pytest.approx(chamfer_corners(b.corners(), a.corners()), abs=1e-12)

    def test_known_value(self):
        a = np.zeros((8, 3))
        b = np.zeros((8, 3))
        b[:, 0] = 2.0
        assert chamfer_corners(a, b) == pytest.approx(4.0)
        b[0, 0] = 0.0
        # a -> b: all distances 0; b -> a: seven at 2, one at 0
        assert chamfer_corners(a, b) == pytest.approx(14 / 8)


class TestL1:
    def test_sum_convention_on_translation(self):
        a = corners(Cuboid.axis_aligned([0.0, 0.0, 5.0], [1, 1, 1]))
        b = corners(Cuboid.axis_aligned([0.1, 0.0, 5.0], [1, 1, 1]))
        assert l1_corners(b, a) == pytest.approx(0.8, abs=1e-12)


class TestDisentangled:
    @pytest.mark.parametrize("group", GROUPS)
    @given(gt=cube_params())
    def test_zero_when_group_matches(self, group, gt):
        assert disentangled_loss(group, gt, gt, CTX) == 0.0

    @pytest.mark.parametrize("group", GROUPS)
    @given(pred=cube_params(), other=cube_params(), gt=cube_params())
    def test_ignores_variables_outside_group(self, group, pred, other, gt):
        # take the group's variables from pred and everything else from `other`
        mixed = pseudo_params(group, pred, other)
        assert disentangled_loss(group, mixed, gt, CTX) == disentangled_loss(group, pred, gt, CTX)

    def test_uv_shift_fixture(self):
        # gt cube centred on the principal ray at z = 5; pred moves the projected
        # center so that the box center lands at x = 0.1
        du = K.fx * 0.1 / 5.0 / ROI.rw
        pred = CubeParams(0.5 + du, 0.5, 9.0, 0.7, -0.2, 0.1, (0, 1, 0, 1, 0, 0))
        gt_corners = corners(Cuboid.axis_aligned([0.0, 0.0, 5.0], [1, 1, 1]))
        ref = reference_box(0.5 + du, 0.5, 5.0, 0, 0, 0, GT.p, (400.0, 400.0, 200.0, 200.0), (1000.0, 1000.0, 500.0, 500.0), (1, 1, 1))
        np.testing.assert_allclose(ref.mean(axis=0), [0.1, 0.0, 5.0], atol=1e-12)
        expected = np.abs(ref - gt_corners).sum()
        assert disentangled_loss("uv", pred, GT, CTX) == pytest.approx(expected, abs=1e-12)
        # the allocentric pose turns with the viewing ray, so this exceeds the
        # 0.8 of a pure translation
        assert expected == pytest.approx(0.8799840047983833, abs=1e-12)

    def test_z_group_matches_hand_decode(self):
        pred = CubeParams(0.1, 0.9, 6.0, 0.3, 0.3, 0.3, (0, 0, 1, 1, 0, 0))
        got = disentangled_loss("z", pred, GT, CTX)
        # only depth changes; on the principal ray the box slides along z by 1
        assert got == pytest.approx(8.0, abs=1e-12)

    def test_unknown_group(self):
        with pytest.raises(ValueError):
            disentangled_loss("xyz", GT, GT, CTX)


class TestTotal:
    def test_examples(self):
        assert total_loss([0, 0, 0, 0, 0], 0.0) == 0.0
        assert total_loss([0, 0, 0, 0, 0], 3.0) == 3.0
        assert total_loss([1.0, 0, 0, 0, 1.0], 0.0) == pytest.approx(2 * math.sqrt(2))

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            total_loss([1.0, -0.1], 0.0)

    @given(st.lists(st.floats(0.0, 50.0), min_size=5, max_size=5).filter(lambda x: sum(x) > 1e-3))
    def test_mu_minimizer(self, parts):
        L = math.fsum(parts)
        res = minimize_scalar(lambda m: total_loss(parts, m), bracket=(-1.0, 1.0), method="golden", tol=1e-12)
        mu_star = math.log(math.sqrt(2) * L)
        assert res.x == pytest.approx(mu_star, abs=1e-6)
        assert total_loss(parts, mu_star) == pytest.approx(mu_star + 1, abs=1e-12)

    @given(st.lists(st.floats(0.0, 10.0), min_size=5, max_size=5), st.integers(0, 4), st.floats(1e-3, 5), st.floats(-3, 3))
    def test_monotone_in_parts(self, parts, k, bump, mu):
        more = list(parts)
        more[k] += bump
        assert total_loss(more, mu) > total_loss(parts, mu)


class TestBreakdown:
    @given(pred=cube_params(), gt=cube_params())
    def test_invariant_holds(self, pred, gt):
        out = loss_breakdown(pred, gt, CTX)
        parts = [out.l_all, out.l_uv, out.l_z, out.l_whl, out.l_pose]
        assert all(p >= 0 for p in parts)
        assert out.mu == pred.mu
        assert out.total == pytest.approx(math.sqrt(2) * math.exp(-pred.mu) * math.fsum(parts) + pred.mu, rel=1e-12)

    def test_perfect_prediction(self):
        out = loss_breakdown(GT, GT, CTX)
        assert out.to_dict() == {"l_all": 0.0, "l_uv": 0.0, "l_z": 0.0, "l_whl": 0.0, "l_pose": 0.0, "mu": 0.0, "total": 0.0}
