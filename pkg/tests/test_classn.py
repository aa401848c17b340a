"""Invariant-class defect, example family, derivative-block recursions."""

import numpy as np
import pytest

from pdrenorm import classn
from pdrenorm import families as fam
from pdrenorm import henon as hn
from pdrenorm.exceptions import ConstraintViolated


class TestDefect:
    def test_constant_delta_zero_defect(self, fstar):
        F = hn.HenonLikeMap.build(
            fstar, m=1, delta_fns=[lambda p: 0.05 * np.ones(len(p))]
        )
        assert classn.n_defect(F, classn.FULL).sup_defect < 1e-13

    def test_linear_y_delta_defect_equals_slope(self, fstar):
        F = hn.HenonLikeMap.build(fstar, m=1, delta_fns=[lambda p: 0.1 * p[:, 1]])
        assert classn.n_defect(F, classn.FULL).sup_defect == pytest.approx(
            0.1, abs=1e-10
        )

    def test_example_family_defect_below_tolerance(self, example_tower_m1):
        rep = classn.n_defect(
            example_tower_m1.maps[0], classn.PIECES,
            step=example_tower_m1.steps[0],
        )
        assert rep.sup_defect <= 1e-9

    def test_nonclass_seed_defect_is_shear(self, nonclass_map):
        rep = classn.n_defect(nonclass_map, classn.FULL)
        assert rep.sup_defect == pytest.approx(0.05, rel=1e-6)


class TestExampleFamily:
    def test_row_sum_violation_rejected(self, fstar):
        with pytest.raises(ConstraintViolated):
            classn.make_example_n(
                fstar, m=1, eta_slopes=[0.05], C=[[0.06, 0.05]]
            )

    def test_pure_x_delta_has_zero_defect(self, fstar):
        F = classn.make_example_n(fstar, m=1, eta_slopes=[0.0], C=[[0.0, 0.0]])
        assert classn.n_defect(F, classn.FULL).sup_defect < 1e-12

    def test_blocks_of_example(self, fstar, rng):
        F = classn.make_example_n(fstar, m=1, eta_slopes=[0.05], C=[[0.05, 0.05]])
        blk = classn.blocks(F)
        pts = rng.uniform(-0.9, 0.9, size=(30, 3))
        assert np.abs(blk.x_at(pts) - 1.0).max() < 1e-11
        assert np.abs(blk.y_at(pts) - 0.0025).max() < 1e-11
        assert np.abs(blk.z_at(pts) + 0.0025).max() < 1e-11

    def test_m2_example_defect(self, example_tower_m2):
        rep = classn.n_defect(
            example_tower_m2.maps[0], classn.PIECES,
            step=example_tower_m2.steps[0], n_per_axis=5,
        )
        assert rep.sup_defect <= 1e-9


class TestBlocks:
    def test_zero_delta_zero_blocks(self, fstar, rng):
        F = hn.HenonLikeMap.degenerate(fstar, m=1)
        blk = classn.blocks(F)
        pts = rng.uniform(-0.9, 0.9, size=(10, 3))
        assert np.abs(blk.x_at(pts)).max() == 0.0
        assert np.abs(blk.z_at(pts)).max() == 0.0

    def test_constant_blocks(self, fstar):
        F = hn.HenonLikeMap.build(
            fstar, m=1, delta_fns=[lambda p: 0.1 * p[:, 1] + 0.2 * p[:, 2]]
        )
        blk = classn.blocks(F)
        w = np.zeros((1, 3))
        assert blk.y_at(w)[0, 0] == pytest.approx(0.1, abs=1e-12)
        assert blk.z_at(w)[0, 0, 0] == pytest.approx(0.2, abs=1e-12)

    def test_finite_difference_agreement(self, rich_tower, rng):
        # oracle: central differences of delta itself
        F = rich_tower.maps[0]
        blk = classn.blocks(F)
        pts = rng.uniform(-0.8, 0.8, size=(40, 3))
        h = 1e-5
        for axis, getter in ((0, blk.x_at), (1, blk.y_at)):
            shift = np.zeros(3)
            shift[axis] = h
            fd = (F.delta(pts + shift) - F.delta(pts - shift)) / (2 * h)
            assert np.abs(getter(pts) - fd).max() < 1e-7


class TestRecursions:
    def test_block_recursion_on_example(self, example_tower_m1):
        rep = classn.verify_block_recursion(
            example_tower_m1.maps[0], example_tower_m1.steps[0]
        )
        assert rep.max() <= 1e-7

    def test_appendix_recursion_on_example(self, example_tower_m1):
        rep = classn.verify_appendix_recursion(
            example_tower_m1.maps[0], example_tower_m1.steps[0]
        )
        assert rep.max() <= 1e-7

    def test_appendix_recursion_generic_seed(self, rich_tower):
        # the general recursion does not need the class identity
        rep = classn.verify_appendix_recursion(
            rich_tower.maps[0], rich_tower.steps[0]
        )
        assert rep.max() <= 1e-7

    def test_appendix_recursion_m2(self, example_tower_m2):
        rep = classn.verify_appendix_recursion(
            example_tower_m2.maps[0], example_tower_m2.steps[0], n_per_axis=5
        )
        assert rep.max() <= 1e-6

    def test_degenerate_recursions_vanish(self, degenerate_tower):
        rep = classn.verify_block_recursion(
            degenerate_tower.maps[0], degenerate_tower.steps[0]
        )
        assert rep.max() < 1e-12

    def test_class_and_appendix_agree_when_defect_vanishes(self, example_tower_m1):
        in_class = classn.verify_block_recursion(
            example_tower_m1.maps[0], example_tower_m1.steps[0]
        )
        general = classn.verify_appendix_recursion(
            example_tower_m1.maps[0], example_tower_m1.steps[0]
        )
        assert abs(in_class.z_residual - general.z_residual) < 1e-9
        assert abs(in_class.y_residual - general.y_residual) < 1e-7

    def test_y_recursion_degrades_off_class(self, nonclass_map):
        # diagnostic: for a map with a large defect the in-class
        # Y-recursion residual dominates the X/Z ones
        step = hn.renormalize(nonclass_map, validate=False)
        rep = classn.verify_block_recursion(nonclass_map, step)
        assert rep.y_residual > 10 * rep.z_residual

    def test_z_product_law(self, example_tower_m1_quad, rng):
        # in-class identity: off the class the general recursion carries an
        # extra bracket term of the defect's size
        tower = example_tower_m1_quad
        F, step = tower.maps[0], tower.steps[0]
        blk = classn.blocks(F)
        blk1 = classn.blocks(step.F_next)
        pts = rng.uniform(-1, 1, size=(40, 3))
        det_next = np.linalg.det(blk1.z_at(pts))
        det_c = np.linalg.det(blk.z_at(step.scope.apply_c(pts)))
        det_v = np.linalg.det(blk.z_at(step.scope.apply_v(pts)))
        assert np.abs(det_next - det_c * det_v).max() < 1e-8


class TestInvariance:
    def test_defect_stays_small_along_tower(self, example_tower_m1):
        defects = classn.invariance_experiment(example_tower_m1)
        assert all(d <= 1e-8 for d in defects)

    def test_degenerate_z_tower_defects_zero(self, m1_tower):
        # factorized seeds have X = Y = 0 identically at every level
        defects = classn.invariance_experiment(m1_tower)
        assert all(d <= 1e-8 for d in defects)

    def test_nonclass_defect_reported_not_asserted(self, fstar, nonclass_map):
        _, seq = fam.tune_tower(
            lambda t: fam.shear_seed(fstar, t, b=0.05, c=0.3, a=0.05), 2
        )
        defects = classn.invariance_experiment(seq)
        assert defects[0] > 1e-3
