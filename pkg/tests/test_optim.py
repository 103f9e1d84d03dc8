import numpy as np
import pytest

from ukan import tensor as T
from ukan.errors import ContractError
from ukan.optim import AdamState, LrSchedule, adam_step, lr_at, sgd_step


class TestSgd:
    def test_zero_gradient(self):
        p = T.parameter([1.0, 2.0])
        sgd_step([p], [np.zeros(2)], 0.1)
        np.testing.assert_array_equal(p.values, [1.0, 2.0])

    def test_arithmetic(self):
        p = T.parameter([1.0])
        sgd_step([p], [np.array([2.0])], 0.1)
        np.testing.assert_allclose(p.values, [0.8])

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            sgd_step([T.parameter([1.0])], [np.zeros(3)], 0.1)

    def test_quadratic_bowl_converges(self):
        p = T.parameter([1.0])
        for _ in range(200):
            sgd_step([p], [2.0 * p.values], 0.1)
        assert abs(p.values[0]) < 1e-6
        # closed form: (1 - 2*lr)^t
        assert p.values[0] == pytest.approx(0.8 ** 200, rel=1e-9)


class TestAdam:
    def test_zero_gradient_no_decay(self):
        p = T.parameter([3.0])
        adam_step([p], [np.zeros(1)], AdamState(), lr=0.1)
        np.testing.assert_array_equal(p.values, [3.0])

    def test_decay_couples_through_gradient(self):
        # with g=0 the first-step effective gradient is wd*p
        wd, lr, p0 = 0.1, 0.01, 4.0
        p = T.parameter([p0])
        adam_step([p], [np.zeros(1)], AdamState(), lr=lr, weight_decay=wd)
        g = wd * p0
        expected = p0 - lr * g / (np.sqrt(g * g) + 1e-8)
        np.testing.assert_allclose(p.values, [expected], rtol=1e-12)

    def test_first_step_is_sign_like(self):
        # hand-evaluated bias-corrected formulas at t=1 with constant g
        for g in (1.0, 10.0):
            p = T.parameter([0.0])
            adam_step([p], [np.array([g])], AdamState(), lr=0.5)
            assert p.values[0] == pytest.approx(-0.5 * g / (g + 1e-8), rel=1e-9)

    def test_scale_robust_first_step(self):
        updates = []
        for g in (1.0, 10.0):
            p = T.parameter([0.0])
            adam_step([p], [np.array([g])], AdamState(), lr=0.5)
            updates.append(p.values[0])
        assert abs(updates[0] - updates[1]) / abs(updates[0]) < 1e-6

    def test_deterministic(self, rng):
        def run():
            p = T.parameter(np.ones(4))
            st = AdamState()
            r = np.random.default_rng(0)
            for _ in range(50):
                adam_step([p], [r.normal(size=4)], st, lr=0.01, weight_decay=1e-5)
            return p.values.copy()

        assert np.array_equal(run(), run())

    def test_second_moment_nonnegative(self, rng):
        p = T.parameter(np.ones(4))
        st = AdamState()
        for _ in range(20):
            adam_step([p], [rng.normal(size=4)], st, lr=0.01)
        assert all(np.all(v >= 0) for v in st.v.values())
        assert st.t == 20


class TestSchedule:
    def test_t0(self):
        assert lr_at(LrSchedule(0.01, 1 - 1e-4, 1e-4), 0) == 0.01

    def test_decay_value(self):
        lr = lr_at(LrSchedule(0.01, 1 - 1e-4, 1e-4), 10000)
        assert lr == pytest.approx(0.01 * (1 - 1e-4) ** 10000, rel=1e-12)
        assert lr == pytest.approx(0.003679, abs=2e-6)

    def test_floor(self):
        assert lr_at(LrSchedule(0.01, 1 - 1e-4, 1e-4), 10 ** 7) == 1e-4

    def test_non_increasing(self):
        s = LrSchedule(0.01, 1 - 1e-3, 1e-5)
        values = [lr_at(s, t) for t in range(0, 20000, 100)]
        assert all(a >= b for a, b in zip(values, values[1:]))
        assert min(values) >= 1e-5

    def test_invalid(self):
        with pytest.raises(ContractError):
            LrSchedule(0.01, 0.0, 1e-4)
        with pytest.raises(ContractError):
            LrSchedule(0.01, 1.0, 0.5)
