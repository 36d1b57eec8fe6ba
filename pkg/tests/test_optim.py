import numpy as np
import pytest

from src.core.optim import AdamW, adamw_step
from src.core.tensor import Parameter, Tensor, sum_


class TestAdamwStep:
    '''The closed-form update against a hand-computed reference.'''

    def test_first_step_moves_by_lr_times_sign(self):
        param = np.array([1.0, -2.0])
        grad = np.array([0.5, -3.0])
        new, m, v = adamw_step(param, grad, np.zeros(2), np.zeros(2), 0.1, 0.9, 0.999, 1e-8, 0.0, 1)
        # bias-corrected m_hat / sqrt(v_hat) is sign(grad) on step one
        np.testing.assert_allclose(new, param - 0.1 * np.sign(grad), rtol=1e-6)
        np.testing.assert_allclose(m, 0.1 * grad)
        np.testing.assert_allclose(v, 0.001 * grad**2)

    def test_weight_decay_is_decoupled(self):
        param = np.array([2.0])
        new, _, _ = adamw_step(param, np.zeros(1), np.zeros(1), np.zeros(1), 0.1, 0.9, 0.999, 1e-8, 0.5, 1)
        np.testing.assert_allclose(new, [2.0 - 0.1 * 0.5 * 2.0])

    def test_two_steps_match_reference_loop(self):
        lr, b1, b2, eps, wd = 0.01, 0.9, 0.999, 1e-8, 0.01
        param = np.array([0.3, -0.7, 1.1])
        grads = [np.array([0.2, -0.1, 0.4]), np.array([-0.3, 0.05, 0.2])]
        ref, m, v = param.copy(), np.zeros(3), np.zeros(3)
        for t, g in enumerate(grads, start=1):
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            ref = ref * (1 - lr * wd) - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)

        out, m2, v2 = param.copy(), np.zeros(3), np.zeros(3)
        for t, g in enumerate(grads, start=1):
            out, m2, v2 = adamw_step(out, g, m2, v2, lr, b1, b2, eps, wd, t)
        np.testing.assert_allclose(out, ref, rtol=1e-12)


class TestAdamW:
    '''Optimizer bookkeeping over Parameters.'''

    def test_skips_frozen_parameters(self):
        frozen = Parameter('frozen', np.ones(2), frozen=True)
        live = Parameter('live', np.ones(2))
        optimizer = AdamW([frozen, live], lr=0.1)
        assert [p.name for p in optimizer.params] == ['live']

    def test_minimises_a_quadratic(self):
        p = Parameter('x', np.array([3.0, -2.0], dtype=np.float64))
        optimizer = AdamW([p], lr=0.1, weight_decay=0.0)
        for _ in range(200):
            optimizer.zero_grad()
            sum_(p * p).backward()
            optimizer.step()
        assert np.abs(p.data).max() < 0.5

    def test_state_dict_round_trip_restores_moments(self):
        p = Parameter('x', np.array([1.0, 2.0], dtype=np.float64))
        optimizer = AdamW([p], lr=0.1)
        sum_(p * Tensor(np.array([1.0, -1.0]))).backward()
        optimizer.step()
        state = optimizer.state_dict()

        restored = AdamW([Parameter('x', p.data)], lr=0.1)
        restored.load_state_dict(state)
        assert restored.step_index == 1
        np.testing.assert_array_equal(restored.moments['x'][0], optimizer.moments['x'][0])
        np.testing.assert_array_equal(restored.moments['x'][1], optimizer.moments['x'][1])

    def test_large_step_count_round_trips(self):
        optimizer = AdamW([Parameter('x', np.zeros(2))], lr=0.1)
        optimizer.step_index = 2**24 + 1
        restored = AdamW([Parameter('x', np.zeros(2))], lr=0.1)
        restored.load_state_dict(optimizer.state_dict())
        assert restored.step_index == 2**24 + 1

    def test_rejects_non_positive_lr(self):
        with pytest.raises(ValueError):
            AdamW([], lr=0.0)
