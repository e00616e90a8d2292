"""Environment and return tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from moascent.momdp import (
    MOMDPSpec,
    Trajectory,
    Transition,
    make_env,
    mo_return,
)

from .oracles import quad_front_points


def rollout(env, actions, seed=0):
    state = env.reset(seed)
    transitions = []
    for action in actions:
        next_state, reward, terminal = env.step(state, action)
        transitions.append(Transition(state, env.clamp(action), reward, next_state, terminal))
        state = next_state
        if terminal:
            break
    return Trajectory(transitions)


class TestSpecValidation:
    def test_rejects_single_objective(self):
        with pytest.raises(ValueError):
            MOMDPSpec(1, 1, 1, 10, 0.9, np.array([-1.0]), np.array([1.0]))

    def test_rejects_bad_gamma(self):
        with pytest.raises(ValueError):
            MOMDPSpec(1, 1, 2, 10, 0.0, np.array([-1.0]), np.array([1.0]))
        with pytest.raises(ValueError):
            MOMDPSpec(1, 1, 2, 10, 1.5, np.array([-1.0]), np.array([1.0]))

    def test_rejects_inverted_bounds(self):
        with pytest.raises(ValueError):
            MOMDPSpec(1, 1, 2, 10, 0.9, np.array([1.0]), np.array([-1.0]))


class TestReset:
    def test_quadratic_initial_state_is_origin(self):
        env = make_env("mo_quadratic")
        np.testing.assert_array_equal(env.reset(0), np.zeros(1))
        np.testing.assert_array_equal(env.reset(12345), np.zeros(1))

    def test_same_seed_same_state(self):
        env = make_env("mo_point")
        np.testing.assert_array_equal(env.reset(42), env.reset(42))

    def test_point_seeds_differ_only_in_position(self):
        # Documented initial distribution: position uniform in the noise
        # box, velocity deterministically zero.
        env = make_env("mo_point")
        s1, s2 = env.reset(1), env.reset(2)
        assert not np.array_equal(s1[:2], s2[:2])
        np.testing.assert_array_equal(s1[2:], np.zeros(2))
        np.testing.assert_array_equal(s2[2:], np.zeros(2))
        assert np.all(np.abs(s1[:2]) <= env.init_noise)


class TestStep:
    def test_point_reward_formulas(self):
        # Construct a state whose post-step x-velocity is exactly 0.3 under
        # action (0.5, 0.5) (squared magnitude 0.5): with damping 0.95 and
        # dt 0.1, solve 0.95 * vx + 0.05 = 0.3. Speed pays the resulting
        # velocity plus the alive bonus; energy pays the negative squared
        # action plus alive bonus plus shift.
        env = make_env("mo_point")  # r_alive = 1, shift = 2
        vx = 0.25 / 0.95
        state = np.array([0.0, 0.0, vx, 0.0])
        action = np.array([0.5, 0.5])
        next_state, reward, terminal = env.step(state, action)
        assert next_state[2] == pytest.approx(0.3)
        assert reward[0] == pytest.approx(0.3 + 1.0)
        assert reward[1] == pytest.approx(-0.5 + 1.0 + 2.0)
        assert not terminal

    def test_point_zero_action_zero_velocity(self):
        env = make_env("mo_point")
        _, reward, _ = env.step(np.zeros(4), np.zeros(2))
        assert reward[0] == pytest.approx(env.r_alive)
        assert reward[1] == pytest.approx(env.r_alive + env.shift)

    def test_quadratic_reward_at_own_target(self):
        env = make_env("mo_quadratic")
        c1, c2 = env.targets
        _, reward, terminal = env.step(env.reset(0), c1)
        assert reward[0] == pytest.approx(0.0)
        assert reward[1] == pytest.approx(-float(np.sum((c1 - c2) ** 2)))
        assert terminal

    def test_non_finite_action_rejected(self):
        for name in ("mo_point", "mo_quadratic"):
            env = make_env(name)
            with pytest.raises(ValueError, match="non-finite"):
                env.step(env.reset(0), np.full(env.spec.action_dim, np.nan))

    def test_actions_clamped_to_bounds(self):
        env = make_env("mo_quadratic")
        big = np.full(2, 100.0)
        clamped = env.clamp(big)
        assert np.all(clamped == env.spec.action_high)
        # reward reflects the clamped action
        _, reward, _ = env.step(env.reset(0), big)
        diffs = clamped[None, :] - env.targets
        np.testing.assert_allclose(reward, -np.einsum("ij,ij->i", diffs, diffs))

    def test_reward_has_m_finite_components(self):
        rng = np.random.default_rng(0)
        for name in ("mo_point", "mo_quadratic", "mo_quadratic3"):
            env = make_env(name)
            state = env.reset(0)
            for _ in range(20):
                action = rng.uniform(-2, 2, size=env.spec.action_dim)
                state_next, reward, terminal = env.step(state, action)
                assert reward.shape == (env.spec.num_objectives,)
                assert np.all(np.isfinite(reward))
                state = env.reset(0) if terminal else state_next


class TestMoReturn:
    def test_single_step(self):
        env = make_env("mo_quadratic")
        traj = rollout(env, [env.targets[0]])
        np.testing.assert_allclose(
            mo_return(traj, 0.37), [0.0, -np.sum((env.targets[0] - env.targets[1]) ** 2)]
        )

    def test_two_step_discounting(self):
        # Direct evaluation: (1, 0) + 0.5 * (0, 1) = (1, 0.5).
        s = np.zeros(1)
        traj = Trajectory(
            [
                Transition(s, np.zeros(1), np.array([1.0, 0.0]), s, False),
                Transition(s, np.zeros(1), np.array([0.0, 1.0]), s, False),
            ]
        )
        np.testing.assert_allclose(mo_return(traj, 0.5), [1.0, 0.5])

    def test_zero_rewards(self):
        s = np.zeros(1)
        traj = Trajectory(
            [Transition(s, np.zeros(1), np.zeros(2), s, False) for _ in range(4)]
        )
        np.testing.assert_array_equal(mo_return(traj, 0.9), np.zeros(2))

    def test_empty_trajectory_errors(self):
        with pytest.raises(ValueError):
            mo_return(Trajectory([]), 0.9)

    @given(st.floats(-4.0, 4.0), st.floats(0.1, 1.0))
    @settings(max_examples=50, deadline=None)
    def test_linear_in_rewards(self, scale, gamma):
        s = np.zeros(1)
        rng = np.random.default_rng(4)
        rewards = rng.uniform(-1, 1, size=(5, 2))
        base = Trajectory(
            [Transition(s, np.zeros(1), r, s, False) for r in rewards]
        )
        scaled = Trajectory(
            [Transition(s, np.zeros(1), scale * r, s, False) for r in rewards]
        )
        np.testing.assert_allclose(
            mo_return(scaled, gamma), scale * mo_return(base, gamma), atol=1e-12
        )


class TestTrajectoryInvariants:
    def test_chaining_enforced(self):
        s = np.zeros(1)
        bad = Trajectory(
            [
                Transition(s, np.zeros(1), np.zeros(2), np.ones(1), False),
                Transition(s, np.zeros(1), np.zeros(2), s, False),
            ]
        )
        with pytest.raises(ValueError, match="chain"):
            bad.validate()

    def test_nothing_follows_terminal(self):
        s = np.zeros(1)
        bad = Trajectory(
            [
                Transition(s, np.zeros(1), np.zeros(2), s, True),
                Transition(s, np.zeros(1), np.zeros(2), s, False),
            ]
        )
        with pytest.raises(ValueError, match="terminal"):
            bad.validate()

    def test_env_rollout_validates(self):
        env = make_env("mo_point")
        rng = np.random.default_rng(1)
        traj = rollout(env, rng.uniform(-1, 1, size=(env.spec.horizon, 2)))
        traj.validate(env.spec)


class TestQuadraticFrontOracle:
    def test_weighted_optimum_is_target_mix(self):
        # The weighted reward is concave with gradient -2 sum_i w_i (a - c_i),
        # so the optimum is the weight-mix of the targets; sampling candidate
        # actions never beats it.
        env = make_env("mo_quadratic")
        rng = np.random.default_rng(9)
        for _ in range(25):
            w1 = float(rng.uniform())
            w = np.array([w1, 1.0 - w1])
            best = quad_front_points(env.targets, w[None, :])[0]
            for _ in range(200):
                a = rng.uniform(-1.5, 1.5, size=2)
                _, reward, _ = env.step(env.reset(0), a)
                assert float(w @ reward) <= float(w @ best) + 1e-12


def test_unknown_env_name():
    with pytest.raises(ValueError, match="mo_point"):
        make_env("nope")
