import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from worldlens.agents import (
    DeltaConfig,
    Mode,
    UniformAgent,
    UnsupportedGoal,
    delta_agent,
    family_optimal_agent,
    feasible_interval,
    probe_first_action,
    random_walk_agent,
)
from worldlens.builtins import make_chain_world, make_fail_world
from worldlens.goal_syntax import parse_goal
from worldlens.goals import Family, make_family
from worldlens.mdp import FiniteHistory, ObservationHistory
from worldlens.prob import closed_form_tail_gt, closed_form_tail_le, exact_success_prob, optimal_success_prob

L, R = 0, 1
S0, S1 = 2, 3
TRIPLE = (S0, R, S1)


def xi(n, k):
    return make_family(Family.XI_K, TRIPLE, a=L, b=R, n=n, k=k)


def test_feasible_interval_example():
    assert feasible_interval(1.0, 0.0, 0.2) == pytest.approx((0.8, 1.0))
    assert feasible_interval(0.0, 1.0, 0.2) == pytest.approx((0.0, 0.2))
    assert feasible_interval(0.4, 0.4, 0.3) == (0.0, 1.0)


def test_adversary_takes_interval_endpoint():
    w = make_chain_world(0.35, 0.5)
    agent = delta_agent(w, S0, DeltaConfig(0.2, Mode.ADVERSARIAL))
    # k = n: the > k branch is empty, so V_a = 1 and V_b = 0
    rec = probe_first_action(agent, xi(6, 6), S0)
    assert (rec.p_a, rec.p_b) == pytest.approx((0.8, 0.2))


@pytest.mark.parametrize("mode", list(Mode))
def test_zero_delta_is_argmax(mode):
    w = make_chain_world(0.35, 0.5)
    agent = delta_agent(w, S0, DeltaConfig(0.0, mode, seed=3))
    n = 10
    for k in range(-1, n + 1):
        rec = probe_first_action(agent, xi(n, k), S0)
        le, gt = closed_form_tail_le(0.35, n, k), closed_form_tail_gt(0.35, n, k)
        assert rec.p_a == (1.0 if le > gt else 0.0)
        assert rec.p_a + rec.p_b == 1.0


def test_optimal_agent_edges():
    w = make_chain_world(0.3, 0.5)
    agent = family_optimal_agent(w, S0)
    assert probe_first_action(agent, xi(5, 5), S0).p_a == 1.0
    assert probe_first_action(agent, xi(5, -1), S0).p_b == 1.0
    # one visit: p = 0.3 on the a branch against 0.7 on the b branch
    g = make_family(Family.XI_RS, TRIPLE, a=L, b=R, r=1, s=1)
    assert probe_first_action(agent, g, S0).p_b == 1.0


def test_optimal_agent_refuses_other_goals():
    w = make_chain_world(0.3, 0.5)
    with pytest.raises(UnsupportedGoal):
        family_optimal_agent(w, S0).query(parse_goal("<NOW[A=L]>", w), FiniteHistory((S0,)))


def test_forced_region_of_figure4():
    p, n, delta = 0.35, 20, 0.2
    eps = delta / (2 * (1 - delta))
    assert eps == pytest.approx(0.125)
    w = make_chain_world(p, 0.5)
    forced_a = [k for k in range(-1, n + 1) if closed_form_tail_le(p, n, k) >= 0.5 + eps]
    forced_b = [k for k in range(-1, n + 1) if closed_form_tail_gt(p, n, k) >= 0.5 + eps]
    assert max(forced_b) == 5 and min(forced_a) == 8
    agents = [delta_agent(w, S0, DeltaConfig(delta, Mode.RANDOM_FEASIBLE, seed=s)) for s in range(50)]
    agents.append(delta_agent(w, S0, DeltaConfig(delta, Mode.ADVERSARIAL)))
    for agent in agents:
        for k in forced_a:
            assert probe_first_action(agent, xi(n, k), S0).p_a > 0.5
        for k in forced_b:
            assert probe_first_action(agent, xi(n, k), S0).p_b > 0.5


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.booleans(), st.floats(0, 0.99))
def test_adversary_is_closest_to_half(v_lo, a_is_top, delta):
    # agents rescale branch values so the larger one is 1
    v_a, v_b = (1.0, v_lo) if a_is_top else (v_lo, 1.0)
    lo, hi = feasible_interval(v_a, v_b, delta)
    grid = np.arange(0, 1 + 1e-12, 1e-6)
    target = (1 - delta) * max(v_a, v_b)
    tol = 1e-12 * max(v_a, v_b)
    # strict on the grid: one of the endpoints is always exactly feasible
    ok = grid * v_a + (1 - grid) * v_b >= target
    assert ok.any()
    best = np.min(np.abs(grid[ok] - 0.5))
    agent = delta_agent(make_chain_world(0.5, 0.5), S0, DeltaConfig(delta, Mode.ADVERSARIAL))
    agent.branch_values = lambda goal: (L, v_a, R, v_b)
    p_a, p_b = agent.first_pair(None)
    assert lo <= p_a <= hi and p_a + p_b == 1.0
    assert p_a * v_a + (1 - p_a) * v_b >= target - tol
    assert abs(p_a - 0.5) <= best + 1e-6


@pytest.mark.parametrize(
    "config",
    [
        DeltaConfig(0.0, Mode.OPTIMAL, deterministic=True),
        DeltaConfig(0.2, Mode.ADVERSARIAL),
        DeltaConfig(0.2, Mode.RANDOM_FEASIBLE, seed=7),
        DeltaConfig(0.4, Mode.ADVERSARIAL, deterministic=True),
        DeltaConfig(0.3, Mode.RANDOM_FEASIBLE, seed=1, deterministic=True),
    ],
)
def test_delta_optimality_certificate(config):
    """Realized success of each emitted answer is within (1-δ) of the optimum."""
    for pR in (0.2, 0.5, 0.8):
        w = make_chain_world(pR, 0.5)
        agent = delta_agent(w, S0, config)
        n = 3
        goals = [xi(n, k) for k in range(-1, n + 1)]
        goals += [make_family(Family.XI_RS, TRIPLE, a=L, b=R, r=r, s=s) for r in range(1, 4) for s in range(1, 4)]
        for g in goals:
            got = exact_success_prob(w, agent.as_policy(g), g, S0).value
            best = optimal_success_prob(w, g, S0)[0].value
            assert got >= (1 - config.delta) * best - 1e-9


def test_random_feasible_is_stable_per_goal():
    w = make_chain_world(0.35, 0.5)
    cfg = DeltaConfig(0.2, Mode.RANDOM_FEASIBLE, seed=11)
    a1, a2 = delta_agent(w, S0, cfg), delta_agent(w, S0, cfg)
    g = xi(20, 6)
    first = probe_first_action(a1, g, S0)
    for _ in range(3):
        assert probe_first_action(a1, g, S0) == first
    assert probe_first_action(a2, g, S0) == first
    other = delta_agent(w, S0, DeltaConfig(0.2, Mode.RANDOM_FEASIBLE, seed=12))
    assert probe_first_action(other, g, S0) != first


def test_loop_policy_heads_for_the_watched_pair():
    w = make_chain_world(0.35, 0.5)
    agent = family_optimal_agent(w, S0)
    g = xi(4, 1)
    assert agent.query(g, FiniteHistory((S0, S0), (R,)))[R] == 1.0
    np.testing.assert_array_equal(agent.query(g, FiniteHistory((S0, 0), (R,))), agent.loop_policy(g).table[0])


def test_spilling_adversary_needs_a_third_action():
    w = make_chain_world(0.35, 0.5)
    agent = delta_agent(w, S0, DeltaConfig(0.2, Mode.ADVERSARIAL, spill=True))
    with pytest.raises(ValueError):
        probe_first_action(agent, xi(5, 2), S0)


def test_random_walk_agent():
    w = make_fail_world(0.3, 0.4, 0.7)
    agent = random_walk_agent(w)
    g = xi(3, 3)
    first = agent.query(g, ObservationHistory((S0,)))
    assert first[L] == 1.0
    # the failure observation gets the same answer
    np.testing.assert_array_equal(agent.query(g, ObservationHistory((5,))), first)
    later = agent.query(g, ObservationHistory((S0, 5), (L,)))
    np.testing.assert_array_equal(later, [0.5, 0.5])
    rec = probe_first_action(agent, g, S0)
    assert (rec.p_a, rec.p_b) == (1.0, 0.0)


def test_uniform_agent_probe():
    rec = probe_first_action(UniformAgent(2), xi(3, 1), S0, make_chain_world(0.5, 0.5))
    assert (rec.p_a, rec.p_b) == (0.5, 0.5)
    assert rec.remainder == 0.0 and not rec.is_point_mass and rec.chose_b


def test_config_rejects_bad_delta():
    with pytest.raises(ValueError):
        DeltaConfig(1.0)
    with pytest.raises(ValueError):
        DeltaConfig(-0.1)
