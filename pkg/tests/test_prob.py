import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import binomial_pmf, hit_probabilities
from worldlens.agents import family_optimal_agent
from worldlens.builtins import make_chain_world, make_fail_world, make_three_state_world
from worldlens.goal_syntax import parse_goal
from worldlens.goals import Family, Goal, make_family
from worldlens.mdp import StationaryPolicy, World
from worldlens.prob import (
    BlindPolicy,
    MarkovObservationPolicy,
    Method,
    SolverError,
    build_product_chain,
    closed_form_phi,
    closed_form_rho,
    closed_form_tail_gt,
    closed_form_tail_le,
    exact_success_prob,
    family_log_value,
    family_value,
    monte_carlo_observation,
    monte_carlo_prob,
    optimal_success_prob,
    pomdp_policy_success_prob,
    pomdp_success_prob_obs_independent,
)

L, R = 0, 1
SM2, SM1, S0, S1, S2 = range(5)
TRIPLE = (S0, R, S1)
PSI = "<EV[S={s-2,s2}], NEXT[S=s0]>"
PI_1 = [R, R, R, L, L]
PI_2 = [L, R, R, L, R]


def det(actions, nA=2):
    return StationaryPolicy.deterministic(actions, nA)


# ---------------------------------------------------------------- closed forms


def test_closed_form_phi():
    assert closed_form_phi(0.35, (1, 0, 1)) == pytest.approx(0.35**2 * 0.65, rel=1e-15)
    assert closed_form_phi(0.35, (1, 0, 1)) == pytest.approx(0.079625, rel=1e-12)
    assert closed_form_phi(0.42, ()) == 1.0
    assert closed_form_phi(0.0, (0, 0, 0)) == 1.0


@pytest.mark.parametrize("p", [0.0, 0.3, 0.5, 1.0])
def test_rho_against_word_enumeration(p):
    for n in range(0, 9):
        for r in range(n + 1):
            assert closed_form_rho(p, n, r) == pytest.approx(binomial_pmf(p, n, r), abs=1e-14)


def test_rho_normalizes():
    assert sum(closed_form_rho(0.3, 10, r) for r in range(11)) == pytest.approx(1.0, abs=1e-14)
    assert sum(closed_form_rho(0.3, 200, r) for r in range(201)) == pytest.approx(1.0, abs=1e-12)


def test_tails():
    cdf = lambda k: sum(math.comb(20, j) * 0.35**j * 0.65 ** (20 - j) for j in range(k + 1))
    for k in range(21):
        assert closed_form_tail_le(0.35, 20, k) == pytest.approx(cdf(k), abs=1e-14)
    # the median of Bin(20, 0.35) is 7
    assert closed_form_tail_le(0.35, 20, 6) < 0.5 < closed_form_tail_le(0.35, 20, 7)
    assert closed_form_tail_gt(0.77, 13, 13) == 0.0
    assert closed_form_tail_le(0.77, 13, -1) == 0.0
    with pytest.raises(ValueError):
        closed_form_tail_le(0.5, 5, 6)
    with pytest.raises(ValueError):
        closed_form_rho(0.5, 5, -1)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.integers(1, 400), st.data())
def test_tails_sum_to_one_and_are_monotone(p, n, data):
    k = data.draw(st.integers(-1, n))
    assert closed_form_tail_le(p, n, k) + closed_form_tail_gt(p, n, k) == pytest.approx(1.0, abs=1e-12)
    if k < n:
        assert closed_form_tail_le(p, n, k + 1) >= closed_form_tail_le(p, n, k)


def test_log_space_matches_direct_values():
    for p in (0.01, 0.3, 0.5):
        for n in (31, 80):
            for r in (0, 5, n // 2, n):
                direct = math.comb(n, r) * p**r * (1 - p) ** (n - r)
                assert closed_form_rho(p, n, r) == pytest.approx(direct, rel=1e-9, abs=1e-300)


def test_family_log_value_survives_underflow():
    xi = make_family(Family.XI_RS, TRIPLE, a=L, b=R, r=2000, s=800)
    assert family_value(xi.branches()[0][1], 0.3) == 0.0
    assert family_log_value(xi.branches()[0][1], 0.3) == pytest.approx(2000 * math.log(0.3))
    assert family_log_value(xi.branches()[1][1], 0.3) == pytest.approx(800 * math.log(0.7))


# ---------------------------------------------------------------- exact solves


def test_example_psi_under_left_policy():
    for pR, pL in ((0.3, 0.6), (0.8, 0.2)):
        w = make_chain_world(pR, pL)
        psi = parse_goal(PSI, w)
        assert exact_success_prob(w, det([L] * 5), psi, S0).value == pytest.approx(pL, abs=1e-12)
        assert exact_success_prob(w, det([R] * 5), psi, S0).value == pytest.approx(pR, abs=1e-12)


def test_eventually_s0_is_certain():
    w = make_chain_world(0.3, 0.6)
    phi = parse_goal("<EV[S=s0]>", w)
    for pol in (PI_1, PI_2):
        for s in w.states:
            assert exact_success_prob(w, det(pol), phi, s).value == pytest.approx(1.0, abs=1e-12)


def test_phi_words_match_closed_form():
    for pR in (0.2, 0.5, 0.8):
        w = make_chain_world(pR, 0.5)
        agent = family_optimal_agent(w, S0)
        for n in range(1, 5):
            for bits in range(2**n):
                word = tuple((bits >> i) & 1 for i in range(n))
                phi = make_family(Family.PHI_W, TRIPLE, b=R, w=word)
                # the agent's loop policy after playing b
                pol = agent.as_policy(make_family(Family.XI_K, TRIPLE, a=L, b=R, n=n, k=-1))
                got = exact_success_prob(w, pol, phi, S0).value
                assert got == pytest.approx(closed_form_phi(pR, word), abs=1e-9)


def test_product_chain_is_stochastic():
    w = make_chain_world(0.3, 0.6)
    chain = build_product_chain(w, det(PI_2), parse_goal(PSI, w), S1)
    assert chain.row_defect() < 1e-12


def test_false_and_trivial_goals():
    w = make_chain_world(0.3, 0.6)
    assert exact_success_prob(w, det(PI_1), Goal(()), S0).value == 0.0
    assert exact_success_prob(w, det(PI_1), parse_goal("<NOW[TRUE]>", w), S0).value == 1.0


def test_unreachable_target_is_zero():
    P = np.zeros((2, 1, 2))
    P[:, 0, 0] = 1.0
    w = World(P)
    assert exact_success_prob(w, det([0, 0], 1), parse_goal("<EV[S=1]>"), 0).value == 0.0


# ---------------------------------------------------------------- optimal values


def test_example_psi_optimum():
    for pR, pL in ((0.3, 0.6), (0.8, 0.2), (0.5, 0.5)):
        w = make_chain_world(pR, pL)
        val, witness = optimal_success_prob(w, parse_goal(PSI, w), S0)
        assert val.method is Method.VALUE_ITERATION
        assert val.value == pytest.approx(max(pL, pR), abs=1e-12)
        assert exact_success_prob(w, witness, parse_goal(PSI, w), S0).value == pytest.approx(val.value, abs=1e-12)


def test_first_action_goal_optimum():
    w = make_chain_world(0.3, 0.6)
    val, witness = optimal_success_prob(w, parse_goal("<NOW[A=L]>", w), S1)
    assert val.value == 1.0
    assert witness.act(witness.initial_memory(), S1)[L] == 1.0


def test_rho_optimum_is_closed_form():
    for pR in (0.2, 0.5, 0.8):
        w = make_chain_world(pR, 0.5)
        for n in range(1, 4):
            for r in range(n + 1):
                rho = make_family(Family.RHO, TRIPLE, b=R, n=n, r=r)
                val, _ = optimal_success_prob(w, rho, S0)
                assert val.value == pytest.approx(closed_form_rho(pR, n, r), abs=1e-9)


def test_psi_le_optimum_monotone_in_k():
    w = make_chain_world(0.35, 0.5)
    n = 3
    vals = [optimal_success_prob(w, make_family(Family.PSI_LE, TRIPLE, b=R, n=n, k=k), S0)[0].value for k in range(-1, n + 1)]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    assert vals[0] == 0.0 and vals[-1] == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- Monte Carlo


def test_monte_carlo_forced_acceptance():
    w = make_three_state_world().base
    res = monte_carlo_prob(w, det([1, 1, 1]), parse_goal("<NOW[A=1], NEXT[S=2]>"), 1, samples=200)
    assert res.value == 1.0 and res.pending == 0.0


def test_monte_carlo_unreachable():
    P = np.zeros((2, 1, 2))
    P[:, 0, 0] = 1.0
    res = monte_carlo_prob(World(P), det([0, 0], 1), parse_goal("<EV[S=1]>"), 0, samples=100)
    assert res.value == 0.0 and res.pending == 1.0
    assert res.bracket == (0.0, 1.0)


def test_monte_carlo_agrees_with_exact():
    w = make_chain_world(0.3, 0.6)
    psi = parse_goal(PSI, w)
    exact = exact_success_prob(w, det([L] * 5), psi, S0).value
    mc = monte_carlo_prob(w, det([L] * 5), psi, S0, samples=100_000, seed=4)
    assert mc.pending < 1e-3
    sigma = math.sqrt(exact * (1 - exact) / mc.samples)
    assert abs(mc.value - exact) < 3 * sigma
    lo, hi = mc.bracket
    assert lo - 3 * sigma <= exact <= hi + 3 * sigma


# ---------------------------------------------------------------- partial observability


def test_observation_kernel_does_not_matter_for_blind_policies():
    goals = [make_family(Family.PHI_W, TRIPLE, b=R, w=w) for w in ((0,), (1,), (0, 1), (1, 1))]
    values = []
    for pF in (0.0, 0.3, 0.9):
        w = make_fail_world(pF, 0.4, 0.7)
        pol = BlindPolicy.uniform(2, first=R)
        row = []
        for g in goals:
            res = pomdp_success_prob_obs_independent(w, pol, g, S0)
            assert res.crosscheck == pytest.approx(res.value, abs=1e-12)
            row.append(res.value)
        values.append(row)
    np.testing.assert_allclose(values[0], values[1], atol=1e-12)
    np.testing.assert_allclose(values[0], values[2], atol=1e-12)


def test_three_state_world_random_walk_crosscheck():
    w = make_three_state_world()
    for g in (make_family(Family.PHI_W, (1, 1, 2), b=1, w=(1,)), make_family(Family.PHI_W, (0, 0, 1), b=0, w=(1, 1))):
        res = pomdp_success_prob_obs_independent(w, BlindPolicy.uniform(2), g, 0)
        assert res.value == pytest.approx(res.crosscheck, abs=1e-12)


def test_crosscheck_detects_observation_dependence():
    w = make_fail_world(0.5, 0.4, 0.7)
    # a "blind" policy object that secretly reads the observation
    class Peeking(BlindPolicy):
        def act(self, memory, o):
            return np.array([1.0, 0.0]) if o == 5 else np.array([0.0, 1.0])

    pol = Peeking(np.array([0.5, 0.5]))
    with pytest.raises(SolverError):
        pomdp_success_prob_obs_independent(w, pol, parse_goal("<NOW[A=R]>", w.base), S0)


def example6_oracle(pF, pR, pL):
    """Hitting analysis: which of s-2, s2 comes first, then the final step."""
    step_left = (1 - pF) * pL
    step_right = pF * pR
    chain = np.zeros((5, 5))
    for s in (SM1, S0, S1):
        chain[s, s - 1] += step_left
        chain[s, s + 1] += step_right
        chain[s, s] += 1 - step_left - step_right
    chain[SM2, SM2] = chain[S2, S2] = 1.0
    q_left = hit_probabilities(chain, [SM2])[S0]
    return q_left * (1 - pF) * pL + (1 - q_left) * pF * pR


@pytest.mark.parametrize("pF, pR, pL", [(0.3, 0.4, 0.7), (0.5, 0.5, 0.5), (0.9, 0.2, 0.6)])
def test_fail_world_observation_policy(pF, pR, pL):
    w = make_fail_world(pF, pR, pL)
    table = np.zeros((6, 2))
    table[:5, L] = 1.0
    table[5, R] = 1.0
    psi = parse_goal(PSI, w.base)
    exact = pomdp_policy_success_prob(w, MarkovObservationPolicy(table), psi, S0).value
    assert exact == pytest.approx(example6_oracle(pF, pR, pL), abs=1e-12)
    mc = monte_carlo_observation(w, lambda h: table[h.last], psi, S0, samples=20_000, seed=1)
    assert abs(mc.value - exact) < 4 * math.sqrt(exact * (1 - exact) / mc.samples) + mc.pending


def test_three_state_world_observation_policies():
    w = make_three_state_world()
    goal = parse_goal("<EV[S=s3]>", w.base)
    for o1_action in (0, 1):
        for o2_action in (0, 1):
            table = np.zeros((2, 2))
            table[0, o1_action] = table[1, o2_action] = 1.0
            assert pomdp_policy_success_prob(w, MarkovObservationPolicy(table), goal, 0).value == 0.0
    uniform = MarkovObservationPolicy(np.full((2, 2), 0.5))
    assert pomdp_policy_success_prob(w, uniform, goal, 0).value == pytest.approx(1.0, abs=1e-12)
