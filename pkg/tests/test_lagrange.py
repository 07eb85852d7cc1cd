import numpy as np
import pytest

import seqopt as so
from seqopt.histories import state_space


def test_weighted_problem_identity():
    p = so.iid_problem(
        [[0.8, 0.2], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.02,
        groups=((0, 1),), bounds=(0.225,),
    )
    wp = so.weighted_problem(p, [1.0])
    assert np.array_equal(wp.loss.w, p.loss.w)
    assert wp.cost.c == p.cost.c
    assert wp.constraints.multipliers == (1.0,)
    assert so.solve_truncated(wp, 2).q0 == pytest.approx(0.256, abs=1e-12)


def test_weighted_problem_scales_and_zeroes():
    p = so.iid_problem(
        [[0.8, 0.2], [0.5, 0.5], [0.3, 0.7]], so.zero_one_loss(3),
        [1 / 3] * 3, [1 / 3] * 3, 0.02,
        groups=((0,), (2,)), bounds=(0.1, 0.1),
    )
    wp = so.weighted_problem(p, [2.0, 3.0])
    assert np.array_equal(wp.loss.w[0], 2.0 * p.loss.w[0])
    assert np.array_equal(wp.loss.w[2], 3.0 * p.loss.w[2])
    assert np.all(wp.loss.w[1] == 0.0)  # middle parameter is outside every group


def test_weighted_problem_validates():
    p = so.iid_problem(
        [[0.8, 0.2], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.02,
        groups=((0,), (1,)), bounds=(0.1, 0.1),
    )
    with pytest.raises(so.SeqOptError):
        so.weighted_problem(p, [1.0])
    with pytest.raises(so.SeqOptError):
        so.weighted_problem(p, [1.0, -0.5])
    bare = so.iid_problem(
        [[0.8, 0.2], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.02
    )
    with pytest.raises(so.SeqOptError):
        so.weighted_problem(bare, [1.0])


def test_lagrangian_hand_value(instance_b):
    rule = so.extract_rule(so.solve_truncated(instance_b, 2))
    assert so.lagrangian(instance_b, [1.0, 1.0], rule) == pytest.approx(1.775, abs=1e-12)


def test_match_single_group_on_step_boundary():
    p = so.iid_problem(
        [[0.8, 0.2], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.02,
        groups=((0, 1),), bounds=(0.225,),
    )
    res = so.match_constraints(p, [0.225], so.SearchConfig(horizon=2))
    assert res.converged
    assert res.achieved[0] == pytest.approx(0.225, abs=1e-6)
    assert res.n_psi == pytest.approx(1.55, abs=1e-6)


def test_match_single_group_randomizes_inside_step():
    p = so.iid_problem(
        [[0.8, 0.2], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.02,
        groups=((0, 1),), bounds=(0.24,),
    )
    res = so.match_constraints(p, [0.24], so.SearchConfig(horizon=2))
    assert res.converged
    assert res.achieved[0] == pytest.approx(0.24, abs=1e-9)
    space = state_space(p, res.rule.engine)
    gamma = res.rule.at(1)[space.index_of(1, (1, 0))]
    assert 0.0 < gamma < 1.0  # genuinely randomized at the flip state
    assert gamma == pytest.approx(0.6, abs=1e-9)
    assert res.n_psi == pytest.approx(1.22, abs=1e-9)


def test_match_two_groups_trivial_multipliers(instance_b):
    res = so.match_constraints(instance_b, [0.18, 0.045], so.SearchConfig(horizon=2))
    assert res.converged
    assert res.lam == pytest.approx([1.0, 1.0], abs=1e-9)
    assert res.achieved == pytest.approx([0.18, 0.045], abs=1e-9)
    assert res.n_psi == pytest.approx(1.55, abs=1e-9)


def test_match_two_groups_symmetric():
    p = so.iid_problem(
        [[0.7, 0.3], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.01,
        groups=((0,), (1,)), bounds=(0.05, 0.05),
    )
    res = so.match_constraints(p, [0.05, 0.05], so.SearchConfig(horizon=20))
    assert res.converged
    assert res.achieved == pytest.approx([0.05, 0.05], abs=1e-6)
    assert res.lam[0] == pytest.approx(res.lam[1], rel=1e-3)  # symmetric multipliers
    rep = so.evaluate(p, res.rule, res.decision)
    assert rep.error_probs[0] == pytest.approx(0.1, abs=1e-6)
    assert rep.error_probs[1] == pytest.approx(0.1, abs=1e-6)


def test_match_two_groups_asymmetric():
    p = so.iid_problem(
        [[0.7, 0.3], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.01,
        groups=((0,), (1,)), bounds=(0.08, 0.03),
    )
    res = so.match_constraints(p, [0.08, 0.03], so.SearchConfig(horizon=20))
    assert res.converged
    assert res.achieved == pytest.approx([0.08, 0.03], abs=1e-6)
    assert res.lam[1] > res.lam[0]  # tighter second target needs more weight


def test_infeasible_targets_raise(instance_b):
    with pytest.raises(so.InfeasibleTargetsError):
        so.match_constraints(instance_b, [0.6, 0.6], so.SearchConfig(horizon=3))
    p1 = so.iid_problem(
        [[0.8, 0.2], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.02,
        groups=((0, 1),), bounds=(0.2,),
    )
    # at horizon 2 no rule gets the total loss below 0.225
    with pytest.raises(so.InfeasibleTargetsError):
        so.match_constraints(p1, [0.2], so.SearchConfig(horizon=2, max_bracket_steps=25))
    with pytest.raises(so.InfeasibleTargetsError):
        so.match_constraints(p1, [-0.1], so.SearchConfig(horizon=2))


def test_too_many_groups_rejected():
    p = so.iid_problem(
        [[0.8, 0.2], [0.5, 0.5], [0.3, 0.7]], so.zero_one_loss(3),
        [1 / 3] * 3, [1 / 3] * 3, 0.02,
        groups=((0,), (1,), (2,)), bounds=(0.1, 0.1, 0.1),
    )
    with pytest.raises(so.SeqOptError, match="1 or 2 groups"):
        so.match_constraints(p, [0.1, 0.1, 0.1])


def test_conditional_optimality_of_matched_rule():
    p = so.iid_problem(
        [[0.8, 0.2], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.02,
        groups=((0, 1),), bounds=(0.24,),
    )
    res = so.match_constraints(p, [0.24], so.SearchConfig(horizon=2))
    check = so.verify_conditional_optimality(p, res, horizon=2)
    assert check.ok
    assert check.n_rules <= 4


def test_conditional_optimality_flags_wasteful_rule(instance_b):
    # delaying every stop to stage 2 keeps the same losses as the optimum
    # but pays a full extra observation; the enumerator must notice
    space = state_space(instance_b, "counts")
    delay = so.StoppingRule(
        "counts",
        [np.zeros(space.n_states(1)), np.ones(space.n_states(2))],
        truncated=True,
    )
    rep = so.evaluate(instance_b, delay)
    assert rep.n_psi == pytest.approx(2.0, abs=1e-12)
    assert rep.w_groups == pytest.approx([0.18, 0.045], abs=1e-12)
    fake = so.MultiplierSearchResult(
        lam=np.array([1.0, 1.0]),
        targets=rep.w_groups.copy(),
        achieved=rep.w_groups.copy(),
        slack=np.zeros(2),
        rule=delay,
        decision=so.DecisionStrategy.bayes(so.HistoryTable(instance_b), 2),
        n_psi=rep.n_psi,
        converged=True,
        horizon=2,
        weighted=so.weighted_problem(instance_b, [1.0, 1.0]),
    )
    check = so.verify_conditional_optimality(instance_b, fake, horizon=2)
    assert not check.ok
    assert any(v["n_psi"] == pytest.approx(1.55, abs=1e-9) for v in check.violations)


def test_match_limit_mode_single_group():
    p = so.iid_problem(
        [[0.8, 0.2], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.02,
        groups=((0, 1),), bounds=(0.1,),
    )
    res = so.match_constraints(p, [0.1], so.SearchConfig(limit_tol=1e-9, n_cap=64))
    assert res.converged
    assert res.achieved[0] == pytest.approx(0.1, abs=1e-6)
    # sanity: the matched rule is no slower than matching requires
    assert res.n_psi < 4.0
