import math

import numpy as np
import pytest

import seqopt as so
from seqopt.histories import state_space


@pytest.fixture
def channel():
    return so.iid_problem(
        [[0.7, 0.3], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.01
    )


DELTA = math.log(0.7 / 0.3)  # per-symbol log-LR step on this channel


def test_llr_increments_hand_value(channel):
    inc = so.llr_increments(channel)
    assert inc == pytest.approx([-DELTA, DELTA], abs=1e-14)


def test_llr_by_state_counts(channel):
    space = state_space(channel, "counts")
    llr = so.llr_by_state(channel, space, 2)
    values = {space.label(2, i): llr[i] for i in range(space.n_states(2))}
    assert values["0|2"] == pytest.approx(2 * DELTA, abs=1e-13)
    assert values["1|1"] == pytest.approx(0.0, abs=1e-13)
    assert values["2|0"] == pytest.approx(-2 * DELTA, abs=1e-13)


def test_rule_stops_when_llr_leaves_interval(channel):
    spec = so.SprtSpec(a_upper=3.0, b_lower=-3.0, cap=6)
    rule, decision = so.sprt_rule(channel, spec)
    space = state_space(channel, "counts")
    # |llr| at stage 3 peaks at 3 * 0.847 = 2.54 < 3: no stop yet
    for n in (1, 2, 3):
        assert np.all(rule.at(n) == 0.0)
    # four same-symbol observations reach 3.39 >= 3
    llr4 = so.llr_by_state(channel, space, 4)
    assert np.array_equal(rule.at(4), (np.abs(llr4) >= 3.0).astype(float))
    # threshold stops decide the side they crossed; unstopped states sit on
    # their proximity side of the midpoint (here 0) in case the cap hits them
    stopped = np.abs(llr4) >= 3.0
    assert np.array_equal(decision.at(4)[stopped], (llr4[stopped] >= 3.0).astype(int))
    assert np.array_equal(decision.at(4), (llr4 >= 0.0).astype(int))


def test_operating_characteristics_symmetric(channel):
    spec = so.SprtSpec(a_upper=math.log(3.0), b_lower=-math.log(3.0), cap=100)
    oc = so.sprt_operating_characteristics(channel, spec)
    assert oc.alpha == pytest.approx(oc.beta, abs=1e-12)
    assert oc.e_tau[0] == pytest.approx(oc.e_tau[1], abs=1e-9)
    assert oc.tail_theta == pytest.approx([0.0, 0.0], abs=1e-9)
    # one step of the log-LR walk crosses log 3, so the test can stop at once
    assert oc.e_tau[0] >= 1.0


def test_single_step_thresholds_give_one_observation(channel):
    spec = so.SprtSpec(a_upper=0.5, b_lower=-0.5, cap=10)
    oc = so.sprt_operating_characteristics(channel, spec)
    assert oc.e_tau == pytest.approx([1.0, 1.0], abs=1e-12)
    assert oc.alpha == pytest.approx(0.3, abs=1e-12)
    assert oc.beta == pytest.approx(0.3, abs=1e-12)


def test_wider_thresholds_reduce_errors_and_raise_sample_size(channel):
    specs = [
        so.SprtSpec(a_upper=a, b_lower=-a, cap=150) for a in (1.0, 2.0, 3.0)
    ]
    ocs = [so.sprt_operating_characteristics(channel, s) for s in specs]
    alphas = [oc.alpha for oc in ocs]
    taus = [oc.e_tau[0] for oc in ocs]
    assert alphas[0] > alphas[1] > alphas[2]
    assert taus[0] < taus[1] < taus[2]


def test_conservative_matching_meets_targets(channel):
    spec = so.match_sprt_errors(channel, 0.05, 0.05, cap=150, conservative=True)
    oc = so.sprt_operating_characteristics(channel, spec)
    assert oc.alpha <= 0.05 + 1e-12
    assert oc.beta <= 0.05 + 1e-12


def test_conservative_matching_loose_targets_stop_immediately(channel):
    spec = so.match_sprt_errors(channel, 0.4, 0.4, cap=50, conservative=True)
    oc = so.sprt_operating_characteristics(channel, spec)
    assert oc.alpha == pytest.approx(0.3, abs=1e-9)
    assert oc.e_tau[0] == pytest.approx(1.0, abs=1e-9)


def test_unreachable_targets_raise(channel):
    with pytest.raises(so.UnreachableTargetsError) as exc:
        so.match_sprt_errors(channel, 1e-6, 1e-6, cap=5, conservative=True)
    err = exc.value
    assert err.achieved is not None


def test_oc_agrees_with_simulation(channel):
    spec = so.SprtSpec(a_upper=math.log(9.0), b_lower=-math.log(9.0), cap=60)
    oc = so.sprt_operating_characteristics(channel, spec)
    rule, decision = so.sprt_rule(channel, spec)
    capped = so.truncate_rule(rule, spec.cap, state_space(channel, "counts"))
    res = so.simulate(
        channel, capped,
        so.SimConfig(replications=30000, seed=77, cap=60, theta_mode=0),
        decision=decision,
    )
    assert abs(res.tau_mean - oc.e_tau[0]) <= 4 * res.tau_se
    wrong = res.decision_freq[1]  # deciding the upper hypothesis under the lower
    se = max(res.decision_freq_se[1], 1e-9)
    assert abs(wrong - oc.alpha) <= 4 * se


def test_continuation_is_interval_for_sprt(channel):
    spec = so.SprtSpec(a_upper=3.0, b_lower=-3.0, cap=8)
    rule, _ = so.sprt_rule(channel, spec)
    capped = so.truncate_rule(rule, 8, state_space(channel, "counts"))
    assert so.continuation_is_interval(channel, capped)


def test_interval_check_catches_hole(channel):
    spec = so.SprtSpec(a_upper=3.0, b_lower=-3.0, cap=6)
    rule, _ = so.sprt_rule(channel, spec)
    space = state_space(channel, "counts")
    capped = so.truncate_rule(rule, 6, space)
    # stopping on a balanced sample splits the continuation region in two
    middle = space.index_of(4, (2, 2))
    holed = capped.with_prob(4, middle, 1.0)
    assert not so.continuation_is_interval(channel, holed)


def test_sprt_requires_iid():
    def kernel(theta, hist):
        return (0.8, 0.2) if theta == 0 else (0.3, 0.7)

    from seqopt.model import ObservationModel

    p = so.Problem(
        params=so.ParameterSpace(("a", "b")),
        obs=ObservationModel(alphabet_size=2, kind="dependent", kernel=kernel, horizon=4),
        loss=so.LossSpec(("d1", "d2"), so.zero_one_loss(2)),
        priors=so.Priors(np.array([0.5, 0.5]), np.array([0.5, 0.5])),
        cost=so.CostSpec(0.02),
    )
    with pytest.raises(so.SeqOptError):
        so.sprt_rule(p, so.SprtSpec(a_upper=1.0, b_lower=-1.0, cap=5))


def test_bad_thresholds_rejected(channel):
    with pytest.raises(so.SeqOptError):
        so.sprt_rule(channel, so.SprtSpec(a_upper=-1.0, b_lower=1.0, cap=5))
