import numpy as np
import pytest

import seqopt as so
from seqopt.model import ObservationModel

from conftest import random_instance
from oracle import joint_prob, mixture


def test_valid_instance_passes(instance_b):
    so.validate_problem(instance_b)


def test_validation_collects_all_violations():
    p = so.Problem(
        params=so.ParameterSpace(("a", "b")),
        obs=ObservationModel(alphabet_size=2, iid_pmf=np.array([[0.9, 0.2], [0.3, 0.7]])),
        loss=so.LossSpec(("d1", "d2"), np.array([[0.0, -1.0], [1.0, 0.0]])),
        priors=so.Priors(np.array([0.6, 0.6]), np.array([0.5, 0.5])),
        cost=so.CostSpec(0.02),
    )
    with pytest.raises(so.InvalidProblemError) as exc:
        so.validate_problem(p)
    msgs = exc.value.errors
    assert any("pmf" in m for m in msgs)
    assert any("negative loss" in m for m in msgs)
    assert any("pi1" in m for m in msgs)
    assert len(msgs) >= 3


def test_validation_rejects_overlapping_groups():
    p = so.iid_problem(
        [[0.8, 0.2], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.02
    )
    from dataclasses import replace

    bad = replace(p, constraints=so.ConstraintSpec(((0,), (0, 1)), (0.1, 0.1)))
    with pytest.raises(so.InvalidProblemError, match="overlap"):
        so.validate_problem(bad)


def test_joint_density_empty_history_is_one(instance_b):
    assert so.joint_density(instance_b, 0, ()) == 1.0
    assert so.joint_density(instance_b, 1, ()) == 1.0


def test_joint_density_matches_reference(instance_b):
    pmf = [[0.8, 0.2], [0.3, 0.7]]
    for hist in [(0,), (1,), (0, 1), (1, 1, 0), (0, 0, 0, 1)]:
        for t in range(2):
            assert so.joint_density(instance_b, t, hist) == pytest.approx(
                joint_prob(pmf, t, hist), abs=1e-15
            )


def test_joint_density_rejects_bad_symbol(instance_b):
    with pytest.raises(so.SeqOptError):
        so.joint_density(instance_b, 0, (2,))


def test_densities_sum_to_one_over_histories():
    rng = np.random.default_rng(7)
    p, raw = random_instance(rng, m=3)
    from itertools import product

    for n in range(1, 5):
        for t in range(3):
            total = sum(
                so.joint_density(p, t, h) for h in product(range(2), repeat=n)
            )
            assert total == pytest.approx(1.0, abs=1e-12)


def test_mixture_density_is_prior_average(instance_b):
    pmf = [[0.8, 0.2], [0.3, 0.7]]
    for hist in [(1,), (0, 1), (1, 1, 1)]:
        assert so.mixture_density(instance_b, hist) == pytest.approx(
            mixture(pmf, [0.5, 0.5], hist), abs=1e-15
        )
        assert so.mixture_density(instance_b, hist, prior="pi1") == pytest.approx(
            mixture(pmf, [0.5, 0.5], hist), abs=1e-15
        )


def test_dependent_model_chain_rule():
    # After a 1 the next symbol is 1 with certainty under theta b.
    def kernel_b(theta, hist):
        if theta == 0:
            return (0.8, 0.2)
        if hist and hist[-1] == 1:
            return (0.0, 1.0)
        return (0.8, 0.2)

    p = so.Problem(
        params=so.ParameterSpace(("a", "b")),
        obs=ObservationModel(
            alphabet_size=2, kind="dependent", kernel=kernel_b, horizon=4
        ),
        loss=so.LossSpec(("d1", "d2"), so.zero_one_loss(2)),
        priors=so.Priors(np.array([0.5, 0.5]), np.array([0.5, 0.5])),
        cost=so.CostSpec(0.02),
    )
    so.validate_problem(p)
    assert so.joint_density(p, 1, (1, 1)) == pytest.approx(0.2, abs=1e-15)
    assert so.joint_density(p, 1, (1, 0)) == 0.0
    assert so.joint_density(p, 0, (1, 1)) == pytest.approx(0.04, abs=1e-15)


def test_dependent_model_domain_error_past_horizon():
    def kernel(theta, hist):
        return (0.5, 0.5)

    p = so.Problem(
        params=so.ParameterSpace(("a", "b")),
        obs=ObservationModel(alphabet_size=2, kind="dependent", kernel=kernel, horizon=2),
        loss=so.LossSpec(("d1", "d2"), so.zero_one_loss(2)),
        priors=so.Priors(np.array([0.5, 0.5]), np.array([0.5, 0.5])),
        cost=so.CostSpec(0.02),
    )
    with pytest.raises(so.KernelDomainError):
        p.obs.conditional_pmf(0, (0, 1, 0))


def test_zero_one_loss_shape():
    w = so.zero_one_loss(3)
    assert w.shape == (3, 3)
    assert np.trace(w) == 0.0
    assert w.sum() == 6.0


def test_iid_problem_rejects_bad_pmf():
    with pytest.raises(so.InvalidProblemError):
        so.iid_problem([[0.9, 0.2], [0.3, 0.7]], so.zero_one_loss(2), [0.5, 0.5], [0.5, 0.5], 0.02)


def test_exchangeability_of_joint_density(instance_b):
    a = so.joint_density(instance_b, 1, (1, 0, 1, 1))
    b = so.joint_density(instance_b, 1, (1, 1, 1, 0))
    assert a == pytest.approx(b, abs=1e-15)
