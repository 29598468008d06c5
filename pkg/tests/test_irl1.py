import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsparse.core import ProblemInstance, lambda_max, objective
from gsparse.data import SyntheticSpec, generate_synthetic
from gsparse.irl1 import (
    Irl1Config,
    decay_epsilon,
    init_x0,
    initial_epsilon,
    run,
    update_weights,
)
from gsparse.subsolver import subproblem_objective

from conftest import identity_instance, random_instance


def test_update_weights_examples():
    from gsparse.core import GroupPartition

    part = GroupPartition.contiguous_blocks(2, 2)
    assert update_weights(np.array([3.0, 0.0]), [1.0], 0.5, 2, part)[0] == pytest.approx(0.25)
    assert update_weights(np.zeros(2), [0.25], 0.5, 2, part)[0] == pytest.approx(1.0)
    assert update_weights(np.zeros(2), [1.0], 2 / 3, 2, part)[0] == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        update_weights(np.zeros(2), [0.0], 0.5, 2, part)


def test_initial_epsilon_examples():
    assert initial_epsilon(1.0, 0.5, 0.01) == pytest.approx(1e-4)
    assert initial_epsilon(1.0, 0.5, 0.5) == pytest.approx(0.25)
    assert initial_epsilon(3.0, 0.6, 3.0 / 1.2) == pytest.approx(1.0)


def test_decay_epsilon():
    assert decay_epsilon(np.array([1.0]), 0.9)[0] == pytest.approx(0.9)
    eps = np.array([2.0])
    for _ in range(30):
        eps = decay_epsilon(eps, 0.9)
    assert eps[0] == pytest.approx(2.0 * 0.9 ** 30) and eps[0] > 0
    with pytest.raises(ValueError):
        decay_epsilon(eps, 1.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(0.01, 0.99), st.integers(1, 200))
def test_epsilon_stays_positive_and_monotone(eps0, mu, k):
    eps = np.array([eps0])
    for _ in range(k):
        nxt = decay_epsilon(eps, mu)
        assert 0 < nxt[0] <= max(mu * eps[0], np.finfo(float).tiny)
        eps = nxt


def test_config_validation():
    for kwargs in ({"mu": 1.0}, {"mu": 0.0}, {"strategy": "x"}, {"init": "x"},
                   {"init": "given"}, {"eps0": 0.0}, {"max_outer": 0}):
        with pytest.raises(ValueError):
            Irl1Config(**kwargs)


def test_init_x0():
    inst = random_instance(20, 30, 3, seed=2, lam=0.05)
    assert np.array_equal(init_x0(inst, Irl1Config(init_budget=0)), np.zeros(30))
    x0 = init_x0(inst, Irl1Config(init_budget=50))
    lam = np.full(inst.d, inst.lam)
    assert subproblem_objective(inst, lam, x0) <= subproblem_objective(inst, lam, np.zeros(30))

    y = np.array([3.0, 4.0, 0.1, 0.2])
    ident = identity_instance(y, 2, lam=1.0)
    assert np.allclose(init_x0(ident, Irl1Config(init_budget=1)), [2.4, 3.2, 0, 0], atol=1e-12)


def test_zero_response_converges_at_once():
    inst = random_instance(10, 12, 3)
    inst = ProblemInstance(inst.A, np.zeros(10), inst.partition, 0.1, 0.5)
    x, rep = run(inst)
    assert rep.converged and rep.outer_iterations == 1
    assert np.array_equal(x, np.zeros(12))


def test_identity_design_agrees_with_reference():
    y = np.array([3.0, -1.0, 0.2, 0.1, 2.0, 2.5, -0.05, 0.3])
    inst = identity_instance(y, 2)
    inst = inst.with_params(lam=0.1 * lambda_max(inst))
    x_ref, _ = run(inst, Irl1Config(strategy="none"))
    for strategy in ("proposed", "strong"):
        x, rep = run(inst, Irl1Config(strategy=strategy))
        assert rep.converged
        assert np.linalg.norm(x - x_ref) <= 1e-6 * np.linalg.norm(x_ref)


def test_support_recovery_on_synthetic():
    A, y, x_true, part = generate_synthetic(SyntheticSpec(m=100, n=400, k_active=5, seed=0))
    inst = ProblemInstance(A, y, part, 1.0, 0.5, 2)
    inst = inst.with_params(lam=0.01 * lambda_max(inst))
    x, rep = run(inst)
    assert rep.converged
    assert np.array_equal(part.norms(x, 2) > 0, part.norms(x_true, 2) > 0)


@pytest.mark.parametrize("p,q", [(0.5, 2), (0.5, 1), (2 / 3, 2)])
def test_report_bookkeeping(p, q):
    A, y, _, part = generate_synthetic(SyntheticSpec(m=60, n=200, k_active=4, seed=3))
    inst = ProblemInstance(A, y, part, 1.0, p, q)
    inst = inst.with_params(lam=0.02 * lambda_max(inst))
    x, rep = run(inst)
    assert rep.outer_iterations == len(rep.records)
    assert rep.solve_time_s == pytest.approx(sum(r.time_s for r in rep.records))
    assert rep.total_time_s == pytest.approx(rep.init_time_s + rep.solve_time_s)
    assert rep.objective == pytest.approx(objective(inst, x))
    assert rep.objective == pytest.approx(rep.records[-1].objective)
    assert rep.final_scrlist == rep.records[-1].scrlist
    assert rep.nonzero_groups == int(np.count_nonzero(part.norms(x, 2)))
    d = rep.to_dict()
    assert "scrlist" not in d["records"][0]
    assert "scrlist" in rep.to_dict(include_sets=True)["records"][0]
    rows = rep.csv_rows()
    assert len(rows) == rep.outer_iterations and len(rows[0]) == 6
    # perturbed objective never increases between outer iterations
    for r in rep.records:
        assert r.perturbed_after <= r.perturbed_before + 10 * rep.settings["inner_tol"]


def test_identify_flag_controls_stopping():
    A, y, _, part = generate_synthetic(SyntheticSpec(m=100, n=400, k_active=5, seed=5))
    inst = ProblemInstance(A, y, part, 1.0, 0.5, 2)
    inst = inst.with_params(lam=0.01 * lambda_max(inst))
    _, strict = run(inst, Irl1Config(identify=True))
    _, bare = run(inst, Irl1Config(identify=False))
    assert bare.converged and strict.converged
    assert strict.outer_iterations >= bare.outer_iterations
    c = inst.correlations
    last = strict.records[-1]
    assert set(last.scrlist) == set(last.zero_groups)


def test_max_outer_reports_not_converged():
    inst = random_instance(30, 60, 3, seed=1, lam=0.01)
    _, rep = run(inst, Irl1Config(max_outer=1, outer_tol=1e-300))
    assert not rep.converged and rep.outer_iterations == 1
