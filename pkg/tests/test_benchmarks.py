import numpy as np
import pytest

from helpers import random_beamformers, random_channels, scalar_link_channels, tiny_params
from irsmec.bcd import initial_decision
from irsmec.benchmarks import (SaConfig, _wmmse_state, bcd_mse_solve, bcd_sa_solve, no_irs_solve,
                               rand_phase_solve, sa_solve, wmmse_comm_step, wmmse_update_U,
                               wmmse_update_WE)
from irsmec.mec import oracle_grid, solve_mec
from irsmec.metrics import (Decision, constraint_violations, effective_channel, interference_cov,
                            rates_logdet, total_cost)
from irsmec.scenario import default_params, generate_channels


def test_wmmse_scalar_arithmetic():
    hb = np.ones((1, 2, 1, 1), complex)
    F = np.zeros((1, 2, 1), complex)
    F[0, 0] = 1.0
    F[0, 1] = np.sqrt(1 - 0.0)  # interferer with unit power so that J = 1 + noise 0
    # one interferer of power 1 and no noise: J = 1
    U = wmmse_update_U(hb, F, 0.0, 0, 0)
    assert U[0] == pytest.approx(0.5)
    E, W = wmmse_update_WE(hb, F, U, 0.0, 0, 0)
    assert E == pytest.approx(0.5) and W == pytest.approx(2.0)


def test_wmmse_zero_beamformer():
    hb = np.ones((1, 1, 1, 1), complex)
    F = np.zeros((1, 1, 1), complex)
    U = wmmse_update_U(hb, F, 1.0, 0, 0)
    assert U[0] == 0
    E, W = wmmse_update_WE(hb, F, U, 1.0, 0, 0)
    assert E == 1.0 and W == 1.0


def _random(seed):
    rng = np.random.default_rng(seed)
    ch = random_channels(rng, 2, 2, 3, 3, 2)
    hb = effective_channel(ch, rng.uniform(0, 6, 3))
    return rng, hb, random_beamformers(rng, 2, 2, 2)


def test_mmse_receiver_minimizes_error():
    rng, hb, F = _random(0)
    for q in range(2):
        for k in range(2):
            U = wmmse_update_U(hb, F, 0.1, q, k)
            E0, _ = wmmse_update_WE(hb, F, U, 0.1, q, k)
            for _ in range(20):
                d = 1e-4 * (rng.standard_normal(U.shape) + 1j * rng.standard_normal(U.shape))
                assert wmmse_update_WE(hb, F, U + d, 0.1, q, k)[0] >= E0 - 1e-15


def test_log_weight_equals_rate():
    for seed in range(10):
        _, hb, F = _random(seed)
        R = rates_logdet(hb, F, 0.1)
        st = _wmmse_state(hb, F, 0.1)
        np.testing.assert_allclose(np.log(st.W), R, atol=1e-9)
        for q in range(2):
            for k in range(2):
                U = wmmse_update_U(hb, F, 0.1, q, k)
                np.testing.assert_allclose(U, st.U[q, k], atol=1e-12)
                E, W = wmmse_update_WE(hb, F, U, 0.1, q, k)
                assert W == 1.0 / E
                assert np.log(W) == pytest.approx(R[q, k], abs=1e-9)


def test_sa_zero_budget():
    p = default_params(num_users=2, irs_elements=4, seed=0)
    ch = generate_channels(p, seed=0)
    dec, tr = sa_solve(p, ch, SaConfig(total_evals=0, seed=0))
    init = initial_decision(p, 0)
    np.testing.assert_array_equal(dec.beamformers, init.beamformers)
    assert tr.initial_cost == pytest.approx(total_cost(init, ch, p).total)
    with pytest.raises(ValueError):
        SaConfig(cooling=1.5)


def test_sa_greedy_limit_and_determinism():
    p = default_params(num_users=2, irs_elements=4, seed=1)
    ch = generate_channels(p, seed=1)
    cfg = SaConfig(initial_temp=1e-12, total_evals=300, seed=3)
    dec, tr = sa_solve(p, ch, cfg)
    costs = tr.costs
    assert np.all(np.diff(costs) <= 0)
    assert costs[-1] <= tr.initial_cost
    dec2, tr2 = sa_solve(p, ch, cfg)
    np.testing.assert_array_equal(costs, tr2.costs)
    np.testing.assert_array_equal(dec.offload, dec2.offload)
    assert constraint_violations(dec, p) == []


def test_sa_tiny_instance_near_composite_optimum():
    p = tiny_params(M=1)
    ch = scalar_link_channels()
    # single link: the cost falls with the rate, so the optimum is the MEC optimum at rate ln 5
    ref = oracle_grid(p, np.array([[np.log(5)]]))
    finals = []
    for seed in range(10):
        dec, tr = sa_solve(p, ch, SaConfig(seed=seed))
        finals.append(tr.costs[-1])
    assert np.all(np.array(finals) <= ref * 1.02)


def test_bcd_sa_degenerate_budget_equals_mec_step():
    p = default_params(num_users=2, irs_elements=4, seed=2)
    ch = generate_channels(p, seed=2)
    dec, tr = bcd_sa_solve(p, ch, SaConfig(total_evals=0, seed=2), N=1, seed=2)
    init = initial_decision(p, 2)
    R = rates_logdet(effective_channel(ch, init.phases), init.beamformers, p.noise_var)
    sol = solve_mec(p, R, rel_gap=1e-3, node_budget=30, warm_start=(init.offload, init.edge_cpu))
    assert tr.iterations == 1
    assert tr.costs[0] == pytest.approx(sol.objective, rel=1e-12)


def test_bcd_sa_all_local():
    # offloading never pays: transmission is very expensive
    p = default_params(num_users=2, irs_elements=4, seed=3, tx_power=1e6)
    ch = generate_channels(p, seed=3)
    dec, tr = bcd_sa_solve(p, ch, SaConfig(total_evals=50, seed=3), N=3, seed=3)
    full_local = float(np.sum(p.user_weights * (p.cycles_per_bit * p.local_energy_per_cycle * p.task_bits
                                                + p.tradeoff * p.task_bits * p.cycles_per_bit / p.local_cpu)))
    assert np.all(dec.offload == 0)
    assert tr.costs[-1] == pytest.approx(full_local, rel=1e-12)


def test_wmmse_noop_without_offload():
    p = default_params(num_users=2, irs_elements=4, seed=4)
    ch = generate_channels(p, seed=4)
    dec = initial_decision(p, 4).replace(offload=np.zeros((2, 2)))
    out, costs = wmmse_comm_step(dec, ch, p)
    np.testing.assert_array_equal(out.beamformers, dec.beamformers)
    assert costs == []


def test_wmmse_step_descends():
    for seed in range(3):
        p = default_params(num_users=3, irs_elements=16, seed=seed)
        ch = generate_channels(p, seed=seed)
        dec = initial_decision(p, seed)
        before = total_cost(dec, ch, p).total
        out, costs = wmmse_comm_step(dec, ch, p)
        assert total_cost(out, ch, p).total <= before + 1e-8
        assert np.all(np.diff([before] + costs) <= 1e-8)


def test_rand_phase_without_elements_equals_no_irs():
    p = default_params(num_users=2, irs_elements=0, seed=5)
    ch = generate_channels(p, seed=5)
    a, ta = rand_phase_solve(p, ch, N=5, seed=5)
    b, tb = no_irs_solve(p, ch, N=5, seed=5)
    np.testing.assert_array_equal(ta.costs, tb.costs)


def test_no_irs_ignores_irs_position():
    p = default_params(num_users=2, irs_elements=8, seed=6)
    ch = generate_channels(p, seed=6)
    p2 = p.with_(irs_position=np.array([50.0, 30.0, 5.0]))
    ch2 = generate_channels(p2, seed=6)
    _, t1 = no_irs_solve(p, ch, N=5, seed=6)
    _, t2 = no_irs_solve(p2, ch2, N=5, seed=6)
    np.testing.assert_array_equal(t1.costs, t2.costs)


def test_benchmarks_return_feasible_decisions():
    p = default_params(num_users=2, irs_elements=8, seed=7)
    ch = generate_channels(p, seed=7)
    runs = [bcd_mse_solve(p, ch, N=3, seed=7), rand_phase_solve(p, ch, N=3, seed=7),
            no_irs_solve(p, ch, N=3, seed=7), sa_solve(p, ch, SaConfig(total_evals=200, seed=7))]
    for dec, tr in runs:
        pp = p if dec.phases.size == p.M else p.with_(irs_elements=0)
        assert constraint_violations(dec, pp) == []
        assert np.all(np.diff(tr.costs) <= 1e-8)
