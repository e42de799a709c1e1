import math

import numpy as np
import pytest

from oracles import effective_channel_loop, mode_skr
from thzqkd.channel import SystemConfig
from thzqkd.errors import InvalidArgument, ModelError
from thzqkd.experiments import (ExperimentConfig, Scenario, SweepSpec, format_degrees,
                                monte_carlo_stats, optimize_phase, phase_grid,
                                reference_phase_deg, run_pipeline, run_sweep, trial_seed,
                                worker_count)

SMALL = SystemConfig(N_T=8, N_R=8)


def small(**kw):
    return Scenario(SMALL, **({"K": 16, "distance": 10.0} | kw))


def test_monte_carlo_stats():
    assert monte_carlo_stats([5.0]) == (5.0, 0.0)
    assert monte_carlo_stats([1, 1, 1, 1]) == (1.0, 0.0)
    assert monte_carlo_stats([0, 2]) == (1.0, 1.0)
    with pytest.raises(InvalidArgument):
        monte_carlo_stats([])


def test_scenario_validation_and_with_value():
    sc = small()
    assert sc.lp == 8
    assert sc.with_value("d", 30).distance == 30
    assert sc.with_value("vp_db", 40).pilot().V_p == pytest.approx(1e4)
    assert sc.with_value("lp", 16).lp == 16
    assert sc.with_value("k", 25).ris().K_X == 5
    with pytest.raises(InvalidArgument, match="integers"):
        sc.with_value("lp", 16.5)
    with pytest.raises(InvalidArgument, match="unknown sweep variable"):
        sc.with_value("colour", 1)
    with pytest.raises(InvalidArgument):
        small(L_p=4)
    with pytest.raises(InvalidArgument):
        small(distance=0)
    with pytest.raises(InvalidArgument):
        ExperimentConfig(detector="photon")


def test_trial_seed_streams_differ():
    draws = {tuple(np.random.default_rng(trial_seed(0, p, t)).integers(0, 2**62, 2))
             for p in range(3) for t in range(3)}
    assert len(draws) == 9


def test_pipeline_deterministic():
    sc, exp = small(), ExperimentConfig(detector="both", seed=3)
    a, ea = run_pipeline(sc, exp)
    b, eb = run_pipeline(sc, exp)
    assert a["homodyne"].total_skr == b["homodyne"].total_skr
    np.testing.assert_array_equal(ea.H_ls, eb.H_ls)
    c, _ = run_pipeline(sc, exp, seed=4)
    assert c["homodyne"].total_skr != a["homodyne"].total_skr
    # both detectors share the estimate
    assert a["homodyne"].per_mode[0].beta == a["heterodyne"].per_mode[0].beta


def test_noiseless_matches_oracle_end_to_end():
    sc = small()
    chan = sc.channel()
    H = effective_channel_loop(chan.H_d, chan.H_g, chan.H_f, chan.phases)
    np.testing.assert_allclose(chan.H_ris, H, rtol=1e-12, atol=1e-18)
    reports, est = run_pipeline(sc, ExperimentConfig(noiseless=True, detector="both"))
    assert np.all(est.sigma2_ris < 1e-30)
    assert np.linalg.norm(est.H_ls - H) <= 1e-10 * np.linalg.norm(H)

    s = np.linalg.svd(H, compute_uv=False)
    betas = s[s > 1e-12 * s[0]] ** 2
    cfg = sc.system
    for det, d_m in (("homodyne", 1), ("heterodyne", 2)):
        per = [mode_skr(b, cfg.V_s, cfg.V_o, cfg.V_e, 0.0, cfg.nu_en, d_m, cfg.eta)
               for b in betas]
        ref = (1 - sc.lp / cfg.T_c) * sum(max(x, 0.0) for x in per)
        assert reports[det].total_skr == pytest.approx(ref, rel=1e-8)
        assert len(reports[det].per_mode) == betas.size


def test_noisy_estimate_has_positive_sigma():
    _, est = run_pipeline(small(L_p=16), ExperimentConfig(seed=1))
    assert np.all(est.sigma2_ris > 0)
    assert est.sigma2_ris.size == 8


def test_sweep_rows_ordered_and_complete():
    spec = SweepSpec("distance", (40.0, 10.0, 20.0), trials=3, detector="both")
    rows = run_sweep(spec, small())
    assert [(r.value, r.detector) for r in rows] == [
        (40.0, "homodyne"), (40.0, "heterodyne"), (10.0, "homodyne"),
        (10.0, "heterodyne"), (20.0, "homodyne"), (20.0, "heterodyne")]
    for r in rows:
        assert r.error == "" and r.trials == 3 and len(r.samples) == 3
        assert r.mean_skr == pytest.approx(np.mean(r.samples))
        assert r.distance == r.value


def test_sweep_matches_direct_pipeline():
    sc = small()
    spec = SweepSpec("distance", (10.0, 25.0), trials=2, seed=5)
    rows = run_sweep(spec, sc)
    for i, row in enumerate(rows):
        point = sc.with_value("distance", spec.values[i])
        direct = [run_pipeline(point, ExperimentConfig(seed=5), point=i, trial=t)[0]
                  ["homodyne"].total_skr for t in range(2)]
        assert list(row.samples) == direct


def test_sweep_thread_count_invariant(monkeypatch):
    spec = SweepSpec("ris_elements", (4, 9, 16, 25), trials=2, seed=2)
    out = []
    for n in ("1", "4"):
        monkeypatch.setenv("QKD_SIM_THREADS", n)
        out.append([r.as_record() for r in run_sweep(spec, small())])
    assert out[0] == out[1]
    monkeypatch.setenv("QKD_SIM_THREADS", "x")
    with pytest.raises(InvalidArgument):
        worker_count(3)


def test_sweep_error_row():
    # at 1 dB pilot power the noisy estimate has beta > 1
    rows = run_sweep(SweepSpec("vp_db", (60, 1), trials=1), small())
    assert rows[0].error == "" and rows[0].mean_skr > 0
    assert rows[1].error.startswith("TransmittanceViolation")
    assert math.isnan(rows[1].mean_skr) and math.isnan(rows[1].stderr_skr)
    rows = run_sweep(SweepSpec("lp", (8, 4), trials=1), small())
    assert rows[1].error.startswith("InvalidArgument")
    assert math.isnan(rows[1].mean_skr)


def test_crn_pairs_points():
    spec = SweepSpec("ris_phase", (0.0, 0.0), trials=2)
    plain = run_sweep(spec, small())
    crn = run_sweep(spec, small(), ExperimentConfig(crn=True))
    assert plain[0].samples != plain[1].samples
    assert crn[0].samples == crn[1].samples


def test_trials_are_independent_draws():
    spec = SweepSpec("distance", (10.0,), trials=6, seed=0)
    s = run_sweep(spec, small(L_p=16))[0].samples
    assert len(set(s)) == len(s)


def test_phase_grid():
    g = phase_grid(0.1)
    assert g.size == math.ceil(2 * math.pi / 0.1) == 63
    assert g[0] == -math.pi and g[-1] < math.pi
    np.testing.assert_allclose(np.diff(g), 0.1)
    assert phase_grid(7.0).tolist() == [-math.pi]
    with pytest.raises(InvalidArgument):
        phase_grid(0)


def test_format_degrees():
    assert format_degrees(-math.pi + 54 * 0.1) == "129.40°"
    assert format_degrees(0.0) == "0.00°"


def test_optimize_phase_matches_brute_force():
    sc, exp = small(K=4), ExperimentConfig(trials=2, seed=1)
    res = optimize_phase(sc, exp, grid_step=0.5)
    grid = phase_grid(0.5)
    brute = [np.mean([run_pipeline(sc.with_value("phi", p), exp, trial=t)[0]["homodyne"]
                      .total_skr for t in range(2)]) for p in grid]
    assert res.phi_opt == grid[int(np.argmax(brute))]
    np.testing.assert_allclose([m for _, m in res.curve], brute, rtol=1e-12)
    assert res.skr_at_opt == max(brute)


def test_optimize_phase_all_failed():
    bad = small(distance=0.001, V_p_db=1.0)
    with pytest.raises(ModelError):
        optimize_phase(bad, ExperimentConfig(trials=1), grid_step=3.0)


def test_reference_phase_lookup():
    assert reference_phase_deg(16, 60, 10) == 129.40
    assert reference_phase_deg(16, 60, 11) is None
    assert reference_phase_deg(16, 60.5, 10) is None
