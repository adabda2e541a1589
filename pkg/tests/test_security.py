import math

import numpy as np
import pytest

from monoqkd.hv_adversary import (
    HVEnsemble,
    Side,
    aligned_local_strategies,
    all_local_strategies,
    build_local,
    build_pr_nonlocal,
    critical_ensemble,
    ensemble_chsh,
    passes_constraints,
    periodic_sign_functions,
)
from monoqkd.protocol import EnsembleSource, IdealSource, ProtocolConfig, run_protocol
from monoqkd.protocol.messages import Sender
from monoqkd.rng import RngStreams
from monoqkd.security import (
    P_THEORY,
    UNKNOWN,
    EveResults,
    EveRoundResult,
    EveRoundView,
    Known,
    Verdict,
    analyze,
    certainty_soundness_audit,
    empirical_certainty,
    eve_decode,
    eve_results_for_run,
    key_exposure,
    p_theory,
)

PERIODIC_S = (1, -1, 1, 1, 1, -1, 1, 1, 1)
ANTI_PERIODIC_S = (1, -1, 1, 1, -1, 1, -1, -1, 1)


def _run(ensemble, n_rounds, seed=3, **kw):
    cfg = ProtocolConfig(n_rounds=n_rounds, seed=seed, **kw)
    source = IdealSource() if ensemble is None else EnsembleSource(ensemble)
    return run_protocol(cfg, source, RngStreams(seed))


def test_verdict_shape():
    assert Known(1) == Verdict(True, 1)
    assert UNKNOWN.r is None
    with pytest.raises(ValueError):
        Verdict(True)
    with pytest.raises(ValueError):
        Verdict(False, 0)


def test_local_strategy_is_always_known():
    s = build_local((1, -1, -1, 1))
    for phi_a in range(5):
        for phi_b in range(5):
            if (phi_a - phi_b) % 4:
                continue
            for chosen in (Sender.ALICE, Sender.BOB):
                for c in (0, 4):
                    v = eve_decode(EveRoundView(s, phi_a, phi_b, chosen, c, m=1))
                    assert v.known


def test_pr_side_a_hides_alice_but_not_bob():
    s = build_pr_nonlocal(1, PERIODIC_S, Side.A)
    # Bob's answer depends only on his own angle: Eve reads it off.
    v = eve_decode(EveRoundView(s, 0, 0, Sender.BOB, 0, m=0))
    assert v == Known(0 ^ (1 if s.wb[0, 0] == -1 else 0))
    # Alice's answer flips with Bob's hidden c: Eve cannot tell.
    for phi in range(5):
        for c in (0, 4):
            assert eve_decode(EveRoundView(s, phi, phi, Sender.ALICE, c, m=0)) == UNKNOWN


def test_no_strategy_means_unknown():
    assert eve_decode(EveRoundView(None, 0, 0, Sender.ALICE, 0, 0)) == UNKNOWN


def test_known_verdicts_match_the_truth_exhaustively():
    """Against every local and every PR strategy, a Known verdict is always right."""
    strategies = list(all_local_strategies())
    for s in periodic_sign_functions()[:4]:
        for eps in (1, -1):
            for side in (Side.A, Side.B):
                strategies.append(build_pr_nonlocal(eps, s, side))
    for strat in strategies:
        for phi_a in range(5):
            for phi_b in range(5):
                if (phi_a - phi_b) % 4:
                    continue
                for ca in (0, 4):
                    for cb in (0, 4):
                        a, b = phi_a + ca, phi_b + cb
                        for chosen, c, w in ((Sender.ALICE, ca, strat.wa[a, b]), (Sender.BOB, cb, strat.wb[a, b])):
                            for r in (0, 1):
                                m = r ^ (1 if w == -1 else 0)
                                v = eve_decode(EveRoundView(strat, phi_a, phi_b, chosen, c, m))
                                if v.known:
                                    assert v.r == r, strat.lambda_id


def test_audit_flags_a_corrupted_verdict():
    good = [EveRoundResult(Known(1), 1, 0), EveRoundResult(UNKNOWN, 0, 1)]
    assert certainty_soundness_audit(good) == []
    bad = good + [EveRoundResult(Known(0), 1, 2)]
    flagged = certainty_soundness_audit(bad)
    assert [r.round_id for r in flagged] == [2]
    assert certainty_soundness_audit([]) == []

    cols = EveResults(np.arange(3), np.array([True, False, True]), np.array([1, 0, 0], np.uint8),
                      np.array([1, 0, 0], np.uint8), np.array([1, 0, 1], np.uint8))
    assert [r.round_id for r in certainty_soundness_audit(cols)] == [2]


def test_empirical_certainty_of_list_and_columns():
    rows = [EveRoundResult(Known(0), 0), EveRoundResult(UNKNOWN, 1), EveRoundResult(Known(1), 1),
            EveRoundResult(UNKNOWN, 0)]
    assert empirical_certainty(rows) == 0.5
    assert math.isnan(empirical_certainty([]))


def test_p_theory_values():
    assert P_THEORY == pytest.approx(0.79289321881, abs=1e-11)
    assert p_theory(1) == P_THEORY
    assert p_theory(20) == pytest.approx(0.00964482, abs=1e-8)
    assert p_theory(20) < 0.01
    ks = np.arange(1, 60)
    vals = np.array([p_theory(int(k)) for k in ks])
    assert np.all(np.diff(vals) < 0)
    for k in range(1, 50):
        assert p_theory(k) / p_theory(k + 10) > 10


def test_key_exposure_blocks():
    known = [True] * 4 + [True, False, True, True]
    r = [1, 0, 1, 1, 0, 0, 1, 0]
    guess = list(r)
    ex = key_exposure(known, guess, r, K=4)
    assert ex.n_blocks == 2
    assert ex.P_empirical == 0.5
    assert ex.eve_guess_rate == 1.0
    assert math.isnan(key_exposure(known[:3], guess[:3], r[:3], K=4).P_empirical)


def test_all_local_ensemble_is_fully_known():
    ens = HVEnsemble.uniform(aligned_local_strategies())
    run = _run(ens, 20_000, chsh_tolerance=2.0, K=4)
    assert not run.aborted
    rep = analyze(run, np.random.default_rng(0))
    assert rep.p_empirical == 1.0
    assert rep.soundness_counterexamples == 0
    assert rep.P_empirical == 1.0
    assert rep.eve_guess_rate == 1.0


def test_pure_nonlocal_ensemble_is_known_half_the_time():
    members = [build_pr_nonlocal(e, s, side) for s in periodic_sign_functions() for e in (1, -1)
               for side in (Side.A, Side.B)]
    ens = HVEnsemble.uniform(members)
    assert ensemble_chsh(ens) == pytest.approx(-4.0)
    run = _run(ens, 200_000, chsh_tolerance=2.0)
    assert not run.aborted
    rep = analyze(run, np.random.default_rng(0))
    n = rep.n_key_rounds
    assert abs(rep.p_empirical - 0.5) < 4 * math.sqrt(0.25 / n)
    assert rep.soundness_counterexamples == 0


def test_without_lambda_channel_eve_only_guesses():
    run = _run(None, 200_000, K=20, chsh_tolerance=0.2)
    res = eve_results_for_run(run, np.random.default_rng(0))
    assert not res.known.any()
    rep = analyze(run, np.random.default_rng(0))
    d = rep.to_dict()
    assert "p_empirical" not in d and "P_empirical" not in d["key_blocks"]
    n = rep.n_blocks
    assert abs(rep.eve_guess_rate - 0.5) < 4 * math.sqrt(0.25 / n)


def test_critical_run_matches_theory(crit):
    run = _run(crit, 400_000, seed=5, K=5)
    assert not run.aborted
    rep = analyze(run, np.random.default_rng(1))
    n = rep.n_key_rounds
    assert abs(rep.p_empirical - P_THEORY) < 4 * math.sqrt(P_THEORY * (1 - P_THEORY) / n)
    assert rep.local_certainty == 1.0
    assert abs(rep.nonlocal_certainty - 0.5) < 0.02
    P = p_theory(5)
    assert abs(rep.P_empirical - P) < 4 * math.sqrt(P * (1 - P) / rep.n_blocks)
    # Eve's key-bit guess is right with probability (1 + P) / 2.
    assert abs(rep.eve_guess_rate - (1 + P) / 2) < 4 * math.sqrt(0.25 / rep.n_blocks)
    assert rep.soundness_counterexamples == 0


def test_anti_periodic_pr_strategies_defeat_the_checks():
    """Non-periodic ``s`` keeps CHSH at -4 and all identities, yet hides nothing."""
    members_a = [build_pr_nonlocal(e, ANTI_PERIODIC_S, Side.A) for e in (1, -1)]
    members_b = [build_pr_nonlocal(e, ANTI_PERIODIC_S, Side.B) for e in (1, -1)]
    assert all(passes_constraints(s) for s in members_a + members_b)
    ens = critical_ensemble(nonlocal_a=members_a, nonlocal_b=members_b)
    assert ensemble_chsh(ens) == pytest.approx(-2 * math.sqrt(2), abs=1e-12)
    run = _run(ens, 2_000_000, seed=1)
    assert not run.aborted, run.estimation.reasons
    rep = analyze(run, np.random.default_rng(0))
    assert rep.p_empirical == 1.0
    assert rep.soundness_counterexamples == 0
