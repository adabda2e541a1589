import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from monoqkd.hv_adversary import (
    CANONICAL_SETTING,
    ChshSetting,
    HVEnsemble,
    HVStrategy,
    LocalityClass,
    Side,
    aligned_local_strategies,
    all_local_strategies,
    build_local,
    build_pr_nonlocal,
    check_constraints,
    chsh_value,
    classify,
    critical_ensemble,
    ensemble_chsh,
    is_pi2_periodic,
    local_only_ensemble,
    min_nonlocal_fraction,
    periodic_sign_functions,
    singlet_chsh,
)
from monoqkd.quantum_core import GRID_SIZE

signs = st.sampled_from((1, -1))
sign_fns = st.lists(signs, min_size=GRID_SIZE, max_size=GRID_SIZE)
sides = st.sampled_from((Side.A, Side.B))


def test_canonical_setting_singlet_value():
    assert singlet_chsh() == pytest.approx(-2 * math.sqrt(2), abs=1e-12)


def test_local_example_t_all_plus():
    s = build_local([1, 1, 1, 1])
    expected_col = [1, 1, 1, 1, -1, -1, -1, -1, 1]
    for b in range(GRID_SIZE):
        assert s.wa[:, b].tolist() == expected_col
    for a in range(GRID_SIZE):
        assert s.wb[a, :].tolist() == [-x for x in expected_col]


def test_sixteen_local_strategies():
    locs = all_local_strategies()
    assert len(set(locs)) == 16
    for s in locs:
        assert check_constraints(s) == []
        assert classify(s) is LocalityClass.LOCAL
        assert chsh_value(s) in (-2, 2)
    assert len(aligned_local_strategies()) == 8


def test_no_other_local_strategy_passes():
    # A local strategy is wa(a,b) = f(a), wb(a,b) = g(b).  Anticorrelation on
    # the diagonal forces g = -f, leaving the 2**9 choices of f to scan.
    passing = set()
    for f in itertools.product((1, -1), repeat=GRID_SIZE):
        f = np.array(f)
        s = HVStrategy("cand", np.repeat(f[:, None], 9, 1), np.repeat(-f[None, :], 9, 0))
        if not check_constraints(s):
            passing.add(s)
    assert passing == set(all_local_strategies())

    rng = np.random.default_rng(3)
    for _ in range(500):
        f, g = rng.choice((1, -1), size=(2, GRID_SIZE))
        if np.array_equal(g, -f):
            continue
        s = HVStrategy("cand", np.repeat(f[:, None], 9, 1), np.repeat(g[None, :], 9, 0))
        assert any(v.identity == "same_basis_anticorrelation" for v in check_constraints(s))


def test_constant_strategy_violates_at_diagonal():
    s = HVStrategy("const", np.ones((9, 9)), np.ones((9, 9)))
    v = check_constraints(s)
    assert any(x.identity == "same_basis_anticorrelation" and x.a == x.b == 0 for x in v)


def test_all_pr_parameter_choices_pass():
    for eps in (1, -1):
        for s in itertools.product((1, -1), repeat=GRID_SIZE):
            for side in Side:
                st_ = build_pr_nonlocal(eps, s, side)
                assert check_constraints(st_) == []
                assert classify(st_) is LocalityClass.NONLOCAL
                assert chsh_value(st_) == -4


def test_pr_examples():
    s = build_pr_nonlocal(1, [1] * 9, Side.A)
    pairs = [(a, b) for (a, b), _ in CANONICAL_SETTING.cells()]
    for a, b in pairs:
        assert s.wa[a, b] * s.wb[a, b] == np.sign(-math.cos(2 * (a - b) * math.pi / 8))
    # tie-break alternation at the cos-zero pair
    assert s.wa[2, 0] == 1
    assert s.wa[2, 4] == -1


def test_pr_rejects_partial_s():
    with pytest.raises(ValueError):
        build_pr_nonlocal(1, {k: 1 for k in range(8)})
    with pytest.raises(ValueError):
        build_pr_nonlocal(1, [1] * 8)
    with pytest.raises(ValueError):
        build_pr_nonlocal(0, [1] * 9)


@given(signs, sign_fns, sides)
def test_sign_change_identity_for_constructed(eps, s, side):
    strat = build_pr_nonlocal(eps, s, side)
    for a in range(9):
        for b in range(5):
            assert strat.wa[a, b] * strat.wa[a, b + 4] == -strat.wb[a, b] * strat.wb[a, b + 4]


@pytest.mark.parametrize("side", list(Side))
def test_pr_blindness_needs_periodic_s(side):
    """The designated non-local side flips with the other party's pi/2 shift
    exactly when s is pi/2-periodic."""
    for eps in (1, -1):
        for s in itertools.product((1, -1), repeat=GRID_SIZE):
            strat = build_pr_nonlocal(eps, s, side)
            for x in range(9):
                for y in range(5):
                    if side is Side.A:
                        flips = strat.wa[x, y] != strat.wa[x, y + 4]
                    else:
                        flips = strat.wb[y, x] != strat.wb[y + 4, x]
                    assert flips == (s[y] == s[y + 4])
    assert len(periodic_sign_functions()) == 16
    assert all(is_pi2_periodic(s) for s in periodic_sign_functions())


def test_classify_one_sided_dependence():
    # Alice local, Bob's answer depends on a: still non-local.
    base = build_local([1, -1, 1, 1])
    wb = base.wb.copy()
    wa = base.wa.copy()
    # side-B PR strategy has wa local and wb depending on a
    s = build_pr_nonlocal(1, [1] * 9, Side.B)
    assert np.all(s.wa == s.wa[:, :1])
    assert classify(s) is LocalityClass.NONLOCAL
    assert classify(HVStrategy("x", wa, wb)) is LocalityClass.LOCAL


@given(st.integers(0, 8), st.integers(0, 8), st.booleans())
def test_fault_injection_detected(a, b, which):
    s = build_pr_nonlocal(1, [1] * 9, Side.A)
    wa, wb = s.wa.copy(), s.wb.copy()
    (wa if which else wb)[a, b] *= -1
    v = check_constraints(HVStrategy("tampered", wa, wb))
    assert v
    assert any((x.a, x.b) == (a, b) or (x.a, x.b) in {(a, b - 4), (a - 4, b)} for x in v)


def test_min_nonlocal_fraction():
    assert min_nonlocal_fraction(2 * math.sqrt(2)) == pytest.approx(math.sqrt(2) - 1, abs=1e-12)
    assert min_nonlocal_fraction(2) == 0
    assert min_nonlocal_fraction(4) == 1
    for bad in (1.9, 4.1):
        with pytest.raises(ValueError):
            min_nonlocal_fraction(bad)


@given(st.floats(2, 4), st.floats(2, 4))
def test_min_nonlocal_fraction_monotone(x, y):
    if x < y:
        assert min_nonlocal_fraction(x) < min_nonlocal_fraction(y)


def test_critical_ensemble(crit):
    assert crit.nonlocal_weight() == pytest.approx(math.sqrt(2) - 1, abs=1e-12)
    assert ensemble_chsh(crit) == pytest.approx(-2 * math.sqrt(2), abs=1e-12)
    assert math.fsum(crit.weights) == pytest.approx(1, abs=1e-12)
    side_weight = {"A": 0.0, "B": 0.0}
    for s, w in zip(crit.strategies, crit.weights):
        assert check_constraints(s) == []
        if classify(s) is LocalityClass.LOCAL:
            assert chsh_value(s) == -2
        else:
            side_weight[s.lambda_id.split(":")[1]] += w
    assert side_weight["A"] == pytest.approx(side_weight["B"], abs=1e-15)


def test_critical_ensemble_sampled(rng):
    ens = critical_ensemble(rng, n_per_side=3)
    assert len(ens) == 3 + 3 + 8
    assert ensemble_chsh(ens) == pytest.approx(-2 * math.sqrt(2), abs=1e-12)


def test_critical_ensemble_rejects_misaligned_parts():
    plus_two = [s for s in all_local_strategies() if chsh_value(s) == 2]
    with pytest.raises(ValueError):
        critical_ensemble(local=plus_two)


def test_all_local_ensembles_stay_at_classical_bound():
    assert ensemble_chsh(local_only_ensemble()) == -2
    assert ensemble_chsh(HVEnsemble.uniform(all_local_strategies())) == 0
    crit = critical_ensemble()
    local_part = [(s, w) for s, w in zip(crit.strategies, crit.weights) if classify(s) is LocalityClass.LOCAL]
    total = math.fsum(w for _, w in local_part)
    renorm = HVEnsemble(tuple(s for s, _ in local_part), tuple(w / total for _, w in local_part))
    assert abs(ensemble_chsh(renorm)) == 2


def test_ensemble_validation():
    s = build_local([1, 1, 1, 1])
    with pytest.raises(ValueError):
        HVEnsemble((s,), (0.9,))
    with pytest.raises(ValueError):
        HVEnsemble((s, s), (1.5, -0.5))
    with pytest.raises(ValueError):
        HVEnsemble((HVStrategy("c", np.ones((9, 9)), np.ones((9, 9))),), (1.0,))


def test_chsh_setting_validation():
    with pytest.raises(ValueError):
        ChshSetting(0, 2, 1, 9)
    with pytest.raises(ValueError):
        ChshSetting(0, 2, 1, 3, (1, 1, 0, 1))


def test_strategy_tables_are_read_only():
    s = build_local([1, 1, 1, 1])
    with pytest.raises(ValueError):
        s.wa[0, 0] = -1
