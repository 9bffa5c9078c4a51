import itertools
import math

import numpy as np
import pytest

from segreg.errors import ContractError
from segreg.lattice import DigitConfig, DigitVector, lattice_range, project
from segreg.models import LinearModel, LossSpec, deceptive_instance
from segreg.refine import GridStage, RefinementConfig
from segreg.sampler import RegisterDistribution, SamplerSpec
from segreg.search import (
    SearchConfig,
    annealed_restarts,
    annealed_select,
    beam_segment,
    call_count_prediction,
    greedy_segment,
    hybrid_segment,
)


def _enumerate_losses(model, spec, cfg):
    """Brute-force oracle: loss at every lattice point."""
    alphas = [cfg.alphabet(k, int(i))
              for k in range(cfg.M) for i in cfg.positions]
    out = []
    for combo in itertools.product(*alphas):
        v = DigitVector(np.array(combo).reshape(cfg.M, cfg.d), cfg)
        out.append((spec.loss(model, v), v))
    return out


def test_greedy_identity_example_matches_exhaustive_oracle():
    cfg = DigitConfig(n=1, m=1, base=2, M=1)
    model = LinearModel(np.eye(1))
    spec = LossSpec(observation=[2.5])
    table = _enumerate_losses(model, spec, cfg)
    best_loss = min(l for l, _ in table)
    model.reset_calls()
    rep = greedy_segment(model, spec, cfg)
    assert rep.theta_segmented[0] == 2.5
    assert rep.final_loss == 0.0 == best_loss


def test_greedy_zero_observation_stays_at_zero():
    cfg = DigitConfig(n=1, m=1, base=2, M=2)
    model = LinearModel(np.array([[1.0, 0.3], [0.0, 2.0]]))
    spec = LossSpec(observation=model.eval(np.zeros(2)))
    model.reset_calls()
    rep = greedy_segment(model, spec, cfg)
    assert np.array_equal(rep.digits.digits, np.zeros((2, 3)))
    assert all(r.loss == 0.0 for r in rep.trace)


def _random_diagonal_instance(rng):
    M = int(rng.integers(1, 5))
    n = int(rng.integers(0, 3))
    m = int(rng.integers(0, 4))
    while n + m + 1 > 8:
        m -= 1
    base = int(rng.choice([2, 3, 4]))
    signed = bool(rng.integers(0, 2))
    cfg = DigitConfig(n=n, m=m, base=base, signed=signed, M=M)
    model = LinearModel(np.diag(rng.uniform(0.5, 2.0, M)
                                * rng.choice([-1.0, 1.0], M)))
    lo, hi = lattice_range(cfg)
    x = model.eval(rng.uniform(lo, hi, M))
    if rng.random() < 0.5:
        x = x + rng.normal(size=M) * 0.1
    model.reset_calls()
    return cfg, model, LossSpec(observation=x)


def test_monotone_descent_on_random_diagonal_models():
    rng = np.random.default_rng(100)
    for _ in range(40):
        cfg, model, spec = _random_diagonal_instance(rng)
        rep = greedy_segment(model, spec, cfg)
        losses = [r.loss for r in rep.trace]
        assert all(b <= a for a, b in zip(losses, losses[1:]))


def _posthoc_improvement(model, spec, rep):
    cfg = rep.digits.config
    for k in range(cfg.M):
        for i in cfg.positions:
            for j in cfg.alphabet(k, int(i)):
                if j == rep.digits.digits[k, cfg.col(int(i))]:
                    continue
                lj = spec.loss(model, rep.digits.perturb(k, int(i), int(j)))
                if lj < rep.final_loss - 1e-12:
                    return True
    return False


def test_digitwise_local_optimality_on_diagonal_models():
    rng = np.random.default_rng(101)
    for _ in range(30):
        cfg, model, spec = _random_diagonal_instance(rng)
        rep = greedy_segment(model, spec, cfg)
        assert not _posthoc_improvement(model, spec, rep)


def test_coupled_models_can_break_posthoc_optimality():
    # with cross-component coupling a later update can invalidate an
    # earlier digit choice: the single-sweep output is only locally
    # optimal w.r.t. the explored ordering, not post hoc
    rng = np.random.default_rng(102)
    violations = 0
    for _ in range(60):
        M = int(rng.integers(2, 5))
        cfg = DigitConfig(n=1, m=2, base=2, M=M)
        model = LinearModel(rng.normal(size=(M + 1, M)))
        lo, hi = lattice_range(cfg)
        spec = LossSpec(observation=model.eval(rng.uniform(lo, hi, M)))
        model.reset_calls()
        rep = greedy_segment(model, spec, cfg)
        violations += _posthoc_improvement(model, spec, rep)
    assert violations > 0


def test_beam_width_one_is_trace_identical_to_greedy():
    rng = np.random.default_rng(103)
    for _ in range(10):
        cfg, model, spec = _random_diagonal_instance(rng)
        a = greedy_segment(model, spec, cfg)
        model.reset_calls()
        b = beam_segment(model, spec, cfg, search=SearchConfig(beam_width=1))
        assert a.fingerprint() == b.fingerprint()


def test_deceptive_landscape_w1_fails_w2_succeeds():
    model, spec, cfg, theta_opt = deceptive_instance()
    table = _enumerate_losses(model, spec, cfg)
    best_loss, best_v = min(table, key=lambda t: t[0])
    assert best_v.decode()[0] == theta_opt
    model.reset_calls()
    narrow = greedy_segment(model, spec, cfg)
    assert narrow.theta_segmented[0] != theta_opt
    assert narrow.final_loss > best_loss
    model.reset_calls()
    wide = beam_segment(model, spec, cfg, search=SearchConfig(beam_width=2))
    assert wide.theta_segmented[0] == theta_opt
    assert wide.final_loss == best_loss


def test_backtrack_depth_zero_is_noop():
    rng = np.random.default_rng(104)
    cfg, model, spec = _random_diagonal_instance(rng)
    plain = greedy_segment(model, spec, cfg)
    model.reset_calls()
    with_bt = greedy_segment(model, spec, cfg,
                             search=SearchConfig(backtrack_stride=1,
                                                 backtrack_depth=0))
    assert plain.fingerprint() == with_bt.fingerprint()


def test_backtrack_corrects_deceptive_first_digit():
    model, spec, cfg, theta_opt = deceptive_instance()
    rep = greedy_segment(model, spec, cfg,
                         search=SearchConfig(backtrack_stride=1,
                                             backtrack_depth=1))
    assert rep.theta_segmented[0] == theta_opt
    assert rep.final_loss == 0.0


def test_backtrack_never_increases_loss():
    rng = np.random.default_rng(105)
    for _ in range(20):
        cfg, model, spec = _random_diagonal_instance(rng)
        rep = greedy_segment(model, spec, cfg,
                             search=SearchConfig(backtrack_stride=2,
                                                 backtrack_depth=2))
        losses = [r.loss for r in rep.trace]
        assert all(b <= a for a, b in zip(losses, losses[1:]))


def test_annealed_select_uniform_on_equal_losses():
    rng = np.random.default_rng(106)
    counts = np.zeros(3)
    for _ in range(6000):
        counts[annealed_select([1.0, 1.0, 1.0], 2.0, rng)] += 1
    freqs = counts / counts.sum()
    assert np.all(np.abs(freqs - 1 / 3) < 0.025)


def test_annealed_select_softmax_probabilities():
    # losses (0, 1) at T=1: p = (1, e^-1) normalized = (0.7311, 0.2689)
    rng = np.random.default_rng(107)
    n = 20000
    hits = sum(annealed_select([0.0, 1.0], 1.0, rng) == 0 for _ in range(n))
    p0 = 1.0 / (1.0 + math.exp(-1.0))
    se = math.sqrt(p0 * (1 - p0) / n)
    assert abs(hits / n - p0) <= 4 * se


def test_annealed_select_zero_temperature_limit():
    rng = np.random.default_rng(108)
    assert all(annealed_select([3.0, 0.5, 2.0], 1e-9, rng) == 1
               for _ in range(10_000))


def test_annealed_select_rejects_bad_input():
    rng = np.random.default_rng(109)
    with pytest.raises(ContractError):
        annealed_select([np.inf, np.inf], 1.0, rng)
    with pytest.raises(ValueError):
        annealed_select([0.0, 1.0], 0.0, rng)


def test_annealed_run_reproducible_and_seed_sensitive():
    cfg = DigitConfig(n=1, m=2, base=3, M=2)
    rng = np.random.default_rng(110)
    model = LinearModel(np.diag([1.0, 1.5]))
    spec = LossSpec(observation=model.eval([2.1, 0.7]))
    model.reset_calls()
    sc = SearchConfig(selection="annealed", schedule="exponential", T0=2.0,
                      decay=0.7, seed=5)
    a = beam_segment(model, spec, cfg, search=sc)
    b = beam_segment(model, spec, cfg, search=sc)
    assert a.fingerprint() == b.fingerprint()


def test_temperature_schedules_monotone():
    sc_exp = SearchConfig(selection="annealed", schedule="exponential",
                          T0=1.0, decay=0.85)
    sc_log = SearchConfig(selection="annealed", schedule="log", C=2.0)
    for sc in (sc_exp, sc_log):
        temps = [sc.temperature(l) for l in range(10)]
        assert all(b <= a for a, b in zip(temps, temps[1:]))
        assert all(t > 0 for t in temps)


def test_annealed_restarts_escape_deceptive_basin():
    model, spec, cfg, theta_opt = deceptive_instance()
    sc = SearchConfig(selection="annealed", schedule="log", C=10.0)
    best, finals = annealed_restarts(model, spec, cfg, search=sc,
                                     restarts=60, seed=0)
    assert best.final_loss == 0.0
    assert best.theta_segmented[0] == theta_opt
    assert finals.min() == 0.0 and len(finals) == 60


def test_hybrid_point_mass_recovers_projection():
    cfg = DigitConfig(n=1, m=2, base=3, M=2)
    model = LinearModel(np.diag([1.0, 2.0]))
    theta_star = np.array([1.7, 0.4])
    spec = LossSpec(observation=model.eval(theta_star))
    model.reset_calls()
    truth = project(theta_star, cfg)
    born = RegisterDistribution.peaked(cfg, truth, confidence=1.0)
    # point-mass measurements with top-1 or threshold policies leave only
    # the true digit in every candidate set, forcing exact recovery
    for policy, kw in [("top_r", {"r": 1}), ("threshold", {"tau": 0.5}),
                       ("threshold", {"tau": 0.99})]:
        rep = hybrid_segment(model, spec, cfg, born,
                             SamplerSpec(shots=64, policy=policy, seed=3, **kw))
        assert np.array_equal(rep.digits.digits, truth.digits)
        assert rep.entropy is not None


def test_hybrid_full_policy_bypasses_sampler():
    cfg = DigitConfig(n=1, m=1, base=2, M=2)
    model = LinearModel(np.eye(2))
    spec = LossSpec(observation=[1.3, 0.4])
    classical = beam_segment(model, spec, cfg,
                             search=SearchConfig(beam_width=2))
    model.reset_calls()
    born = RegisterDistribution.uniform(cfg)
    hybrid = hybrid_segment(model, spec, cfg, born,
                            SamplerSpec(shots=16, policy="full", seed=9),
                            SearchConfig(beam_width=2))
    assert classical.fingerprint() == hybrid.fingerprint()


def test_restricted_candidates_validated():
    cfg = DigitConfig(n=0, m=1, base=2, M=1)
    model = LinearModel(np.eye(1))
    spec = LossSpec(observation=[0.7])
    with pytest.raises(ContractError):
        beam_segment(model, spec, cfg, [[np.array([0, 1]), np.array([])]])
    with pytest.raises(ContractError):
        beam_segment(model, spec, cfg, [[np.array([0, 5]), np.array([0])]])


def test_call_count_prediction_examples():
    # M=2, d=3, w=1, r=2 -> 12
    cfg = DigitConfig(n=1, m=1, base=2, M=2)
    assert call_count_prediction(cfg, SearchConfig()) == 12
    # degenerate search: one candidate per digit costs d*M
    singleton = [[np.array([1]) for _ in range(cfg.d)] for _ in range(2)]
    assert call_count_prediction(cfg, SearchConfig(),
                                 candidates=singleton) == cfg.d * 2
    # refinement adds M*G + M*F
    refinement = RefinementConfig(multiscale=GridStage(301, 0.2),
                                  fine=GridStage(6000, 0.2))
    cfg3 = DigitConfig(n=8, m=8, base=4, M=3)
    with_refine = call_count_prediction(cfg3, SearchConfig(), refinement=refinement)
    assert with_refine == 4 * 3 * 17 * 1 + 3 * 301 + 3 * 6000


def test_observed_calls_match_prediction_including_backtracking():
    rng = np.random.default_rng(111)
    for sc in [SearchConfig(),
               SearchConfig(beam_width=3),
               SearchConfig(beam_width=2, backtrack_stride=2, backtrack_depth=1),
               SearchConfig(backtrack_stride=1, backtrack_depth=1)]:
        cfg = DigitConfig(n=1, m=2, base=3, M=2)
        model = LinearModel(rng.normal(size=(3, 2)))
        spec = LossSpec(observation=rng.normal(size=3))
        rep = beam_segment(model, spec, cfg, search=sc)
        assert rep.calls_raw == call_count_prediction(cfg, sc)
        assert rep.calls_deduped <= rep.calls_raw


def test_greedy_equals_bruteforce_on_balanced_signed_diagonal():
    rng = np.random.default_rng(112)
    for _ in range(10):
        M = int(rng.integers(1, 3))
        cfg = DigitConfig(n=0, m=2, base=3, signed=True, M=M)
        model = LinearModel(np.diag(rng.uniform(0.4, 2.0, M)))
        lo, hi = lattice_range(cfg)
        spec = LossSpec(observation=model.eval(rng.uniform(lo, hi, M)))
        model.reset_calls()
        rep = greedy_segment(model, spec, cfg)
        best = min(l for l, _ in _enumerate_losses(model, spec, cfg))
        assert rep.final_loss == best


def test_unsigned_greedy_trap_documented():
    # theta*=1.5 on the base-2 (n=1, m=1) lattice: the unit-layer argmin
    # overshoots to 2.0 and the remaining digits cannot descend, so the
    # output is digitwise-locally optimal but not global
    cfg = DigitConfig(n=1, m=1, base=2, M=1)
    model = LinearModel(np.eye(1))
    spec = LossSpec(observation=[1.5])
    rep = greedy_segment(model, spec, cfg)
    assert rep.theta_segmented[0] == 2.0
    assert rep.final_loss == 0.25
    assert not _posthoc_improvement(model, spec, rep)


def test_regularizer_steers_digit_choice():
    # exact fit at 1.5 vs penalized digits: large lambda prefers sparser
    # digit strings at the cost of fit
    cfg = DigitConfig(n=1, m=1, base=2, M=1)
    model = LinearModel(np.eye(1))
    spec_plain = LossSpec(observation=[1.5])
    spec_reg = LossSpec(observation=[1.5], lam=10.0, omega=1.0)
    plain = greedy_segment(model, spec_plain, cfg)
    model.reset_calls()
    reg = greedy_segment(model, spec_reg, cfg)
    assert int(np.abs(reg.digits.digits).sum()) <= \
        int(np.abs(plain.digits.digits).sum())
    assert reg.final_loss >= plain.final_loss


def test_trace_layout():
    cfg = DigitConfig(n=1, m=0, base=2, M=2)
    model = LinearModel(np.eye(2))
    spec = LossSpec(observation=[0.3, 1.2])
    rep = greedy_segment(model, spec, cfg)
    assert [r.layer for r in rep.trace] == [1, 1, 0, 0]
    assert [r.component for r in rep.trace] == [1, 2, 1, 2]
    assert [r.step for r in rep.trace] == [0, 1, 2, 3]
    assert rep.trace[-1].calls == rep.calls_raw
