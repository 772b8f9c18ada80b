import numpy as np
import pytest

from survalloc import (
    ConfigurationError,
    PopulationSpec,
    SurrogateModel,
    build_surrogate,
    generate_population,
    load_population,
    quantile_estimate,
    save_population,
    score,
)
from survalloc.sim import perturb_hazards

from conftest import binomial_ci_halfwidth


def make_spec(**kw):
    base = dict(n_samples=10, t_max=5, hazard_family="constant",
                hazard_params={"h_lo": 0.5, "h_hi": 0.5}, seed=3)
    base.update(kw)
    return PopulationSpec(**base)


def test_certain_event_at_step_one():
    pop = generate_population(make_spec(hazard_params={"h_lo": 1.0, "h_hi": 1.0}))
    assert np.all(pop.event_time == 1)


def test_no_event_gives_sentinel():
    pop = generate_population(make_spec(hazard_params={"h_lo": 0.0, "h_hi": 0.0}))
    assert np.all(pop.event_time == 6)


def test_constant_hazard_matches_geometric_law():
    # oracle: P(T = t) = 0.5^t for h = 0.5
    pop = generate_population(make_spec(n_samples=100_000, seed=11))
    for t, expected in ((1, 0.5), (2, 0.25)):
        freq = (pop.event_time == t).mean()
        assert abs(freq - expected) < 0.01


def test_surrogate_geometric_rows():
    inst = generate_population(make_spec())[0]
    model = build_surrogate(inst, 0.0, np.random.default_rng(0))
    row0 = model.cond_pmf()[0]
    expected = [0.5 ** t for t in range(1, 6)] + [0.5 ** 5]
    assert np.allclose(row0, expected, atol=1e-15)


def test_surrogate_rows_normalized():
    spec = PopulationSpec(n_samples=40, t_max=12, hazard_family="mixture", seed=9,
                          model_miscalibration=0.7)
    pop = generate_population(spec)
    for i in (0, 7, 39):
        pmf = pop.surrogate(i).cond_pmf()
        assert np.abs(pmf.sum(axis=1) - 1.0).max() < 1e-12
        assert pmf.min() >= 0.0 and pmf.max() <= 1.0


def test_surrogate_hand_chain_rule():
    # hazard [0.2, 0.8]: pmf(1) = 0.2, pmf(2) = 0.8 * 0.8, beyond = 0.8 * 0.2
    model = SurrogateModel(np.array([0.2, 0.8]))
    assert np.allclose(model.cond_pmf()[0], [0.2, 0.64, 0.16])


def test_quantile_estimate_basic():
    model = SurrogateModel(np.full(5, 0.5))
    assert quantile_estimate(model, 0.5) == 1  # CDF(1) = 0.5
    assert quantile_estimate(model, 0.7) == 2  # CDF(1) = 0.5 < 0.7 <= 0.75
    never = SurrogateModel(np.zeros(5))
    assert quantile_estimate(never, 0.3) == 6
    with pytest.raises(ValueError):
        quantile_estimate(model, 1.0)
    with pytest.raises(ValueError):
        quantile_estimate(model, 0.0)


def test_quantile_monotone_in_tau():
    model = SurrogateModel(np.array([0.05, 0.2, 0.01, 0.4, 0.3, 0.02]))
    taus = np.linspace(0.01, 0.99, 97)
    qs = [quantile_estimate(model, float(t)) for t in taus]
    assert all(a <= b for a, b in zip(qs, qs[1:]))


def test_score_kinds():
    inst = generate_population(make_spec())[0]
    model = SurrogateModel(np.full(5, 0.5))
    assert score(inst, model, 3, "event-prob") == 0.5
    certain = SurrogateModel(np.ones(4))
    for t in range(1, 5):
        assert score(inst, certain, t, "remaining-quantile", alpha=0.1) == -1.0
    two = SurrogateModel(np.array([0.2, 0.8]))
    assert score(inst, two, 2, "event-prob") == pytest.approx(0.8)


def test_determinism_bit_identical():
    spec = PopulationSpec(n_samples=200, t_max=30, hazard_family="mixture", seed=77,
                          score_noise_sd=0.25, model_miscalibration=0.3)
    a = generate_population(spec)
    b = generate_population(spec)
    for x, y in ((a.hazards, b.hazards), (a.model_hazards, b.model_hazards),
                 (a.event_time, b.event_time), (a.scores, b.scores)):
        assert np.array_equal(x, y)


def test_marginal_distribution_matches_surrogate():
    # mixture world, exact model: empirical event-time frequencies must match
    # the mean surrogate pmf within a 99% binomial CI
    spec = PopulationSpec(n_samples=100_000, t_max=8, hazard_family="mixture", seed=5)
    pop = generate_population(spec)
    surv = np.cumprod(1.0 - pop.model_hazards, axis=1)
    pmf = np.concatenate([np.ones((len(pop), 1)), surv[:, :-1]], axis=1) * pop.model_hazards
    for t in (1, 3, 8):
        expected = pmf[:, t - 1].mean()
        freq = (pop.event_time == t).mean()
        assert abs(freq - expected) < binomial_ci_halfwidth(expected, len(pop))


def test_sentinel_consistency():
    zero = generate_population(make_spec(hazard_params={"h_lo": 0.0, "h_hi": 0.0}))
    assert np.all(zero.event_time == zero.t_max + 1)
    one = generate_population(make_spec(hazard_params={"h_lo": 1.0, "h_hi": 1.0}))
    assert np.all(one.event_time <= one.t_max)


def test_miscalibration_perturbs_log_odds():
    rng = np.random.default_rng(4)
    hz = np.array([[0.0, 0.3, 1.0, 0.8]])
    out = perturb_hazards(hz, 0.5, rng)
    assert out[0, 0] == 0.0 and out[0, 2] == 1.0  # fixed points
    assert 0.0 < out[0, 1] < 1.0 and out[0, 1] != 0.3
    same = perturb_hazards(hz, 0.0, rng)
    assert np.array_equal(same, hz)


def test_invalid_hazard_params_rejected():
    with pytest.raises(ConfigurationError):
        generate_population(make_spec(hazard_params={"h_lo": 0.5, "h_hi": 1.4}))
    with pytest.raises(ConfigurationError):
        generate_population(make_spec(hazard_params={"bogus": 1.0}))
    with pytest.raises(ConfigurationError):
        PopulationSpec(n_samples=0, t_max=5).validate()


def test_population_roundtrip(tmp_path):
    spec = PopulationSpec(n_samples=25, t_max=10, hazard_family="mixture", seed=2,
                          score_noise_sd=0.1, model_miscalibration=0.2)
    pop = generate_population(spec)
    path = tmp_path / "pop.jsonl"
    save_population(pop, str(path))
    back = load_population(str(path), spec)
    assert np.array_equal(pop.event_time, back.event_time)
    assert np.array_equal(pop.hazards, back.hazards)
    assert np.array_equal(pop.model_hazards, back.model_hazards)
    assert np.array_equal(pop.scores, back.scores)


def test_instance_view():
    pop = generate_population(make_spec())
    inst = pop[3]
    assert inst.id == 3
    assert inst.event_time == pop.event_time[3]
    assert inst.score_at(2) == pop.scores[3, 1]
    assert len(list(pop)) == len(pop)
