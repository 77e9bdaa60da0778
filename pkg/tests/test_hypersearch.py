"""Search domains, budget handling, failure handling, and the
density-ratio suggestion engine."""

import json

import numpy as np
import pytest

from gcfbench import hypersearch as hs
from gcfbench.errors import NumericalError, UsageError


def test_uniform_bounds_and_membership():
    dom = hs.Uniform(0.2, 0.7)
    rng = np.random.default_rng(0)
    draws = [dom.sample(rng) for _ in range(500)]
    assert min(draws) >= 0.2 and max(draws) <= 0.7
    assert dom.contains(0.2) and dom.contains(0.7)
    assert not dom.contains(0.19) and not dom.contains(0.71)
    with pytest.raises(UsageError):
        hs.Uniform(1.0, 1.0)


def test_log_uniform_spends_half_its_mass_below_the_geometric_mid():
    dom = hs.LogUniform(1e-4, 1e-1)
    rng = np.random.default_rng(1)
    draws = np.array([dom.sample(rng) for _ in range(2000)])
    assert draws.min() >= 1e-4 and draws.max() <= 1e-1
    # median near 10**-2.5, far below the arithmetic midpoint 0.05
    assert np.median(draws) < 0.01
    with pytest.raises(UsageError):
        hs.LogUniform(0.0, 1.0)


def test_int_uniform_is_inclusive():
    dom = hs.IntUniform(2, 5)
    rng = np.random.default_rng(2)
    draws = {dom.sample(rng) for _ in range(200)}
    assert draws == {2, 3, 4, 5}
    assert dom.contains(2) and dom.contains(5)
    assert not dom.contains(6) and not dom.contains(3.5)
    with pytest.raises(UsageError):
        hs.IntUniform(5, 5)


def test_choice_samples_and_membership():
    dom = hs.Choice(["adam", "sgd"])
    rng = np.random.default_rng(3)
    assert {dom.sample(rng) for _ in range(50)} == {"adam", "sgd"}
    assert dom.contains("adam") and not dom.contains("rmsprop")
    with pytest.raises(UsageError):
        hs.Choice([])


@pytest.mark.parametrize("text,cls", [
    ("uniform(0.2, 0.7)", hs.Uniform),
    ("log_uniform(1e-4,1e-1)", hs.LogUniform),
    ("int_uniform(2, 64)", hs.IntUniform),
    ("choice(64,128,256)", hs.Choice),
])
def test_parse_domain_forms(text, cls):
    dom = hs.parse_domain(text)
    assert isinstance(dom, cls)
    # repr is itself parseable: the config round trip is stable
    again = hs.parse_domain(repr(dom))
    assert repr(again) == repr(dom)


def test_parse_domain_coerces_choice_types():
    dom = hs.parse_domain("choice(64, 128, adamw)")
    assert dom.values == [64, 128, "adamw"]


@pytest.mark.parametrize("bad", [
    "gaussian(0,1)", "uniform(1)", "uniform(1,2,3)", "uniform", ""])
def test_parse_domain_rejects_malformed(bad):
    with pytest.raises(UsageError):
        hs.parse_domain(bad)


def test_search_space_needs_a_parameter_and_sorts_names():
    with pytest.raises(UsageError):
        hs.SearchSpace({})
    a = hs.SearchSpace({"lr": hs.Uniform(0, 1), "dim": hs.IntUniform(1, 9)})
    b = hs.SearchSpace({"dim": hs.IntUniform(1, 9), "lr": hs.Uniform(0, 1)})
    assert a.names() == b.names() == ["dim", "lr"]
    # declaration order must not change the draw sequence
    assert a.sample(np.random.default_rng(7)) == b.sample(np.random.default_rng(7))


def space_1d():
    return hs.SearchSpace({"x": hs.Uniform(0.0, 1.0)})


def test_random_search_spends_exact_budget_and_breaks_ties_early():
    best, history = hs.random_search(space_1d(), lambda c: 0.5, trials=9, seed=0)
    assert [t.index for t in history] == list(range(9))
    assert all(t.status == "complete" for t in history)
    assert best.index == 0


def test_random_search_is_seed_reproducible():
    _, h1 = hs.random_search(space_1d(), lambda c: c["x"], trials=8, seed=4)
    _, h2 = hs.random_search(space_1d(), lambda c: c["x"], trials=8, seed=4)
    _, h3 = hs.random_search(space_1d(), lambda c: c["x"], trials=8, seed=5)
    assert [t.config for t in h1] == [t.config for t in h2]
    assert [t.config for t in h1] != [t.config for t in h3]


def test_random_search_longer_budget_extends_shorter():
    _, short = hs.random_search(space_1d(), lambda c: c["x"], trials=5, seed=11)
    _, long = hs.random_search(space_1d(), lambda c: c["x"], trials=20, seed=11)
    assert [t.config for t in short] == [t.config for t in long[:5]]


def test_random_search_avoids_duplicates_until_space_is_exhausted():
    space = hs.SearchSpace({"k": hs.Choice([1, 2, 3])})
    _, history = hs.random_search(space, lambda c: 0.0, trials=3, seed=0)
    assert {t.config["k"] for t in history} == {1, 2, 3}
    # a budget beyond the space size keeps running with repeats
    _, history = hs.random_search(space, lambda c: 0.0, trials=5, seed=0)
    assert len(history) == 5


def test_random_search_skips_failed_trials_for_best():
    def objective(config):
        if config["x"] < 0.5:
            raise RuntimeError("diverged")
        return config["x"]

    best, history = hs.random_search(space_1d(), objective, trials=20, seed=2)
    failed = [t for t in history if t.status == "failed"]
    assert failed and all("diverged" in t.error for t in failed)
    assert best.objective >= 0.5
    assert best.objective == max(
        t.objective for t in history if t.status == "complete")


def test_random_search_all_failed_is_numerical_error():
    def objective(config):
        raise RuntimeError("always broken")

    with pytest.raises(NumericalError):
        hs.random_search(space_1d(), objective, trials=4, seed=0)


def test_out_of_range_objective_is_a_usage_error():
    with pytest.raises(UsageError):
        hs.random_search(space_1d(), lambda c: 1.5, trials=2, seed=0)
    with pytest.raises(UsageError):
        hs.Trial(0, {"x": 0.1}).complete(-0.2)


def test_history_file_round_trip(tmp_path):
    def objective(config):
        if config["x"] > 0.8:
            raise ValueError("too big")
        return config["x"]

    _, history = hs.random_search(space_1d(), objective, trials=12, seed=9)
    path = tmp_path / "history.jsonl"
    hs.write_history(path, history)

    lines = path.read_text().strip().splitlines()
    assert len(lines) == 12
    for line in lines:
        json.loads(line)  # one valid JSON object per line

    back = hs.read_history(path)
    assert [t.to_json() for t in back] == [t.to_json() for t in history]


# ------------------------------------------------- density-ratio engine

def test_tpe_falls_back_to_random_below_two_trials():
    space = space_1d()
    suggestion = hs.tpe_suggest([], space, rng=np.random.default_rng(6))
    assert suggestion == space.sample(np.random.default_rng(6))
    one = [hs.Trial(0, {"x": 0.5}, objective=0.5, status="complete")]
    assert space.contains(hs.tpe_suggest(one, space, rng=np.random.default_rng(0)))


def test_tpe_concentrates_on_the_good_region():
    space = space_1d()
    history = []
    for i in range(30):
        x = (i + 0.5) / 30
        history.append(hs.Trial(i, {"x": x}, objective=1 - abs(x - 0.8),
                                status="complete"))
    hits = 0
    for seed in range(100):
        got = hs.tpe_suggest(history, space, rng=np.random.default_rng(seed))
        assert space.contains(got)
        hits += abs(got["x"] - 0.8) < 0.25
    assert hits > 90


def test_tpe_prefers_the_winning_category():
    space = hs.SearchSpace({"opt": hs.Choice(["a", "b", "c"])})
    history = [hs.Trial(i, {"opt": "a"}, objective=0.9, status="complete")
               for i in range(3)]
    history += [hs.Trial(3 + i, {"opt": "b" if i % 2 else "c"},
                         objective=0.1, status="complete") for i in range(9)]
    picks = [hs.tpe_suggest(history, space, rng=np.random.default_rng(s))["opt"]
             for s in range(50)]
    assert picks.count("a") >= 45


def test_tpe_suggestions_respect_every_domain_type():
    space = hs.SearchSpace({
        "lr": hs.LogUniform(1e-4, 1e-1),
        "layers": hs.IntUniform(1, 4),
        "reg": hs.Uniform(0.0, 0.5),
        "opt": hs.Choice(["adam", "sgd"]),
    })
    rng = np.random.default_rng(13)
    history = []
    for i in range(15):
        config = space.sample(rng)
        score = min(1.0, config["lr"] * 10 + 0.1 * config["layers"])
        history.append(hs.Trial(i, config, objective=score, status="complete"))
    for seed in range(30):
        got = hs.tpe_suggest(history, space, rng=np.random.default_rng(seed))
        assert space.contains(got)
        assert isinstance(got["layers"], int)


def test_tpe_search_full_loop():
    def objective(config):
        return max(0.0, 1.0 - abs(config["x"] - 0.3))

    best, history = hs.tpe_search(space_1d(), objective, trials=25, seed=3)
    assert len(history) == 25
    assert best.objective == max(t.objective for t in history
                                 if t.status == "complete")
    assert abs(best.config["x"] - 0.3) < 0.25
