"""Budgeted hyper-parameter search over declared domains.

Random search is the default engine: one seeded generator drawn from
sequentially, so a longer budget extends a shorter one without changing
its prefix. A density-ratio engine (good/bad kernel estimates, best
gamma fraction vs rest) is available behind a flag.
"""

import json
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, UsageError

_DUP_REDRAWS = 100


class Uniform:
    def __init__(self, lo: float, hi: float):
        if not lo < hi:
            raise UsageError(f"uniform needs lo < hi, got ({lo}, {hi})")
        self.lo = float(lo)
        self.hi = float(hi)

    def sample(self, rng):
        return float(rng.uniform(self.lo, self.hi))

    def contains(self, v) -> bool:
        return isinstance(v, (int, float)) and self.lo <= v <= self.hi

    def __repr__(self):
        return f"uniform({self.lo},{self.hi})"


class LogUniform:
    """Uniform in log space; lo must be positive."""

    def __init__(self, lo: float, hi: float):
        if not 0 < lo < hi:
            raise UsageError(f"log_uniform needs 0 < lo < hi, got ({lo}, {hi})")
        self.lo = float(lo)
        self.hi = float(hi)

    def sample(self, rng):
        return float(math.exp(rng.uniform(math.log(self.lo), math.log(self.hi))))

    def contains(self, v) -> bool:
        return isinstance(v, (int, float)) and self.lo <= v <= self.hi

    def __repr__(self):
        return f"log_uniform({self.lo},{self.hi})"


class IntUniform:
    """Inclusive integer range."""

    def __init__(self, lo: int, hi: int):
        if not lo < hi:
            raise UsageError(f"int_uniform needs lo < hi, got ({lo}, {hi})")
        self.lo = int(lo)
        self.hi = int(hi)

    def sample(self, rng):
        return int(rng.integers(self.lo, self.hi + 1))

    def contains(self, v) -> bool:
        return isinstance(v, (int, np.integer)) and self.lo <= v <= self.hi

    def __repr__(self):
        return f"int_uniform({self.lo},{self.hi})"


class Choice:
    def __init__(self, values):
        values = list(values)
        if not values:
            raise UsageError("choice needs at least one value")
        self.values = values

    def sample(self, rng):
        return self.values[int(rng.integers(len(self.values)))]

    def contains(self, v) -> bool:
        return v in self.values

    def __repr__(self):
        inner = ",".join(str(v) for v in self.values)
        return f"choice({inner})"


class SearchSpace:
    """Named parameter domains. Sampling iterates names in sorted order
    so the draw sequence does not depend on declaration order."""

    def __init__(self, domains: dict):
        if not domains:
            raise UsageError("search space must declare at least one parameter")
        self.domains = dict(domains)

    def names(self):
        return sorted(self.domains)

    def sample(self, rng) -> dict:
        return {name: self.domains[name].sample(rng) for name in self.names()}

    def contains(self, config: dict) -> bool:
        return set(config) == set(self.domains) and all(
            self.domains[k].contains(v) for k, v in config.items())


_DOMAIN_RE = re.compile(r"^\s*(uniform|log_uniform|int_uniform|choice)\s*\((.*)\)\s*$")


def _coerce(token: str):
    token = token.strip()
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        return token


def parse_domain(text: str):
    """Parse a config-file domain string, e.g. ``log_uniform(1e-4,1e-1)``
    or ``choice(64,128,256)``."""
    m = _DOMAIN_RE.match(text)
    if m is None:
        raise UsageError(f"cannot parse search domain: {text!r}")
    kind, payload = m.group(1), m.group(2)
    args = [_coerce(t) for t in payload.split(",") if t.strip() != ""]
    if kind == "choice":
        return Choice(args)
    if len(args) != 2:
        raise UsageError(f"{kind} takes exactly two bounds: {text!r}")
    lo, hi = args
    if kind == "uniform":
        return Uniform(lo, hi)
    if kind == "log_uniform":
        return LogUniform(lo, hi)
    return IntUniform(lo, hi)


@dataclass
class Trial:
    index: int
    config: dict
    objective: float = None
    status: str = "pending"
    error: str = ""

    def complete(self, objective: float):
        if not (0.0 <= objective <= 1.0):
            raise UsageError(
                f"objective must lie in [0, 1], got {objective!r} "
                f"(the search maximizes a recall-type validation metric)")
        self.objective = float(objective)
        self.status = "complete"

    def fail(self, error: str):
        self.status = "failed"
        self.error = str(error)

    def to_json(self) -> dict:
        return {"index": self.index, "config": self.config,
                "objective": self.objective, "status": self.status,
                "error": self.error}

    @classmethod
    def from_json(cls, obj: dict) -> "Trial":
        return cls(index=obj["index"], config=obj["config"],
                   objective=obj["objective"], status=obj["status"],
                   error=obj.get("error", ""))


def _config_key(config: dict):
    return tuple(sorted(config.items()))


def _best_of(history):
    best = None
    for t in history:
        if t.status != "complete":
            continue
        if best is None or t.objective > best.objective:
            best = t
    if best is None:
        raise NumericalError("every trial failed; no best configuration exists")
    return best


def _run_trial(index, config, objective_fn, history):
    trial = Trial(index=index, config=config)
    try:
        value = objective_fn(config)
    except Exception as exc:  # a failing config must not sink the search
        trial.fail(repr(exc))
    else:
        trial.complete(value)
    history.append(trial)
    return trial


def random_search(space: SearchSpace, objective_fn, trials: int = 20,
                  seed: int = 0):
    """Seeded random search. Returns (best trial, full history).

    Duplicate configs are re-drawn up to a bounded number of times; on a
    small discrete space that cannot fill the budget with distinct
    points, the duplicate is kept rather than looping forever.
    """
    if trials < 1:
        raise UsageError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    history = []
    seen = set()
    for index in range(trials):
        config = space.sample(rng)
        redraws = 0
        while _config_key(config) in seen and redraws < _DUP_REDRAWS:
            config = space.sample(rng)
            redraws += 1
        seen.add(_config_key(config))
        _run_trial(index, config, objective_fn, history)
    return _best_of(history), history


def _kde_logpdf(x: float, points: np.ndarray, bandwidth: float) -> float:
    z = (x - points) / bandwidth
    log_terms = -0.5 * z * z - math.log(bandwidth * math.sqrt(2 * math.pi))
    m = log_terms.max()
    return m + math.log(np.exp(log_terms - m).sum() / len(points))


def _bandwidth(points: np.ndarray, span: float) -> float:
    # Scott's rule with a floor so a degenerate cluster keeps finite density
    sigma = float(points.std())
    bw = sigma * len(points) ** (-0.2)
    return max(bw, 1e-3 * span, 1e-12)


class _NumericDensity:
    """Good/bad Gaussian mixtures for one numeric dimension; log-domain
    values are modeled in log space."""

    def __init__(self, domain, good, bad):
        self.domain = domain
        self.log_space = isinstance(domain, LogUniform)
        self.good = self._transform(np.asarray(good, dtype=np.float64))
        self.bad = self._transform(np.asarray(bad, dtype=np.float64))
        lo, hi = self._transform(np.array([domain.lo, domain.hi]))
        self.span = hi - lo
        self.bw_good = _bandwidth(self.good, self.span)
        self.bw_bad = _bandwidth(self.bad, self.span)

    def _transform(self, v):
        return np.log(v) if self.log_space else v

    def propose(self, rng):
        center = self.good[int(rng.integers(len(self.good)))]
        draw = rng.normal(center, self.bw_good)
        if self.log_space:
            draw = math.exp(draw)
        draw = min(max(draw, self.domain.lo), self.domain.hi)
        if isinstance(self.domain, IntUniform):
            draw = int(round(draw))
        return draw

    def log_ratio(self, value) -> float:
        x = math.log(value) if self.log_space else float(value)
        return (_kde_logpdf(x, self.good, self.bw_good)
                - _kde_logpdf(x, self.bad, self.bw_bad))


class _CategoricalDensity:
    """Smoothed category frequencies in the good and bad trial sets."""

    def __init__(self, domain, good, bad):
        self.domain = domain
        self.p_good = self._freq(good)
        self.p_bad = self._freq(bad)

    def _freq(self, values):
        n = len(values)
        k = len(self.domain.values)
        return {v: (sum(1 for w in values if w == v) + 1.0) / (n + k)
                for v in self.domain.values}

    def propose(self, rng):
        probs = np.array([self.p_good[v] for v in self.domain.values])
        idx = int(rng.choice(len(probs), p=probs / probs.sum()))
        return self.domain.values[idx]

    def log_ratio(self, value) -> float:
        return math.log(self.p_good[value]) - math.log(self.p_bad[value])


def tpe_suggest(history, space: SearchSpace, gamma: float = 0.25,
                candidates: int = 24, rng=None) -> dict:
    """Suggest the candidate maximizing estimated good/bad density ratio.

    Fewer than 2 completed trials (or any degenerate density) falls back
    to a plain random draw from the space.
    """
    rng = np.random.default_rng() if rng is None else rng
    completed = [t for t in history if t.status == "complete"]
    if len(completed) < 2:
        return space.sample(rng)
    ranked = sorted(completed, key=lambda t: (-t.objective, t.index))
    n_good = math.ceil(gamma * len(ranked))
    good, bad = ranked[:n_good], ranked[n_good:]
    if not bad:
        return space.sample(rng)

    models = {}
    for name in space.names():
        domain = space.domains[name]
        gvals = [t.config[name] for t in good]
        bvals = [t.config[name] for t in bad]
        if isinstance(domain, Choice):
            models[name] = _CategoricalDensity(domain, gvals, bvals)
        else:
            models[name] = _NumericDensity(domain, gvals, bvals)

    best_config, best_score = None, -math.inf
    for _ in range(candidates):
        config = {name: models[name].propose(rng) for name in space.names()}
        try:
            score = sum(models[name].log_ratio(config[name])
                        for name in space.names())
        except (ValueError, OverflowError):
            continue
        if not math.isfinite(score):
            continue
        if score > best_score:
            best_config, best_score = config, score
    if best_config is None:
        return space.sample(rng)
    return best_config


def tpe_search(space: SearchSpace, objective_fn, trials: int = 20,
               seed: int = 0, gamma: float = 0.25, candidates: int = 24):
    """Sequential search driven by tpe_suggest. Returns (best, history)."""
    if trials < 1:
        raise UsageError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    history = []
    for index in range(trials):
        config = tpe_suggest(history, space, gamma=gamma,
                             candidates=candidates, rng=rng)
        _run_trial(index, config, objective_fn, history)
    return _best_of(history), history


def write_history(path, history) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for trial in history:
            fh.write(json.dumps(trial.to_json(), sort_keys=True) + "\n")


def read_history(path) -> list:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(Trial.from_json(json.loads(line)))
    return out
