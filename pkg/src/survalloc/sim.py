"""Synthetic discrete-time hazard populations and surrogate event-time models.

One "conversation" is a latent per-step hazard sequence of length t_max.
The true event time T is drawn by sequential Bernoulli trials on those
hazards; T = t_max + 1 is the no-event sentinel. A per-sample surrogate
model holds (optionally miscalibrated) hazards and induces the conditional
event-time law used for quantile estimates and risk scores.

Times are 1-based throughout; arrays index step t at position t - 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

from . import kernels
from .errors import ConfigurationError

SCORE_KINDS = ("event-prob", "remaining-quantile")
HAZARD_FAMILIES = ("constant", "geometric-decay", "logistic-bump", "mixture")

# Per-family parameter defaults; values are ranges for per-sample draws so
# populations are heterogeneous. All overridable via PopulationSpec.hazard_params.
_FAMILY_DEFAULTS: dict[str, float] = {
    "h_lo": 0.002,
    "h_hi": 0.012,
    "decay_h0_lo": 0.02,
    "decay_h0_hi": 0.08,
    "decay_rate_lo": 0.78,
    "decay_rate_hi": 0.90,
    "bump_base": 0.003,
    "bump_amp_lo": 0.02,
    "bump_amp_hi": 0.055,
    "bump_center_lo_frac": 0.30,
    "bump_center_hi_frac": 0.85,
    "bump_width_frac": 0.08,
    "mix_constant": 0.15,
    "mix_decay": 1.0,
    "mix_bump": 0.85,
}


@dataclass(frozen=True)
class PopulationSpec:
    """Generation recipe for a synthetic population."""

    n_samples: int
    t_max: int
    hazard_family: str = "mixture"
    hazard_params: Mapping[str, float] = field(default_factory=dict)
    score_kind: str = "event-prob"
    score_alpha: float = 0.1
    score_noise_sd: float = 0.0
    model_miscalibration: float = 0.0
    seed: int = 0

    def validate(self) -> None:
        if self.n_samples < 1 or self.t_max < 1:
            raise ConfigurationError("n_samples and t_max must be >= 1")
        if self.hazard_family not in HAZARD_FAMILIES:
            raise ConfigurationError(f"unknown hazard family {self.hazard_family!r}")
        if self.score_kind not in SCORE_KINDS:
            raise ConfigurationError(f"unknown score kind {self.score_kind!r}")
        if self.score_noise_sd < 0 or self.model_miscalibration < 0:
            raise ConfigurationError("noise and miscalibration must be >= 0")
        if not 0.0 < self.score_alpha < 1.0:
            raise ConfigurationError("score_alpha must be in (0, 1)")
        unknown = set(self.hazard_params) - set(_FAMILY_DEFAULTS)
        if unknown:
            raise ConfigurationError(f"unknown hazard params: {sorted(unknown)}")
        p = self.params()
        checks = [
            0.0 <= p["h_lo"] <= p["h_hi"] <= 1.0,
            0.0 <= p["decay_h0_lo"] <= p["decay_h0_hi"] <= 1.0,
            0.0 <= p["decay_rate_lo"] <= p["decay_rate_hi"] <= 1.0,
            0.0 <= p["bump_base"],
            0.0 <= p["bump_amp_lo"] <= p["bump_amp_hi"],
            p["bump_base"] + p["bump_amp_hi"] <= 1.0,
            0.0 <= p["bump_center_lo_frac"] <= p["bump_center_hi_frac"] <= 1.0,
            p["bump_width_frac"] > 0.0,
            min(p["mix_constant"], p["mix_decay"], p["mix_bump"]) >= 0.0,
            p["mix_constant"] + p["mix_decay"] + p["mix_bump"] > 0.0,
        ]
        if not all(checks):
            raise ConfigurationError("hazard parameters leave [0, 1] or are inconsistent")

    def params(self) -> dict[str, float]:
        merged = dict(_FAMILY_DEFAULTS)
        merged.update(self.hazard_params)
        return merged


@dataclass
class PromptInstance:
    """One synthetic conversation: latent hazards, true event time, risk scores."""

    id: int
    hazard: np.ndarray
    event_time: int
    scores: np.ndarray
    prior_target: int | None = None

    @property
    def t_max(self) -> int:
        return len(self.hazard)

    def score_at(self, t: int) -> float:
        return float(self.scores[t - 1])


@dataclass
class SurrogateModel:
    """Discrete conditional event-time model for one sample.

    Stores conditional per-step event probabilities ("discrete hazards");
    the conditional pmf rows P(T = t2 | T > t1) follow by the chain rule.
    """

    hazards: np.ndarray

    @property
    def t_max(self) -> int:
        return len(self.hazards)

    def cdf(self) -> np.ndarray:
        """P(T <= t) for t = 1..t_max."""
        return 1.0 - np.cumprod(1.0 - self.hazards)

    def cond_pmf(self) -> np.ndarray:
        """Matrix [t1, :] = (P(T = t1+1 | T > t1), ..., P(T = t_max | T > t1), beyond).

        Row index t1 runs over 0..t_max-1; column j < t_max holds the mass of
        T = j + 1 (zero for j < t1) and the last column the beyond-horizon mass.
        Rows sum to one.
        """
        t = self.t_max
        out = np.zeros((t, t + 1))
        for t1 in range(t):
            surv = 1.0
            for t2 in range(t1 + 1, t + 1):
                out[t1, t2 - 1] = surv * self.hazards[t2 - 1]
                surv *= 1.0 - self.hazards[t2 - 1]
            out[t1, t] = surv
        return out


class Population:
    """Array-backed sequence of PromptInstance plus per-sample surrogate models."""

    def __init__(self, spec: PopulationSpec, hazards: np.ndarray,
                 model_hazards: np.ndarray, event_time: np.ndarray,
                 scores: np.ndarray):
        self.spec = spec
        self.t_max = spec.t_max
        self.hazards = hazards
        self.model_hazards = model_hazards
        self.event_time = event_time
        self.scores = scores

    def __len__(self) -> int:
        return len(self.event_time)

    def __getitem__(self, i: int) -> PromptInstance:
        return PromptInstance(
            id=i,
            hazard=self.hazards[i],
            event_time=int(self.event_time[i]),
            scores=self.scores[i],
        )

    def __iter__(self) -> Iterator[PromptInstance]:
        for i in range(len(self)):
            yield self[i]

    def surrogate(self, i: int) -> SurrogateModel:
        return SurrogateModel(self.model_hazards[i])

    def model_cdf(self) -> np.ndarray:
        """(n, t_max) surrogate CDF P(T <= t) per sample."""
        return 1.0 - np.cumprod(1.0 - self.model_hazards, axis=1)

    def subset(self, idx: np.ndarray) -> "Population":
        return Population(self.spec, self.hazards[idx], self.model_hazards[idx],
                          self.event_time[idx], self.scores[idx])


def _logit(p: np.ndarray) -> np.ndarray:
    return np.log(p) - np.log1p(-p)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def perturb_hazards(hazards: np.ndarray, miscalibration: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Additive Gaussian noise on the log-odds of each hazard entry.

    Preserves [0, 1]; entries exactly 0 or 1 are fixed points.
    """
    if miscalibration == 0.0:
        return hazards.copy()
    noise = rng.normal(0.0, miscalibration, size=hazards.shape)
    out = hazards.copy()
    interior = (hazards > 0.0) & (hazards < 1.0)
    out[interior] = _sigmoid(_logit(hazards[interior]) + noise[interior])
    return out


def _draw_hazards(spec: PopulationSpec, rng: np.random.Generator) -> np.ndarray:
    """Per-sample hazard rows for the configured family.

    The mixture draws a component per sample; parameter blocks for all three
    component families are drawn regardless of the realized components so the
    stream layout is fixed.
    """
    n, t = spec.n_samples, spec.t_max
    p = spec.params()
    fam = spec.hazard_family
    steps = np.arange(1, t + 1, dtype=np.float64)

    if fam == "mixture":
        weights = np.array([p["mix_constant"], p["mix_decay"], p["mix_bump"]])
        cum = np.cumsum(weights / weights.sum())
        comp = np.searchsorted(cum, rng.random(n), side="right")
    else:
        comp = np.full(n, ("constant", "geometric-decay", "logistic-bump").index(fam))

    h_const = rng.uniform(p["h_lo"], p["h_hi"], size=n)
    h0 = rng.uniform(p["decay_h0_lo"], p["decay_h0_hi"], size=n)
    rate = rng.uniform(p["decay_rate_lo"], p["decay_rate_hi"], size=n)
    amp = rng.uniform(p["bump_amp_lo"], p["bump_amp_hi"], size=n)
    center = rng.uniform(p["bump_center_lo_frac"] * t, p["bump_center_hi_frac"] * t, size=n)

    hazards = np.empty((n, t))
    m0 = comp == 0
    hazards[m0] = h_const[m0, None] * np.ones(t)
    m1 = comp == 1
    hazards[m1] = h0[m1, None] * rate[m1, None] ** (steps - 1.0)
    m2 = comp == 2
    width = max(1.0, p["bump_width_frac"] * t)
    z = (steps[None, :] - center[m2, None]) / width
    sig = 1.0 / (1.0 + np.exp(-z))
    hazards[m2] = p["bump_base"] + amp[m2, None] * 4.0 * sig * (1.0 - sig)

    if hazards.min() < 0.0 or hazards.max() > 1.0:
        raise ConfigurationError("hazard parameters produced values outside [0, 1]")
    return hazards


def sample_event_times(hazards: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """First step with a successful Bernoulli(hazard[t]) draw, sentinel t_max + 1."""
    n, t = hazards.shape
    hits = rng.random((n, t)) < hazards
    any_hit = hits.any(axis=1)
    first = hits.argmax(axis=1) + 1
    return np.where(any_hit, first, t + 1).astype(np.int64)


def compute_scores(model_hazards: np.ndarray, kind: str, alpha: float) -> np.ndarray:
    """Noise-free risk scores from the surrogate; larger means stronger continue signal."""
    if kind == "event-prob":
        return model_hazards.copy()
    if kind == "remaining-quantile":
        return kernels.remaining_quantile_scores(model_hazards, alpha)
    raise ConfigurationError(f"unknown score kind {kind!r}")


def generate_population(spec: PopulationSpec,
                        rng: np.random.Generator | None = None) -> Population:
    """Draw a full synthetic population; bit-identical given (spec, seed).

    Stream order: component/family parameters, event-time uniforms,
    miscalibration noise (only when miscalibration > 0), score noise (only
    when score_noise_sd > 0).
    """
    spec.validate()
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    hazards = _draw_hazards(spec, rng)
    event_time = sample_event_times(hazards, rng)
    model_hazards = perturb_hazards(hazards, spec.model_miscalibration, rng)
    scores = compute_scores(model_hazards, spec.score_kind, spec.score_alpha)
    if spec.score_noise_sd > 0.0:
        scores = scores + rng.normal(0.0, spec.score_noise_sd, size=scores.shape)
    return Population(spec, hazards, model_hazards, event_time, scores)


def build_surrogate(instance: PromptInstance, miscalibration: float,
                    rng: np.random.Generator) -> SurrogateModel:
    """Surrogate model for one instance; exact conditional law at miscalibration 0."""
    hz = perturb_hazards(instance.hazard[None, :], miscalibration, rng)[0]
    return SurrogateModel(hz)


def quantile_estimate(model: SurrogateModel, tau: float) -> int:
    """Smallest t >= 1 with P(T <= t) >= tau, else the t_max + 1 sentinel."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    curve = kernels.quantile_curves(model.cdf()[None, :], np.array([tau]),
                                    model.t_max + 1)
    return int(curve[0, 0])


def score(instance: PromptInstance, model: SurrogateModel, t: int, kind: str,
          alpha: float = 0.1) -> float:
    """Noise-free risk score at step t (1-based).

    event-prob: the model's P(event at step t | survived to t - 1).
    remaining-quantile: negated conditional (1 - alpha)-quantile of remaining
    time, so larger still means a stronger continue signal.
    """
    if not 1 <= t <= model.t_max:
        raise ValueError(f"step t must be in 1..{model.t_max}")
    if kind == "event-prob":
        return float(model.hazards[t - 1])
    if kind == "remaining-quantile":
        return float(kernels.remaining_quantile_scores(model.hazards[None, :], alpha)[0, t - 1])
    raise ConfigurationError(f"unknown score kind {kind!r}")


def save_population(pop: Population, path: str) -> None:
    """Line-delimited records, one instance per line.

    Field order: id, hazards, event_time, scores, model_hazards. The model
    hazards are included so a replay is faithful under miscalibration > 0.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i in range(len(pop)):
            rec = {
                "id": i,
                "hazards": [repr(float(v)) for v in pop.hazards[i]],
                "event_time": int(pop.event_time[i]),
                "scores": [repr(float(v)) for v in pop.scores[i]],
                "model_hazards": [repr(float(v)) for v in pop.model_hazards[i]],
            }
            fh.write(json.dumps(rec) + "\n")


def load_population(path: str, spec: PopulationSpec) -> Population:
    """Inverse of :func:`save_population`; spec supplies metadata only."""
    hazards, model_hazards, event_time, scores = [], [], [], []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            hazards.append([float(v) for v in rec["hazards"]])
            model_hazards.append([float(v) for v in rec["model_hazards"]])
            event_time.append(rec["event_time"])
            scores.append([float(v) for v in rec["scores"]])
    return Population(
        spec,
        np.asarray(hazards),
        np.asarray(model_hazards),
        np.asarray(event_time, dtype=np.int64),
        np.asarray(scores),
    )
