"""Seeded synthetic epoch traces for desk-scale validation.

Generates traces whose shape mirrors real sequence workloads: a chosen SL
distribution (uniform, right-skewed, or bimodal), a near-linear runtime model
in SL, and per-configuration sensitivity that may itself depend on SL through
an affine multiplier ``alpha + beta * sl``.

Determinism contract: the random source is NumPy's ``default_rng`` (PCG64).
For one spec, the SL sequence is drawn first (inverse CDF over ``rng.random``)
and the noise sequence second (``rng.standard_normal``), both before any
config-specific arithmetic, so every config of a spec shares identical SL and
noise draws. Two configs differing only by a constant multiplier therefore
produce runtimes in an exact constant ratio, iteration for iteration.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .errors import ParameterError
from .trace import RUNTIME_STAT, EpochTrace, IterationRecord

# Relative noise is clipped here so runtimes stay strictly positive.
NOISE_FLOOR = -0.9


@dataclass(frozen=True)
class Uniform:
    kind: str = "uniform"

    def pmf(self, min_sl: int, max_sl: int) -> np.ndarray:
        n = max_sl - min_sl + 1
        return np.full(n, 1.0 / n)


@dataclass(frozen=True)
class Skewed:
    """Truncated geometric over the SL range, mode at ``min_sl``.

    ``shape`` is the decay rate per SL step; smaller values give a longer,
    flatter tail (mass spread over more unique SLs).
    """

    shape: float
    kind: str = "skewed"

    def pmf(self, min_sl: int, max_sl: int) -> np.ndarray:
        if self.shape <= 0:
            raise ParameterError(f"skewed shape must be > 0, got {self.shape}")
        offsets = np.arange(max_sl - min_sl + 1, dtype=float)
        weights = np.exp(-self.shape * offsets)
        return weights / weights.sum()


@dataclass(frozen=True)
class Bimodal:
    """Equal mixture of two discretized Gaussian bumps, truncated to the range."""

    modes: tuple[int, int]
    widths: tuple[float, float]
    kind: str = "bimodal"

    def pmf(self, min_sl: int, max_sl: int) -> np.ndarray:
        if any(w <= 0 for w in self.widths):
            raise ParameterError(f"bimodal widths must be > 0, got {self.widths}")
        sls = np.arange(min_sl, max_sl + 1, dtype=float)
        weights = np.zeros_like(sls)
        for mode, width in zip(self.modes, self.widths):
            weights += np.exp(-0.5 * ((sls - mode) / width) ** 2)
        total = weights.sum()
        if total <= 0:
            raise ParameterError("bimodal modes/widths leave no mass inside sl_range")
        return weights / total


Distribution = Uniform | Skewed | Bimodal


@dataclass(frozen=True)
class RuntimeModel:
    """Expected iteration runtime ``base_cost_s + per_step_cost_s * sl`` seconds,
    with multiplicative Gaussian noise of relative sigma ``noise_sigma``."""

    base_cost_s: float
    per_step_cost_s: float
    noise_sigma: float = 0.0


@dataclass(frozen=True)
class ConfigSensitivity:
    """Affine runtime multiplier ``alpha + beta * sl`` for one configuration."""

    config_id: str
    alpha: float
    beta: float = 0.0

    def multiplier(self, sl) -> float:
        return self.alpha + self.beta * sl


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic workload across one or more configurations."""

    n_iterations: int
    sl_range: tuple[int, int]
    distribution: Distribution
    runtime_model: RuntimeModel
    configs: tuple[ConfigSensitivity, ...]
    seed: int
    dataset_id: str = "synthetic"
    batch_size: int = 64
    vocab_size: int = 10000

    def __post_init__(self):
        min_sl, max_sl = self.sl_range
        if self.n_iterations < 1:
            raise ParameterError(f"n_iterations must be >= 1, got {self.n_iterations}")
        if min_sl < 1 or max_sl < min_sl:
            raise ParameterError(f"sl_range must satisfy 1 <= min <= max, got {self.sl_range}")
        if self.runtime_model.per_step_cost_s <= 0:
            raise ParameterError("per_step_cost_s must be > 0")
        if self.runtime_model.base_cost_s < 0:
            raise ParameterError("base_cost_s must be >= 0")
        if self.runtime_model.noise_sigma < 0:
            raise ParameterError("noise_sigma must be >= 0")
        if not self.configs:
            raise ParameterError("spec must declare at least one config")
        ids = [c.config_id for c in self.configs]
        if len(set(ids)) != len(ids):
            raise ParameterError(f"duplicate config ids in {ids}")
        for cfg in self.configs:
            if not cfg.config_id:
                raise ParameterError("config_id must be non-empty")
            # Affine in sl: positivity at both range ends covers the whole range.
            if cfg.multiplier(min_sl) <= 0 or cfg.multiplier(max_sl) <= 0:
                raise ParameterError(
                    f"config {cfg.config_id!r}: alpha + beta*sl must stay > 0 over sl_range"
                )

    @property
    def config_ids(self) -> tuple[str, ...]:
        return tuple(c.config_id for c in self.configs)

    def config(self, config_id: str) -> ConfigSensitivity:
        for cfg in self.configs:
            if cfg.config_id == config_id:
                return cfg
        raise ParameterError(f"unknown config {config_id!r}; spec declares {self.config_ids}")


def sl_probabilities(spec: SynthSpec) -> np.ndarray:
    """Target pmf over the integer SLs ``sl_range[0]..sl_range[1]``."""
    return spec.distribution.pmf(*spec.sl_range)


def _draw(spec: SynthSpec) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(spec.seed)
    cdf = np.cumsum(sl_probabilities(spec))
    cdf[-1] = 1.0
    sls = spec.sl_range[0] + np.searchsorted(cdf, rng.random(spec.n_iterations), side="right")
    noise = rng.standard_normal(spec.n_iterations) * spec.runtime_model.noise_sigma
    return sls, np.clip(noise, NOISE_FLOOR, None)


def generate_trace(spec: SynthSpec, config_id: str) -> EpochTrace:
    """Generate the epoch trace of one config. Deterministic in (spec, config_id)."""
    cfg = spec.config(config_id)
    sls, noise = _draw(spec)
    model = spec.runtime_model
    expected = model.base_cost_s + model.per_step_cost_s * sls
    runtimes = expected * cfg.multiplier(sls) * (1.0 + noise)
    records = tuple(
        IterationRecord(index=i, seq_len=int(sls[i]), runtime=float(runtimes[i]))
        for i in range(spec.n_iterations)
    )
    return EpochTrace(
        records=records,
        config_id=config_id,
        batch_size=spec.batch_size,
        vocab_size=spec.vocab_size,
        dataset_id=spec.dataset_id,
    )


def exhaustive_oracle(
    trace: EpochTrace, stat: str = RUNTIME_STAT, kind: Literal["additive", "ratio"] = "additive"
) -> float:
    """Exact whole-trace value of a stat: sum for additive, per-record mean for ratio.

    This is the ground truth every projection error is measured against.
    """
    if stat == RUNTIME_STAT:
        values = [r.runtime for r in trace.records]
    else:
        if stat not in trace.records[0].metrics:
            raise ParameterError(f"trace carries no metric {stat!r}")
        values = [r.metrics[stat] for r in trace.records]
    total = sum(values)
    if kind == "additive":
        return total
    if kind == "ratio":
        return total / len(values)
    raise ParameterError(f"unknown stat kind {kind!r}")


# --- spec files ----------------------------------------------------------------


def parse_spec(text: str) -> SynthSpec:
    """Build a SynthSpec from its JSON form (see ``serialize_spec``)."""
    doc = json.loads(text)
    try:
        dist = _distribution_from(doc["distribution"])
        model = RuntimeModel(
            base_cost_s=float(doc["runtime_model"]["base_cost_s"]),
            per_step_cost_s=float(doc["runtime_model"]["per_step_cost_s"]),
            noise_sigma=float(doc["runtime_model"].get("noise_sigma", 0.0)),
        )
        configs = tuple(
            ConfigSensitivity(
                config_id=str(c["config_id"]),
                alpha=float(c["alpha"]),
                beta=float(c.get("beta", 0.0)),
            )
            for c in doc["configs"]
        )
        return SynthSpec(
            n_iterations=int(doc["n_iterations"]),
            sl_range=(int(doc["sl_range"][0]), int(doc["sl_range"][1])),
            distribution=dist,
            runtime_model=model,
            configs=configs,
            seed=int(doc["seed"]),
            dataset_id=str(doc.get("dataset_id", "synthetic")),
            batch_size=int(doc.get("batch_size", 64)),
            vocab_size=int(doc.get("vocab_size", 10000)),
        )
    except KeyError as exc:
        raise ParameterError(f"spec file missing key {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"malformed spec file: {exc}") from None


def _distribution_from(doc: dict) -> Distribution:
    kind = doc.get("kind")
    if kind == "uniform":
        return Uniform()
    if kind == "skewed":
        return Skewed(shape=float(doc["shape"]))
    if kind == "bimodal":
        return Bimodal(
            modes=(int(doc["modes"][0]), int(doc["modes"][1])),
            widths=(float(doc["widths"][0]), float(doc["widths"][1])),
        )
    raise ParameterError(f"unknown distribution kind {kind!r}")


def serialize_spec(spec: SynthSpec) -> str:
    dist: dict = {"kind": spec.distribution.kind}
    if isinstance(spec.distribution, Skewed):
        dist["shape"] = spec.distribution.shape
    elif isinstance(spec.distribution, Bimodal):
        dist["modes"] = list(spec.distribution.modes)
        dist["widths"] = list(spec.distribution.widths)
    doc = {
        "dataset_id": spec.dataset_id,
        "n_iterations": spec.n_iterations,
        "sl_range": list(spec.sl_range),
        "distribution": dist,
        "runtime_model": {
            "base_cost_s": spec.runtime_model.base_cost_s,
            "per_step_cost_s": spec.runtime_model.per_step_cost_s,
            "noise_sigma": spec.runtime_model.noise_sigma,
        },
        "configs": [
            {"config_id": c.config_id, "alpha": c.alpha, "beta": c.beta} for c in spec.configs
        ],
        "seed": spec.seed,
        "batch_size": spec.batch_size,
        "vocab_size": spec.vocab_size,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def load_spec(path: str | Path) -> SynthSpec:
    return parse_spec(Path(path).read_text(encoding="utf-8"))


def write_spec(spec: SynthSpec, path: str | Path) -> None:
    Path(path).write_text(serialize_spec(spec), encoding="utf-8")


# --- reference workload shapes ---------------------------------------------------


def skewed_preset(seed: int = 7, n_iterations: int = 5000) -> SynthSpec:
    """Speech-style workload: right-skewed SLs over a wide range, so the number
    of unique SLs approaches half the iteration count."""
    return SynthSpec(
        n_iterations=n_iterations,
        sl_range=(50, 8000),
        distribution=Skewed(shape=0.00085),
        runtime_model=RuntimeModel(base_cost_s=0.012, per_step_cost_s=0.00021, noise_sigma=0.015),
        configs=(
            ConfigSensitivity("cfg1", alpha=1.0),
            ConfigSensitivity("cfg2", alpha=1.9),
            ConfigSensitivity("cfg3", alpha=0.5, beta=0.00012),
            ConfigSensitivity("cfg4", alpha=1.3, beta=-0.00005),
            ConfigSensitivity("cfg5", alpha=0.7, beta=0.00006),
        ),
        seed=seed,
        dataset_id="skewed",
        batch_size=64,
        vocab_size=29,
    )


def near_uniform_preset(seed: int = 11, n_iterations: int = 5000) -> SynthSpec:
    """Translation-style workload: near-uniform SLs over a modest range."""
    return SynthSpec(
        n_iterations=n_iterations,
        sl_range=(4, 160),
        distribution=Uniform(),
        runtime_model=RuntimeModel(base_cost_s=0.05, per_step_cost_s=0.0031, noise_sigma=0.015),
        configs=(
            ConfigSensitivity("cfg1", alpha=1.0),
            ConfigSensitivity("cfg2", alpha=1.9),
            ConfigSensitivity("cfg3", alpha=0.5, beta=0.006),
            ConfigSensitivity("cfg4", alpha=1.3, beta=-0.002),
            ConfigSensitivity("cfg5", alpha=0.7, beta=0.003),
        ),
        seed=seed,
        dataset_id="near_uniform",
        batch_size=64,
        vocab_size=32000,
    )


PRESETS = {
    "skewed": skewed_preset,
    "near-uniform": near_uniform_preset,
}
