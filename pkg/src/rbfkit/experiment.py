"""Monte-Carlo harness: trial populations, beta sweeps, Student-t aggregates.

A trial builds a fresh member set and filter, enumerates the false
positives by scanning the whole remaining universe, then runs the selected
clearing procedure once per beta value on an independent copy of the
filter.  Everything derives deterministically from the master seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .analysis import MetricsReport, metrics_after_clearing
from .filters import BloomFilter, FilterParams, derive_seed
from .retouch import (
    ALGORITHMS,
    ClearingOutcome,
    TroublesomeSet,
    randomized_clearing,
    resolve_outcome,
    run_clearing,
)

DEFAULT_BETAS = (0.01, 0.02, 0.05, 0.10, 0.25, 0.50, 0.75, 1.00)

SCALES = {
    # N, n, m, k; desk keeps the reference ratios (m = 10n, k = 5) while the
    # exhaustive scan stays in CI territory.
    "desk": dict(N=200_000, n=1_000, m=10_000, k=5),
    "paper": dict(N=2_000_000, n=10_000, m=100_000, k=5),
}

# Two-sided 95% Student-t quantiles, df 1..30; 1.960 beyond.
_T_95 = (
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
    2.201, 2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
    2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
)


class ConfigError(ValueError):
    """Experiment configuration violates its invariants."""


class TrialError(RuntimeError):
    """A trial failed; carries the trial index."""

    def __init__(self, trial_index: int, message: str):
        super().__init__(f"trial {trial_index}: {message}")
        self.trial_index = trial_index


@dataclass(frozen=True)
class ExperimentConfig:
    algorithm: str
    N: int = SCALES["desk"]["N"]
    n: int = SCALES["desk"]["n"]
    m: int = SCALES["desk"]["m"]
    k: int = SCALES["desk"]["k"]
    master_seed: int = 1
    betas: tuple[float, ...] = DEFAULT_BETAS
    trials: int = 15

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}")
        if self.n >= self.N:
            raise ConfigError(f"need n < N, got n={self.n} N={self.N}")
        if self.trials < 2:
            raise ConfigError("need at least 2 trials for a confidence interval")
        if not self.betas:
            raise ConfigError("betas must be nonempty")
        for b in self.betas:
            if not 0.0 < b <= 1.0:
                raise ConfigError(f"beta must be in (0, 1], got {b}")
        FilterParams(m=self.m, k=self.k, seed=0)  # validates m/k

    @classmethod
    def at_scale(cls, algorithm: str, scale: str = "desk", **overrides):
        if scale not in SCALES:
            raise ConfigError(f"unknown scale {scale!r}")
        opts = dict(SCALES[scale])
        opts.update(overrides)
        return cls(algorithm=algorithm, **opts)


def student_t_ci(samples, confidence: float = 0.95) -> tuple[float, float]:
    """Mean and two-sided CI half-width from the Student t distribution."""
    if confidence != 0.95:
        raise ValueError("only the embedded 95% quantile table is supported")
    data = np.asarray(list(samples), dtype=float)
    if data.size < 2:
        raise ValueError("need at least 2 samples for a confidence interval")
    df = data.size - 1
    t = _T_95[df - 1] if df <= 30 else 1.960
    mean = float(data.mean())
    sd = float(data.std(ddof=1))
    return mean, t * sd / math.sqrt(data.size)


def trial_seed(master_seed: int, trial_index: int) -> int:
    return derive_seed(master_seed, trial_index, 0xA)


def build_trial_population(
    config: ExperimentConfig, trial_index: int
) -> tuple[np.ndarray, BloomFilter, np.ndarray]:
    """Draw the member set, build its filter, and enumerate false positives.

    Universe keys are the integers [0, N); false positives come from an
    exhaustive membership scan of the non-members.
    """
    rng = np.random.default_rng(trial_seed(config.master_seed, trial_index))
    members = np.sort(
        rng.choice(config.N, size=config.n, replace=False).astype(np.uint64)
    )
    params = FilterParams(
        m=config.m, k=config.k, seed=derive_seed(config.master_seed, 0xF117E2)
    )
    filt = BloomFilter.from_keys(params, members)
    mask = np.ones(config.N, dtype=bool)
    mask[members.astype(np.int64)] = False
    non_members = np.flatnonzero(mask).astype(np.uint64)
    fp_keys = non_members[filt.contains_many(non_members)]
    return members, filt, fp_keys


def sample_troublesome(fp_keys, beta: float, rng) -> TroublesomeSet:
    """Uniform sample of round(beta*|F_P|) false positives, at least one."""
    fp_keys = np.asarray(fp_keys, dtype=np.uint64)
    if fp_keys.size == 0:
        raise ValueError("false positive set is empty, nothing to sample")
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must be in (0, 1], got {beta}")
    if beta == 1.0:
        return TroublesomeSet.from_keys(fp_keys.tolist())
    size = max(1, int(math.floor(beta * fp_keys.size + 0.5)))
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    picked = rng.choice(fp_keys, size=size, replace=False)
    return TroublesomeSet.from_keys(picked.tolist())


@dataclass(frozen=True)
class BetaRecord:
    """One (trial, beta) observation."""

    beta: float
    n_troublesome: int
    outcome: ClearingOutcome
    metrics: MetricsReport


@dataclass(frozen=True)
class TrialResult:
    trial_index: int
    n_fp: int
    records: tuple[BetaRecord, ...]


@dataclass(frozen=True)
class BetaAggregate:
    """Per-beta means with 95% CI half-widths over the trials."""

    beta: float
    mean_b: float
    ci_b: float
    mean_bp: float
    ci_bp: float
    mean_total_removed: float
    ci_total_removed: float
    mean_ap: float
    ci_ap: float
    mean_chi: Optional[float]
    ci_chi: Optional[float]
    chi_defined_trials: int
    mean_bits_reset: float
    ci_bits_reset: float


@dataclass(frozen=True)
class AggregateResult:
    algorithm: str
    config: ExperimentConfig
    rows: tuple[BetaAggregate, ...]
    trials: tuple[TrialResult, ...] = field(repr=False, default=())

    def row(self, beta: float) -> BetaAggregate:
        for r in self.rows:
            if r.beta == beta:
                return r
        raise KeyError(f"no aggregate row for beta={beta}")


_ALGO_CODE = {name: i + 1 for i, name in enumerate(sorted(ALGORITHMS))}


def _clearing_rng(config, trial_index, beta_index, algorithm):
    return np.random.default_rng(
        derive_seed(
            config.master_seed, trial_index, beta_index, _ALGO_CODE[algorithm], 0xC
        )
    )


def _sampling_rng(config, trial_index, beta_index):
    # Independent of the algorithm so paired runs share troublesome sets.
    return np.random.default_rng(
        derive_seed(config.master_seed, trial_index, beta_index, 0xB)
    )


def run_comparison(
    config: ExperimentConfig, algorithms: tuple[str, ...] | list[str]
) -> dict[str, AggregateResult]:
    """Run several algorithms over shared per-trial populations.

    Sharing populations and troublesome sets makes cross-algorithm
    comparisons paired; each algorithm still clears its own fresh copy of
    the trial filter per beta.
    """
    for algo in algorithms:
        if algo not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {algo!r}")
    per_algo_trials: dict[str, list[TrialResult]] = {a: [] for a in algorithms}
    for t in range(config.trials):
        try:
            members, filt, fp_keys = build_trial_population(config, t)
            n_non = config.N - config.n
            for algo in algorithms:
                records = []
                for bi, beta in enumerate(config.betas):
                    work = filt.copy()
                    if algo == "randomized":
                        troublesome = TroublesomeSet(keys=())
                        s = max(1, int(math.floor(beta * fp_keys.size + 0.5)))
                        outcome = randomized_clearing(
                            work, s, _clearing_rng(config, t, bi, algo)
                        )
                    else:
                        troublesome = sample_troublesome(
                            fp_keys, beta, _sampling_rng(config, t, bi)
                        )
                        outcome = run_clearing(
                            algo,
                            work,
                            troublesome=troublesome,
                            members=members,
                            rng=_clearing_rng(config, t, bi, algo),
                            fp_universe=fp_keys,
                        )
                    outcome = resolve_outcome(
                        outcome, work, troublesome, fp_keys, members
                    )
                    metrics = metrics_after_clearing(
                        work, members, fp_keys, n_non
                    ).with_beta(beta)
                    records.append(
                        BetaRecord(
                            beta=beta,
                            n_troublesome=len(troublesome),
                            outcome=outcome,
                            metrics=metrics,
                        )
                    )
                per_algo_trials[algo].append(
                    TrialResult(
                        trial_index=t, n_fp=int(fp_keys.size), records=tuple(records)
                    )
                )
        except (ConfigError, TrialError):
            raise
        except Exception as exc:  # attach the trial index
            raise TrialError(t, str(exc)) from exc
    return {
        algo: AggregateResult(
            algorithm=algo,
            config=config,
            rows=_aggregate(config, per_algo_trials[algo]),
            trials=tuple(per_algo_trials[algo]),
        )
        for algo in algorithms
    }


def run_experiment(config: ExperimentConfig) -> AggregateResult:
    """Full run of one clearing algorithm across the configured betas."""
    return run_comparison(config, (config.algorithm,))[config.algorithm]


def _aggregate(config, trials) -> tuple[BetaAggregate, ...]:
    rows = []
    for bi, beta in enumerate(config.betas):
        recs = [tr.records[bi] for tr in trials]
        b_sizes = [r.n_troublesome for r in recs]
        side = [r.outcome.side_removed for r in recs]
        total = [
            r.outcome.removed_troublesome + r.outcome.side_removed for r in recs
        ]
        gen_fn = [r.outcome.generated_fn for r in recs]
        bits = [r.outcome.bits_reset for r in recs]
        chis = [r.metrics.chi for r in recs if r.metrics.chi is not None]
        mean_chi = ci_chi = None
        if len(chis) >= 2:
            mean_chi, ci_chi = student_t_ci(chis)
        elif len(chis) == 1:
            mean_chi, ci_chi = chis[0], 0.0
        mb, cb = student_t_ci(b_sizes)
        mbp, cbp = student_t_ci(side)
        mt, ct = student_t_ci(total)
        ma, ca = student_t_ci(gen_fn)
        mbr, cbr = student_t_ci(bits)
        rows.append(
            BetaAggregate(
                beta=beta,
                mean_b=mb,
                ci_b=cb,
                mean_bp=mbp,
                ci_bp=cbp,
                mean_total_removed=mt,
                ci_total_removed=ct,
                mean_ap=ma,
                ci_ap=ca,
                mean_chi=mean_chi,
                ci_chi=ci_chi,
                chi_defined_trials=len(chis),
                mean_bits_reset=mbr,
                ci_bits_reset=cbr,
            )
        )
    return tuple(rows)


def randomized_neutrality(
    s_values,
    scale: str = "desk",
    master_seed: int = 1,
    trials: int = 15,
    reps_per_trial: int = 24,
) -> dict[int, float]:
    """Mean chi per s for randomized clearing, one pooled chi per trial.

    Each trial pools the removed/generated proportions over several
    independent clearings of its filter before taking the ratio; a single
    clearing would make the per-trial ratio estimate far too noisy at
    small s.
    """
    config = ExperimentConfig.at_scale(
        "randomized", scale, master_seed=master_seed, trials=trials
    )
    out = {}
    for s in s_values:
        chis = []
        for t in range(trials):
            members, filt, fp_keys = build_trial_population(config, t)
            sum_dfp = sum_dfn = 0.0
            for rep in range(reps_per_trial):
                work = filt.copy()
                rng = np.random.default_rng(
                    derive_seed(master_seed, t, rep, s, 0xD)
                )
                randomized_clearing(work, s, rng)
                rep_metrics = metrics_after_clearing(
                    work, members, fp_keys, config.N - config.n
                )
                sum_dfp += rep_metrics.delta_fp
                sum_dfn += rep_metrics.delta_fn
            chis.append(sum_dfp / sum_dfn)
        out[s] = float(np.mean(chis))
    return out
