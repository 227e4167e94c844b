"""Generative ensemble emulation and post-processing: examples, training, generation.

Both tasks condition on ``K`` members of an ``M``-member forecast ensemble.
Emulation targets one of the remaining ``M - K`` members; post-processing
targets the forecast remainder with probability ``alpha = (M-K)/(M-K+K')``
and one of ``K'`` reanalysis members otherwise, which makes the sampler
approximate ``alpha p + (1 - alpha) p'``.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch

from .climatology import STD_FLOOR, standardize
from .diffusion import (
    DEFAULT_SCHEDULE,
    LOSS_WEIGHTINGS,
    denoising_loss,
    reverse_sde_sample,
    sample_training_tau,
)
from .errors import NumericalDivergenceError
from .network import ConditionalScore, score_forward

__all__ = [
    "EmulationTaskSpec",
    "PostprocTaskSpec",
    "TrainingExample",
    "TrainingData",
    "mixture_weight",
    "sample_emulation_example",
    "sample_postproc_example",
    "climatology_snapshot",
    "prepare_training_data",
    "sample_batch",
    "TrainResult",
    "train",
    "generate_ensemble",
]


def mixture_weight(M, K, kprime):
    """``alpha = (M - K) / (M - K + K')``."""
    if not M > K >= 1 or kprime < 0:
        raise ValueError(f"need M > K >= 1 and K' >= 0, got M={M}, K={K}, K'={kprime}")
    return (M - K) / (M - K + kprime)


@dataclass(frozen=True)
class EmulationTaskSpec:
    lead: int
    K: int
    M: int

    def __post_init__(self):
        if not 1 <= self.K < self.M:
            raise ValueError(f"need 1 <= K < M, got K={self.K}, M={self.M}")

    kprime = 0


@dataclass(frozen=True)
class PostprocTaskSpec:
    lead: int
    K: int
    M: int
    kprime: int

    def __post_init__(self):
        if not 1 <= self.K < self.M:
            raise ValueError(f"need 1 <= K < M, got K={self.K}, M={self.M}")
        if self.kprime < 0:
            raise ValueError("K' must be non-negative")

    @property
    def alpha(self):
        return mixture_weight(self.M, self.K, self.kprime)


@dataclass(eq=False)
class TrainingExample:
    seeds: np.ndarray
    target: np.ndarray
    seed_index: tuple
    target_index: int
    source: str = "forecast"
    clim: np.ndarray = None
    day: int = None
    lead: int = None


def _draw_members(M, K, rng):
    seed_idx = rng.choice(M, size=K, replace=False)
    rest = np.setdiff1d(np.arange(M), seed_idx)
    return seed_idx, rest


def sample_emulation_example(ensemble, K, rng, **tags):
    """``K`` distinct seeds and one target from the remaining members."""
    ensemble = np.asarray(ensemble)
    M = len(ensemble)
    if M <= K:
        raise ValueError(f"ensemble of {M} members cannot provide K={K} seeds and a target")
    seed_idx, rest = _draw_members(M, K, rng)
    target_idx = int(rng.choice(rest))
    return TrainingExample(
        seeds=ensemble[seed_idx],
        target=ensemble[target_idx],
        seed_index=tuple(int(i) for i in seed_idx),
        target_index=target_idx,
        source="forecast",
        **tags,
    )


def sample_postproc_example(forecast, reanalysis, K, rng, kprime=None, **tags):
    """Seeds from the forecast; target from the forecast remainder or the reanalysis.

    ``kprime`` defaults to the number of reanalysis members supplied; the
    first ``kprime`` members are eligible as targets.
    """
    forecast = np.asarray(forecast)
    reanalysis = np.asarray(reanalysis) if reanalysis is not None else np.empty((0,))
    if kprime is None:
        kprime = len(reanalysis)
    if kprime == 0:
        return sample_emulation_example(forecast, K, rng, **tags)
    if len(reanalysis) < kprime:
        raise ValueError(f"K'={kprime} but only {len(reanalysis)} reanalysis members given")
    M = len(forecast)
    if M <= K:
        raise ValueError(f"ensemble of {M} members cannot provide K={K} seeds and a target")
    seed_idx, rest = _draw_members(M, K, rng)
    alpha = mixture_weight(M, K, kprime)
    if rng.random() < alpha:
        target_idx, source = int(rng.choice(rest)), "forecast"
        target = forecast[target_idx]
    else:
        target_idx = int(rng.integers(kprime))
        target, source = reanalysis[target_idx], "reanalysis"
    return TrainingExample(
        seeds=forecast[seed_idx],
        target=target,
        seed_index=tuple(int(i) for i in seed_idx),
        target_index=target_idx,
        source=source,
        **tags,
    )


def climatology_snapshot(clim_mean):
    """Conditioning input built from the climatological mean ``(q, p)``.

    The mean is standardised per field over the grid so it enters the network
    at unit scale; in anomaly space it would be identically zero.
    """
    c = np.asarray(clim_mean, dtype=float)
    mu = c.mean(axis=-1, keepdims=True)
    sd = np.maximum(c.std(axis=-1, keepdims=True), STD_FLOOR)
    return (c - mu) / sd


@dataclass(eq=False)
class TrainingData:
    """Standardised anomalies grouped by day for one lead time."""

    forecast: np.ndarray  # [day, M, q, p]
    reanalysis: np.ndarray  # [day, K', q, p]
    clim: np.ndarray  # [day, q, p] conditioning snapshots
    lead: int = 0

    @property
    def n_days(self):
        return len(self.forecast)

    @property
    def M(self):
        return self.forecast.shape[1]


def prepare_training_data(forecast, reanalysis, table, doys, lead=0):
    """Standardise raw ensembles with ``table`` at the given day-of-year slots."""
    forecast = np.asarray(forecast, dtype=float)
    if forecast.ndim != 4 or len(forecast) == 0:
        raise ValueError("forecast must be a non-empty [day, M, q, p] array")
    doys = np.asarray(doys)
    fa = standardize(forecast, table, doys)
    if reanalysis is None or np.size(reanalysis) == 0:
        ra = np.empty((len(forecast), 0) + forecast.shape[2:])
    else:
        ra = standardize(np.asarray(reanalysis, dtype=float), table, doys)
    clim = np.stack([climatology_snapshot(m) for m in table.mean_for(doys)])
    return TrainingData(forecast=fa, reanalysis=ra, clim=clim, lead=lead)


def sample_batch(data, task, batch, rng):
    """Draw ``batch`` training examples; returns seeds, targets, clim and sources."""
    kprime = getattr(task, "kprime", 0)
    days = rng.integers(data.n_days, size=batch)
    seeds, targets, sources = [], [], []
    for t in days:
        if kprime:
            ex = sample_postproc_example(data.forecast[t], data.reanalysis[t], task.K, rng, kprime)
        else:
            ex = sample_emulation_example(data.forecast[t], task.K, rng)
        seeds.append(ex.seeds)
        targets.append(ex.target)
        sources.append(ex.source)
    return np.stack(seeds), np.stack(targets), data.clim[days], sources


@dataclass(eq=False)
class TrainResult:
    model: torch.nn.Module
    losses: np.ndarray


def _lr_factor(step, steps, n_warm, decay):
    if step < n_warm:
        return (step + 1) / n_warm
    if decay == "cosine":
        frac = (step - n_warm) / max(1, steps - n_warm)
        return 0.5 * (1 + math.cos(math.pi * frac))
    return 1.0


def train(model, data, task, steps, batch=32, lr=3e-4, warmup=0.01, clip=1.0, seed=0,
          decay="cosine", ema=0.0, weighting="unit", schedule=DEFAULT_SCHEDULE, log_every=0, logger=None):
    """Fit ``model`` by denoising score matching on examples drawn from ``data``.

    Adam with linear warm-up over ``warmup * steps`` steps, then a cosine
    decay to zero (``decay="cosine"``) or a constant rate (``decay=None``),
    and global gradient-norm clipping.  With ``0 < ema < 1`` the returned
    weights are an exponential moving average of the iterates.  ``weighting``
    is passed to :func:`~seeds.diffusion.denoising_loss`.  Returns the
    model (updated in place) and the per-step loss trace.  All randomness
    comes from ``seed``.
    """
    if data.n_days == 0:
        raise ValueError("training data is empty")
    if task.K >= data.M:
        raise ValueError(f"K={task.K} seeds need ensembles with more than K members")
    if decay not in (None, "cosine"):
        raise ValueError(f"unknown learning-rate decay {decay!r}")
    if not 0.0 <= ema < 1.0:
        raise ValueError("ema must lie in [0, 1)")
    if weighting not in LOSS_WEIGHTINGS:
        raise ValueError(f"unknown loss weighting {weighting!r}")
    rng = np.random.default_rng(seed)
    dtype = next(model.parameters()).dtype
    params = [p for p in model.parameters() if p.requires_grad]
    opt = torch.optim.Adam(params, lr=lr)
    n_warm = max(1, int(round(warmup * steps)))
    sched = torch.optim.lr_scheduler.LambdaLR(opt, lambda i: _lr_factor(i, steps, n_warm, decay))
    shadow = [p.detach().clone() for p in params] if ema else None
    losses = np.empty(steps)
    model.train()
    for step in range(steps):
        seeds, targets, clim, _ = sample_batch(data, task, batch, rng)
        seeds_t = torch.as_tensor(seeds, dtype=dtype)
        clim_t = torch.as_tensor(clim, dtype=dtype)
        tau = sample_training_tau(batch, rng, schedule)

        def score_fn(v, sigma):
            return score_forward(model, torch.as_tensor(v, dtype=dtype), seeds_t, clim_t,
                                 torch.as_tensor(sigma, dtype=dtype))

        loss = denoising_loss(score_fn, targets, tau, rng, schedule, weighting)
        if not torch.isfinite(loss):
            raise NumericalDivergenceError(f"non-finite training loss at step {step}", step=step)
        opt.zero_grad(set_to_none=True)
        loss.backward()
        torch.nn.utils.clip_grad_norm_(params, clip)
        opt.step()
        sched.step()
        if shadow is not None:
            with torch.no_grad():
                for s, p in zip(shadow, params):
                    s.lerp_(p, 1.0 - ema)
        losses[step] = loss.item()
        if logger is not None and log_every and (step + 1) % log_every == 0:
            logger.info("step %d loss %.4f", step + 1, losses[max(0, step - log_every + 1): step + 1].mean())
    if shadow is not None:
        with torch.no_grad():
            for s, p in zip(shadow, params):
                p.copy_(s)
    model.eval()
    return TrainResult(model=model, losses=losses)


def generate_ensemble(model, seeds, clim, n=512, steps=256, rng=None, batch_size=512,
                      schedule=DEFAULT_SCHEDULE):
    """Sample ``n`` new members conditioned on ``seeds`` ``(K, q, p)``.

    ``clim`` is the conditioning snapshot (see :func:`climatology_snapshot`).
    The seeds are not part of the returned ``(n, q, p)`` ensemble.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if rng is None:
        rng = np.random.default_rng()
    seeds = np.asarray(seeds, dtype=float)
    score = ConditionalScore(model, seeds, clim)
    shape = seeds.shape[1:]
    out = []
    for start in range(0, n, batch_size):
        size = min(batch_size, n - start)
        out.append(reverse_sde_sample(score, (size,) + shape, steps, rng, schedule))
    return np.concatenate(out)
