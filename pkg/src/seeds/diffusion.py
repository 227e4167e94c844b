r"""Variance-exploding diffusion: schedule, noising, loss and reverse-SDE sampling.

The forward process is :math:`dV = f(\tau) V d\tau + g(\tau) dW` with
:math:`f \equiv 0` and :math:`g(\tau) = 100^\tau`, so the scale is
:math:`s_\tau \equiv 1` and the noise level solves
:math:`2\dot\sigma\sigma = g^2`, giving

.. math:: \sigma_\tau^2 = \frac{100^{2\tau} - 1}{2 \ln 100}.

Sign convention: with :math:`v_\tau = v_0 + \sigma_\tau z`, the score of the
perturbation kernel is :math:`-z/\sigma_\tau`.  A network is trained so that
its *normalised* score :math:`\sigma_\tau s_\theta` matches :math:`-z`, and the
sampler uses :math:`s_\theta` unchanged as the score.
"""

import math

import numpy as np

from .errors import NumericalDivergenceError

__all__ = [
    "DiffusionSchedule",
    "DEFAULT_SCHEDULE",
    "sigma_of",
    "tau_of_sigma",
    "perturb",
    "NoisedSample",
    "sample_training_tau",
    "denoising_loss",
    "LOSS_WEIGHTINGS",
    "analytic_gaussian_score",
    "reverse_sde_sample",
]


class DiffusionSchedule:
    """Schedule with ``f = 0`` and ``g(tau) = base**tau`` on ``tau in [0, 1]``."""

    terminal_time = 1.0

    def __init__(self, base=100.0):
        if base <= 1.0:
            raise ValueError("schedule base must exceed 1")
        self.base = float(base)
        self._log_base = math.log(self.base)

    @staticmethod
    def _check_tau(tau):
        tau = np.asarray(tau, dtype=float)
        if np.any(~np.isfinite(tau)) or np.any(tau < 0.0) or np.any(tau > 1.0):
            raise ValueError(f"diffusion time must lie in [0, 1], got {tau}")
        return tau

    def drift(self, tau):
        return np.zeros_like(np.asarray(tau, dtype=float))

    def scale(self, tau):
        return np.ones_like(np.asarray(tau, dtype=float))

    def diffusion(self, tau):
        return self.base ** np.asarray(tau, dtype=float)

    def sigma(self, tau):
        tau = self._check_tau(tau)
        # expm1 keeps precision near tau = 0
        return np.sqrt(np.expm1(2.0 * self._log_base * tau) / (2.0 * self._log_base))

    def tau_of_sigma(self, sigma):
        sigma = np.asarray(sigma, dtype=float)
        if np.any(sigma < 0):
            raise ValueError("noise level must be non-negative")
        return np.log1p(2.0 * self._log_base * sigma**2) / (2.0 * self._log_base)


DEFAULT_SCHEDULE = DiffusionSchedule()
LOSS_WEIGHTINGS = ("unit", "edm")


def sigma_of(tau, schedule=DEFAULT_SCHEDULE):
    """Noise level at diffusion time ``tau``; ``sigma_of(1) ~= 32.949``."""
    out = schedule.sigma(tau)
    return float(out) if out.ndim == 0 else out


def tau_of_sigma(sigma, schedule=DEFAULT_SCHEDULE):
    """Inverse of :func:`sigma_of`."""
    out = schedule.tau_of_sigma(sigma)
    return float(out) if out.ndim == 0 else out


class NoisedSample:
    """A clean sample, its noised version and the unit noise that was added."""

    __slots__ = ("v0", "v_tau", "z", "tau", "sigma")

    def __init__(self, v0, v_tau, z, tau, sigma):
        self.v0 = v0
        self.v_tau = v_tau
        self.z = z
        self.tau = tau
        self.sigma = sigma


def _per_sample(x, ndim):
    # reshape a (B,) vector so it broadcasts against a (B, ...) batch
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x
    return x.reshape(x.shape + (1,) * (ndim - x.ndim))


def perturb(v0, tau, rng, schedule=DEFAULT_SCHEDULE):
    """Draw ``v_tau = v0 + sigma_tau * z`` with ``z ~ N(0, I)``.

    ``tau`` may be a scalar or one value per leading-axis sample of ``v0``.
    """
    v0 = np.asarray(v0, dtype=float)
    sigma = schedule.sigma(tau)
    z = rng.standard_normal(v0.shape)
    v_tau = v0 + _per_sample(sigma, v0.ndim) * z
    return NoisedSample(v0, v_tau, z, np.asarray(tau, dtype=float), sigma)


def sample_training_tau(n, rng, schedule=DEFAULT_SCHEDULE, tau_min=1e-3):
    """Diffusion times whose noise levels are log-uniform in ``[sigma(tau_min), sigma(1)]``."""
    lo = math.log(float(schedule.sigma(tau_min)))
    hi = math.log(float(schedule.sigma(schedule.terminal_time)))
    sigma = np.exp(rng.uniform(lo, hi, size=n))
    return np.clip(schedule.tau_of_sigma(sigma), 0.0, 1.0)


def denoising_loss(score_fn, v0, tau, rng, schedule=DEFAULT_SCHEDULE, weighting="unit"):
    """Mean squared error between the normalised score and ``-z``.

    ``score_fn(v_tau, sigma)`` returns the (unnormalised) score.  If it
    returns a torch tensor, the loss is a differentiable torch scalar.
    ``weighting="unit"`` weights every noise level equally;
    ``weighting="edm"`` multiplies each sample by ``1 + sigma**2``, which is
    the unit-variance target weighting for data of unit scale.
    """
    if weighting not in LOSS_WEIGHTINGS:
        raise ValueError(f"unknown loss weighting {weighting!r}")
    sample = perturb(v0, tau, rng, schedule)
    score = score_fn(sample.v_tau, sample.sigma)
    if tuple(score.shape) != sample.z.shape:
        raise ValueError(f"score shape {tuple(score.shape)} does not match data {sample.z.shape}")
    sigma = _per_sample(sample.sigma, sample.z.ndim)
    weight = 1.0 + sigma**2 if weighting == "edm" else np.ones_like(sigma)
    if isinstance(score, np.ndarray):
        return float(np.mean(weight * (sigma * score + sample.z) ** 2))
    import torch

    z = torch.as_tensor(sample.z, dtype=score.dtype)
    sig = torch.as_tensor(sigma, dtype=score.dtype)
    w = torch.as_tensor(weight, dtype=score.dtype)
    return torch.mean(w * (sig * score + z) ** 2)


def analytic_gaussian_score(v, tau, mu, sigma_d, schedule=DEFAULT_SCHEDULE):
    """Score of ``N(mu, sigma_d**2)`` data after noising to time ``tau``."""
    sigma_d = np.asarray(sigma_d, dtype=float)
    if np.any(sigma_d <= 0):
        raise ValueError("data standard deviation must be positive")
    sigma = schedule.sigma(tau)
    return -(np.asarray(v, dtype=float) - mu) / (sigma_d**2 + sigma**2)


def reverse_sde_sample(score_fn, shape, steps=256, rng=None, schedule=DEFAULT_SCHEDULE):
    """Integrate the reverse-time SDE from ``tau = 1`` to ``0`` by Euler-Maruyama.

    Parameters
    ----------
    score_fn : callable
        ``score_fn(v, tau) -> score`` with ``v`` of shape ``shape``.
    shape : tuple of int
        Shape of the sampled batch.
    steps : int
        Number of uniform steps in diffusion time.
    rng : numpy.random.Generator
        Source of the initial draw and of every increment.

    Returns
    -------
    ndarray
        The state at ``tau = 0``.
    """
    if steps < 1:
        raise ValueError("steps must be at least 1")
    if rng is None:
        rng = np.random.default_rng()
    t_end = schedule.terminal_time
    v = float(schedule.sigma(t_end)) * rng.standard_normal(shape)
    times = np.linspace(t_end, 0.0, steps + 1)
    for n in range(steps):
        tau, h = times[n], times[n] - times[n + 1]
        g = float(schedule.diffusion(tau))
        f = float(schedule.drift(tau))
        score = np.asarray(score_fn(v, tau), dtype=float)
        v = v + (g * g * score - f * v) * h + g * math.sqrt(h) * rng.standard_normal(shape)
        if not np.all(np.isfinite(v)):
            raise NumericalDivergenceError(
                f"reverse SDE state became non-finite at step {n} (tau={tau:.6g})", step=n
            )
    return v
