"""
The reverse-time sampler against a known answer
================================================

For Gaussian data the score of every noised marginal is known in closed
form, so the sampler can be checked without any training.
"""

import numpy as np

from seeds.diffusion import DEFAULT_SCHEDULE, analytic_gaussian_score, reverse_sde_sample, sigma_of

print("sigma(1) = %.3f" % sigma_of(1.0))


def score(v, tau):
    return analytic_gaussian_score(v, tau, 0.0, 1.0)


rng = np.random.default_rng(0)
for steps in (64, 128, 256, 512):
    x = reverse_sde_sample(score, (10_000,), steps, rng)
    print("%4d steps: mean %+.4f  std %.4f" % (steps, x.mean(), x.std()))

# the chain is linear, so its variance follows a scalar recursion
def chain_std(steps):
    t = np.linspace(1, 0, steps + 1)
    var = sigma_of(1.0) ** 2
    for n in range(steps):
        h = t[n] - t[n + 1]
        g2 = DEFAULT_SCHEDULE.diffusion(t[n]) ** 2
        a = 1 - g2 * h / (1 + sigma_of(t[n]) ** 2)
        var = a * a * var + g2 * h
    return np.sqrt(var)


for steps in (64, 128, 256, 512, 1024):
    print("%4d steps: exact chain std error %.2e" % (steps, abs(chain_std(steps) - 1)))
