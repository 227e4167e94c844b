"""
Verification metrics and zonal spectra
======================================

Score a deliberately under-dispersed ensemble against a calibrated one and
look at the spectrum of a single zonal wave.
"""

import numpy as np

from seeds import verification as vf
from seeds.geo_grid import build_cubed_sphere
from seeds.spectra import field_spectrum

rng = np.random.default_rng(0)
truth_and_members = rng.standard_normal((200, 21, 1, 50))
truth = truth_and_members[:, 0]
good = truth_and_members[:, 1:]
narrow = 0.5 * good

for name, ens in (("calibrated", good), ("narrow", narrow)):
    mean = vf.ensemble_mean(ens)
    r = vf.unreliability_delta(vf.rank_histogram(ens, truth))
    print("%-10s rmse %.3f  crps %.3f  delta %.2f" % (
        name, vf.rmse(mean, truth).mean(), vf.crps(ens, truth).mean(), r.global_delta))

# event probabilities for exceeding +1 std
event = vf.BinaryEventSpec(1.0)
zeros, ones = np.zeros_like(truth), np.ones_like(truth)
print("brier calibrated %.3f, narrow %.3f" % (
    vf.brier(good, truth, event, zeros, ones).mean(), vf.brier(narrow, truth, event, zeros, ones).mean()))

cube = build_cubed_sphere(24)
spec = field_spectrum(np.cos(4 * cube.lon), cube)
print("energy share at k=4: %.4f" % (spec.energy[4] / spec.energy[1:].sum()))
