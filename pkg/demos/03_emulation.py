"""
Generative ensemble emulation on synthetic data
================================================

Train a small score network to produce new members from two seeds, then
check the generated ensemble against the population it should match.
Pass a step count as the first argument (default 300; 2000 gives the
quality reported in the README).
"""

import sys
import time

import numpy as np

from seeds import verification as vf
from seeds.network import ScoreNetConfig, build_score_net
from seeds.synthetic import SyntheticSpec, make_dataset
from seeds.tasks import EmulationTaskSpec, generate_ensemble, prepare_training_data, train

steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300

# five members per day at +1 std from the midpoint climatology
spec = SyntheticSpec(C=8, M=5, mu=1.0)
ds = make_dataset(spec, 68)
doys = ds.valid_doys()
train_data = prepare_training_data(ds.forecast[:64], None, ds.climatology, doys[:64])
test_data = prepare_training_data(ds.forecast[64:], None, ds.climatology, doys[64:])

cfg = ScoreNetConfig(C=8, P=8, D=64, layers=(2, 2, 2), fields=("a", "b"), levels=("s", "s"))
model = build_score_net(cfg, seed=0)
task = EmulationTaskSpec(lead=1, K=2, M=5)

t0 = time.time()
result = train(model, train_data, task, steps, batch=32, lr=2e-3, ema=0.995, seed=0)
print("trained %d steps in %.0f s, final loss %.3f" % (steps, time.time() - t0, result.losses[-50:].mean()))

rng = np.random.default_rng(1)
ens = np.stack([generate_ensemble(model, test_data.forecast[d, :2], test_data.clim[d], n=256, rng=rng)
                for d in range(4)])

# anomaly space: the population is N(1, 1) at every point
print("generated mean %.3f  spread %.3f" % (ens.mean(), vf.ensemble_spread(ens).mean()))
truth = test_data.forecast[:, 2]
hist = vf.rank_histogram(ens[:, :19], truth)
print("delta with 19 members: %.2f" % vf.unreliability_delta(hist).global_delta)
