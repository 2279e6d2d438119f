"""Monte Carlo check of the hard-coded covariate means of the regular design.

Averages X over 10**7 generated units (in chunks) and compares with
REGULAR_MEAN_X. Run: python scripts/mean_x_oracle.py [units] [seed]
"""

import sys

import numpy as np

from pppcausal.simulation import REGULAR_MEAN_X, DgpConfig, gen_regular

units = int(sys.argv[1]) if len(sys.argv) > 1 else 10**7
seed = int(sys.argv[2]) if len(sys.argv) > 2 else 20240101
chunk = 10**6
rng = np.random.default_rng(seed)
total = np.zeros(4)
sq = np.zeros(4)
done = 0
while done < units:
    m = min(chunk, units - done)
    X = gen_regular(DgpConfig("regular", m), rng=rng).X
    total += X.sum(axis=0)
    sq += (X**2).sum(axis=0)
    done += m
mean = total / units
se = np.sqrt((sq / units - mean**2) / units)
print("monte carlo:", np.round(mean, 5))
print("std error:  ", np.round(se, 5))
print("hard-coded: ", np.round(REGULAR_MEAN_X, 5))
print("z-scores:   ", np.round((mean - REGULAR_MEAN_X) / se, 2))
