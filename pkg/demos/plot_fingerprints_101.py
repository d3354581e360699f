"""
Fingerprints and distances
==========================

Build a fingerprint from raw scans and compare it to a query with the
distances the localizers use.
"""

import numpy as np

from srlknn import build_fingerprint, query_fingerprint
from srlknn.metrics import PenaltyParams, euclidean_distance, histogram_distance, penalty_weights

# four scans of three APs; NaN is an AP that was not heard in that scan
scans = np.array([
    [-52.0, -71.0, -80.0],
    [-50.0, -70.0, np.nan],
    [-51.0, -73.0, -82.0],
    [-51.0, -70.0, -81.0],
])
# the unheard reading is replaced by the -100 dBm floor, which pulls AP2 down
fp = build_fingerprint(scans)
print("mean RSSI   ", fp.mean)
print("ranks       ", fp.ranks)
print("pair diffs  ", fp.pair_diffs)

# the histogram keeps the spread of each AP, in 1 dBm bins
values, probs = fp.histogram.probabilities(0)
print("AP0 histogram", dict(zip(values.tolist(), probs.round(2).tolist())))

# a query taken with a single scan
q = query_fingerprint([[-55.0, -70.0, -79.0]])
print("mean distance     ", round(euclidean_distance(q.mean, fp.mean), 3))
print("histogram distance", round(histogram_distance(q.mean, fp.histogram), 3))

# the penalty grows quickly once a point is more than about 2 sigma away
rp = np.array([[0.0, 0.0], [2.0, 0.0], [4.0, 0.0], [8.0, 0.0]])
print("weights", penalty_weights(rp, PenaltyParams((0.0, 0.0), sigma=2.0)).round(3))
