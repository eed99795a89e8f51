"""
Choosing the CSPE concentration parameter
=========================================

The spike probabilities pi_1 <= pi_2 <= ... come from stick breaking with
Beta(1, alpha) sticks, so E[pi_k] = 1 - (alpha / (1 + alpha))^k.  Fixing the
prior probability that the k-th singular value is switched off pins alpha.
"""

import numpy as np

from cspe import CSPE, elicit_alpha, expected_pi
from cspe.priors import sample_prior_spike_slab

# A 30 x 30 matrix admits K = 14 components.  Ask for a coin flip on whether
# component 13 is in the spike, then for 90%.
K = 14
for q in (0.5, 0.9):
    alpha = elicit_alpha(q, K - 1)
    curve = expected_pi(alpha, np.arange(1, K + 1))
    print(f"q={q}: alpha={alpha:.4f}")
    print("   E[pi_k] =", np.array2string(curve, precision=3, max_line_width=100))

# %%
# The same curve by simulation: draw (upsilon, z, lambda) from the prior and
# average the spike indicators.  Spikes fix the rate at delta = 10; slab rates
# are Gamma(2, 20), heavy enough to let large singular values through.
rng = np.random.default_rng(1)
prior = CSPE(alpha=elicit_alpha(0.9, K - 1))
draws = [sample_prior_spike_slab(prior, K, rng) for _ in range(20_000)]
spike_rate = np.mean([d.spike for d in draws], axis=0)
print("\nsimulated P(spike_k):", np.array2string(spike_rate, precision=3, max_line_width=100))

# %%
# Implied prior on the singular values themselves.  Given the rates,
# omega_k is a sum of exponential increments, so it is ordered by
# construction and the leading values are a priori the largest.
omegas = []
for d in draws[:5000]:
    increments = rng.exponential(1.0 / np.cumsum(d.lam))
    omegas.append(np.cumsum(increments[::-1])[::-1])
omegas = np.array(omegas)
print("prior median of omega_1..omega_5:", np.round(np.median(omegas, axis=0)[:5], 3))
print("prior median of omega_14:       ", round(float(np.median(omegas[:, -1])), 4))
