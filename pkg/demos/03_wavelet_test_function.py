"""The Daubechies-6 scaling function and the wavelet-built test function.

Integer shifts of the scaling function sum to one, so every level of the test
function contributes a constant and the function is flat in x.
"""

# %% Tabulate the scaling function and look at a few values
import numpy as np

from medcross.wavelet import HolderSpec, build_scaling_table, eta, eval_scaling

table = build_scaling_table(12)
for t in (0.5, 1.0, 1.5, 2.0, 2.5, 3.0):
    print(f"phi({t}) = {eval_scaling(table, t):+.6f}")

# %% Partition of unity
x = np.linspace(0, 1, 5)
print(sum(eval_scaling(table, x + k) for k in range(5)))

# %% The test function at several smoothness levels
for alpha in (0.6, 1.2, 1.5):
    values = [eta(v, HolderSpec(alpha), table) for v in np.linspace(-1, 1, 5)]
    print(alpha, np.round(values, 9))
