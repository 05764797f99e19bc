"""The score stays unbiased when any one nuisance is wrong.

On a finite covariate support with a binary mediator every expectation is a
finite sum, so the bias of the score can be computed exactly.
"""

# %% A small discrete law
import numpy as np

from medcross.estimator import DiscreteNuisance, bias_decomposition, bias_bound

p_x = np.array([0.25, 0.45, 0.30])
truth = DiscreteNuisance(
    a1=np.array([0.3, 0.5, 0.7]),
    f1=np.array([[0.2, 0.6], [0.4, 0.5], [0.3, 0.9]]),
    mu=np.arange(12, dtype=float).reshape(3, 2, 2) / 4,
)
wrong = DiscreteNuisance(truth.a1 * 0.8, np.clip(truth.f1 + 0.1, 0, 0.95), truth.mu + 0.5)

# %% Replace one, two or three nuisances by the wrong version
for pattern in ["a", "f", "mu", "a+f", "f+mu", "a+mu", "a+f+mu"]:
    fit = DiscreteNuisance(wrong.a1 if "a" in pattern else truth.a1,
                           wrong.f1 if "f" in pattern else truth.f1,
                           wrong.mu if "mu" in pattern else truth.mu)
    terms = bias_decomposition(truth, fit, p_x, 1, 0)
    bound = bias_bound(truth, fit, p_x, 1, 0).value
    print(f"wrong {pattern:<7} bias {terms.total:+.2e}   second-order bound {bound:.2e}")
