"""Estimate the five mediation effects on a simulated sample.

Run cell by cell in an editor that understands ``# %%`` markers, or as a script.
"""

# %% Draw a sample from the first synthetic scenario
from medcross import Case, LinearLearner, OracleLearner, ScenarioSpec, crossfit, estimate, generate
from medcross.synth import TRUE_EFFECTS

table, oracle = generate(ScenarioSpec(Case.CASE1, n=2000, seed=11))
print(f"{table.n} rows, {table.p} covariates, treated share {table.d.mean():.2f}")

# %% Cross-fit with the true nuisances, then with a linear baseline
for learner in (OracleLearner(oracle), LinearLearner()):
    scores = crossfit(table, V=5, kind=learner, seed=0)
    print(f"\n{learner.name}")
    for rep in estimate(scores):
        print(f"  {rep.effect.value:<6} {rep.estimate:+.3f}  95% CI [{rep.ci_low:+.3f}, {rep.ci_high:+.3f}]"
              f"  truth {TRUE_EFFECTS[rep.effect]:+.2f}")

# %% Out-of-fold nuisance losses show how well each regression was learned
print({k: round(v, 3) for k, v in scores.nuisance_loss.items()})
