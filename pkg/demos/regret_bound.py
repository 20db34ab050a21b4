"""Compare one ebmUCB run with the high-probability regret bound.

The bound is loose by orders of magnitude; it is a sanity check that the
realized regret sits under it, not a prediction.
"""
from ebmbandit import EnvSpec, PolicyConfig, RunConfig, run_episode, theoretical_bound_ucb
from ebmbandit.diagnostics import bound_constants, bound_params_from_run
from ebmbandit.harness import build_env

cfg = RunConfig(env=EnvSpec(), policy=PolicyConfig(kind="ebmUCB"), horizon=1000, seeds=(0,))
env = build_env(cfg, 0)
trace = run_episode(env, cfg, 0)

params = bound_params_from_run(env, trace, lam=cfg.policy.lam, delta=0.05)
print("constants c1..c4:", [round(float(c), 3) for c in bound_constants(params)])
print(f"x_max={params.x_max:.2f}  b_max={params.b_max:.2f}  "
      f"lambda_1={params.lambda_1:.3f}  lambda_d={params.lambda_d:.3f}")
print(f"realized regret {trace.cumulative[-1]:.1f}")
print(f"bound           {theoretical_bound_ucb(params):.4g}")
