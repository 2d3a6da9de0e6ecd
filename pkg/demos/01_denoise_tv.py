"""TV denoising walkthrough: certified rate, observed rate, error bound.

Generates a noisy piecewise-constant signal, solves the denoising problem
with the primal-dual iteration, and prints the quantities a practitioner
cares about: the certified contraction margin, the observed contraction
factor, and the a posteriori distance bound implied by the last step.

Run:  python3 demos/01_denoise_tv.py
"""

import os

import numpy as np

import papc

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

n, noise_sd, lam = 256, 0.03, 0.05
clean, noisy = papc.synth_signal("blocks", n, noise_sd, seed=0)
print(f"signal: n={n}, noise sd {noise_sd}, regularization weight {lam}")

prob = papc.build_tv_denoise(papc.TvDenoiseSpec(noisy, lam))
sb = prob.spectral
print(f"coupling Gram spectrum: [{sb.lambda_min:.3e}, {sb.lambda_max:.6f}] "
      f"(certified={sb.certified})")

# a practical step size; sigma follows the coupling rule automatically
cfg = papc.make_config(prob, tau=0.05, max_iters=50000, stop_tol=1e-10,
                       record_trace=True)
delta = papc.delta_bound(cfg.alpha, cfg.tau, cfg.sigma, prob.f.lipschitz_grad,
                         prob.f.pqs_constant, sb.lambda_min)
print(f"steps: tau={cfg.tau} sigma={cfg.sigma:.4f} alpha={cfg.alpha}")
print(f"certified per-step contraction of ||u - u*||_H^2: {1 / (1 + delta):.8f} "
      f"(worst case; the observed factor is usually far smaller)")

state, report = papc.solve(prob, cfg)
print(f"solved in {report.iterations_run} iterations ({report.stop_reason}); "
      f"observed c = {report.estimated_rate_c:.6f}")
print(f"a posteriori distance bound: {report.aposteriori_bound:.3e}")
print(f"rms error vs clean: noisy {np.std(noisy - clean):.4f} -> "
      f"denoised {np.std(state.x - clean):.4f}")

papc.write_signal_csv(os.path.join(OUT, "tv_clean.csv"), clean)
papc.write_signal_csv(os.path.join(OUT, "tv_noisy.csv"), noisy)
papc.write_signal_csv(os.path.join(OUT, "tv_denoised.csv"), state.x)
papc.write_trace_csv(os.path.join(OUT, "tv_trace.csv"), report.trace)
print(f"wrote tv_*.csv under {OUT}")
