"""Drive the closed-loop estimator: start from a handful of random-phase
slots, then let it steer the RIS toward its own angle estimates, and
watch accuracy improve as slots accumulate.

Run:  python demos/04_adaptive_phase_control.py
"""

import numpy as np

from pdanm.bench import SimulatedSounder
from pdanm.channel import (
    SystemConfig,
    effective_channel,
    nmse,
    sample_channel,
    snr_to_sigma2,
)
from pdanm.estimators import EstimatorConfig, rpdanm_apc

rng = np.random.default_rng(3)
config = SystemConfig(n_bs=4, n_ue=4, n_ris=16, l_br=2, l_ru=2,
                      sigma2=snr_to_sigma2(1.0, 30.0))
real = sample_channel(config, rng)
eff = effective_channel(config, real)

est = EstimatorConfig(n_bs=config.n_bs, n_ue=config.n_ue,
                      noise_var=config.noise_var,
                      b0=config.n_ris // 2, b_max=config.n_ris)
sounder = SimulatedSounder(eff.h, config.noise_var, np.random.default_rng(1),
                           max_slots=est.b_max)
result = rpdanm_apc(sounder, est, np.random.default_rng(2), h_true=eff.h)

print(f"true cosines: {np.round(np.sort(np.cos(eff.psi_r)), 3)}")
print(f"{'round':>5s} {'slots':>5s} {'angles':>6s} {'nmse':>10s}  eps")
for k, rec in enumerate(result.history):
    print(f"{k:5d} {rec.slots:5d} {str(rec.n_angles):>6s} {rec.nmse:10.2e}  {rec.eps:g}")
print(f"\nfinished: status={result.status}, slots used "
      f"{result.slots_used}/{est.b_max}, final nmse {nmse(result.h_hat, eff.h):.2e}")
print(f"estimated cosines: {np.round(np.sort(np.cos(result.psi_hat)), 3)}")
