"""How much signal survives at each diffusion step."""
import numpy as np

from motionstitch.schedule import add_noise, make_schedule

s = make_schedule(300)
for t in (1, 50, 100, 200, 300):
    print(f"t={t:3d}  alpha_bar={s.alpha_bar[t - 1]:.4f}  signal scale={np.sqrt(s.alpha_bar[t - 1]):.3f}")

x0 = np.ones(4)
eps = np.random.default_rng(0).standard_normal(4)
x_T = add_noise(x0, 300, eps, s)
# At the last step the sample is still about a fifth signal; the rest is noise.
print("x_300:", np.round(x_T, 3), " noise part:", np.round(np.sqrt(1 - s.alpha_bar[-1]) * eps, 3))
