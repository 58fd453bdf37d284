# %% [markdown]
# Solving D Y . w = f for trigonometric f
#
# Each mode n is divided by i (n . w).  Modes with n . w = 0 are resonant and
# cannot be removed; the solver names the offending mode.

# %%
import numpy as np

from spiralanchor.averaging import ResonanceError, directional_derivative, solve_cohomological
from spiralanchor.perturbation import parse_poly

f = parse_poly("cos(a) + 0.5*sin(2a-b) - 0.2*cos(a+3b)")
w = (np.sqrt(2), 1.0)
Y = solve_cohomological(f, w)
print(Y.to_text())

a, b = np.random.default_rng(0).uniform(-10, 10, (2, 1000))
print("residual", np.abs(directional_derivative(Y, w)(a, b, 0.0) - f(a, b, 0.0)).max())

# %%
try:
    solve_cohomological(parse_poly("cos(a-b)"), (1.0, 1.0))
except ResonanceError as err:
    print("resonant:", err)
