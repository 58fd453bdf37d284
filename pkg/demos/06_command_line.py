# %% [markdown]
# Driving runs from configuration files
#
# The same engines are reachable through ``spiralanchor``.  Config files are
# plain ``key = value`` lines with ``[section]`` headers; unknown keys are
# rejected with their line and column.

# %%
import tempfile
from pathlib import Path

from spiralanchor.cli import run_cli
from spiralanchor.config import ConfigError, load_config_text, preset_text

print(preset_text("exp1"))

# %%
work = Path(tempfile.mkdtemp())
cfg = work / "predict.cfg"
cfg.write_text("""\
mode = predict
[system]
V = 0.5, 0
omega = 1
epsilon = 0.1
[spec]
fpsi1 = -cos(p)*sin(a) - sin(p)*sin(b)
fpsi2 = sin(p)*sin(a) - cos(p)*sin(b)
""")
print("validate exit", run_cli(["validate", str(cfg)]))
print("predict exit", run_cli(["predict", str(cfg)]))

# %%
try:
    load_config_text("mode = ode\n[system]\n  omgea = 1\n")
except ConfigError as err:
    print(err)

# %%
# Full reproduction: spiralanchor repro torus --out torus   (about 10 s)
print("repro exit", run_cli(["repro", "torus", "--out", str(work / "torus")]))
