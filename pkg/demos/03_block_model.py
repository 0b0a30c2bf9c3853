"""
Coarse simulations of a buried conductor
========================================

A 0.28 S/m prism sits in a 4.5e-3 S/m host under 1e-8 S/m air. The fine
mesh has 50 m cells; the coarse meshes have 200 m cells and carry either an
average of the fine cells or the upscaled tensor.

This runs the full comparison and takes several minutes.
"""
# %%
from emupscale.forward3d import LoopSource, ReceiverGrid, compare_coarse_models
from emupscale.mesh import build_uniform_mesh
from emupscale.synth import BlockModelSpec, Prism, block_model

# %%
mesh = build_uniform_mesh((32, 32, 32), (50.0, 50.0, 50.0))
spec = BlockModelSpec(background=4.5e-3, prisms=(Prism((500, 600, 900), (1000, 950, 1150), 0.28),), surface=1200.0)
model = block_model(mesh, spec)
source = LoopSource((200, 1400), (400, 1200), 1200.0)
receivers = ReceiverGrid.regular((300, 1300), (500, 1100), 1225.0, 50.0)

# %% [markdown]
# The error measure is the largest secondary-field misfit over all
# receivers, relative to the largest secondary field.

# %%
rows, reports, _ = compare_coarse_models(mesh, model, 4, source, receivers, (1.0, 20.0), paddings=(8,), surface=1200.0)
for r in rows:
    print(f"{r['frequency']:5.0f} Hz  {r['model']:>12}  {r['delta_B_percent']:7.2f} %")

# %%
for (f, p), res in reports.items():
    fitted = [rep for rep in res.reports if rep.iterations > 0]
    print(f"{f:g} Hz, padding {p}: {len(fitted)} of {len(res.reports)} coarse cells needed a fit")
