"""
Network configurations
======================

Build each configuration, count its weight layers and parameters, and
trace activation shapes through the full-size default network.
"""
import numpy as np

from adnet import CONFIG_NAMES, Network, build_config, init_params

for name in CONFIG_NAMES:
    spec = build_config(name)
    kernels = [s.kernel for s in spec.layers if s.kind == "conv"]
    print(f"{name:6s} weight layers={spec.num_weight_layers:2d} "
          f"params={spec.num_params():,} conv kernels={kernels}")

# %%
# A forward pass on one blank 224x224 frame. Every maxpool halves the
# spatial size; flatten then feeds 7*7*512 = 25088 values into the head.
spec = build_config("E")
net = Network(spec, init_params(spec, seed=0).params)
shapes = []
probs = net.forward(np.zeros((1, 3, 224, 224), dtype=np.float32), shapes=shapes)
for layer, shape in shapes:
    if layer.startswith(("pool", "flatten", "fc")) and not layer.endswith("relu"):
        print(f"{layer:8s} -> {shape}")
print("output probabilities:", probs)

# %%
# The tiny scale keeps the same topology with 32x32 inputs and narrower
# layers; the tests and the other scripts use it.
tiny = build_config("E", "tiny")
print("tiny E params:", f"{tiny.num_params():,}")
