#!/usr/bin/env python3
"""Short adversarial training run on the synthetic blob/ring dataset.

Real training uses the preset ceilings (benign 114k, malignant 110k,
mixed 99k iterations); this demo runs 300 iterations at float32 so it
finishes in about a minute and the generator's output statistics
visibly move toward the data.
"""

import tempfile

import numpy as np

from noduleforge.gan import GanConfig, TrainConfig, load_nets, sample, train
from noduleforge.imgproc import denormalize, write_grayscale
from noduleforge.synthetic import make_synthetic_patches

patches = make_synthetic_patches(n_per_class=256, seed=42)
real_mean = np.mean([p.pixels.mean() for p in patches])
print(f"dataset: {len(patches)} patches, mean pixel {real_mean:+.3f}")

config = TrainConfig(class_mode="mixed", max_iterations=300, seed=42,
                     log_every=50, checkpoint_every=0)
out_dir = tempfile.mkdtemp()
result = train(patches, config, out_dir, GanConfig(dtype="float32"))

print("\niteration   loss_d   loss_g   V(D,G)    D(x)    D(G(z))")
for m in result.metrics:
    print(f"{m.iteration:9d}  {m.loss_d:7.4f}  {m.loss_g:7.4f}  "
          f"{m.value_v:7.4f}  {m.d_real_mean:6.3f}  {m.d_fake_mean:6.3f}")

gen0, _, _ = load_nets(result.checkpoints[0])
before = np.mean([p.pixels.mean() for p in sample(gen0, 64, seed=1)])
after = np.mean([p.pixels.mean() for p in sample(result.generator, 64, seed=1)])
print(f"\ngenerated mean pixel: {before:+.3f} at iteration 0, "
      f"{after:+.3f} after {config.iterations} iterations "
      f"(real {real_mean:+.3f})")

grid = np.vstack([np.hstack([p.pixels for p in row])
                  for row in np.array_split(sample(result.generator, 36, seed=2), 6)])
write_grayscale("gan_samples.png", denormalize(grid))
print("wrote gan_samples.png (6x6 grid of generated patches)")
