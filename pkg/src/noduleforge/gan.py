"""Generator/discriminator pair, adversarial losses and the training loop.

The generator projects a latent vector to a 7x7 feature map and
upsamples through 3 transposed convolutions (batch norm + ReLU between,
tanh on the last) to a single-channel 56x56 image.  The discriminator
downsamples through 2 strided convolutions with leaky ReLU into a
3136-wide fully connected head with a sigmoid probability output.

Training alternates one discriminator update (a real and a fake
minibatch) with one generator update per iteration, both on Adam with
the preset learning rates (1e-4 discriminator, 2e-4 generator, batch
64).  The generator minimizes the non-saturating objective
-log D(G(z)); the minimax value function is still computed and logged
every log_every iterations so the adversarial game remains observable.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .dataset import ImagePatch, class_subset
from .nn import ops
from .nn.adam import Adam
from .nn.checkpoint import load_checkpoint, save_checkpoint
from .nn.layers import (batchnorm_params, conv2d_params,
                        conv2d_transpose_params, fully_connected_params)
from .nn.tensor import Tape, Tensor, backward

PROB_EPS = 1e-7
LEAKY_ALPHA = 0.2

# early-stopping ceilings per class mode; training stops there unless the
# caller overrides max_iterations
ITERATION_CEILINGS = {"benign": 114_000, "malignant": 110_000, "mixed": 99_000}

DEFAULT_BATCH_SIZE = 64
DEFAULT_LR_D = 1e-4
DEFAULT_LR_G = 2e-4


@dataclass
class GanConfig:
    """Architecture settings; defaults reproduce the 56x56 pipeline."""

    z_dim: int = 100
    gen_channels: tuple = (64, 32, 16)
    disc_channels: tuple = (8, 16)
    image_size: int = 56
    kernel: int = 4
    stride: int = 2
    padding: int = 1
    head_features: int = 3136
    init_std: float = 0.02
    dtype: str = "float64"

    def np_dtype(self):
        return np.dtype(self.dtype)


def _upsampled(size, kernel, stride, padding):
    return (size - 1) * stride - 2 * padding + kernel


def _downsampled(size, kernel, stride, padding):
    return (size + 2 * padding - kernel) // stride + 1


class GeneratorNet:
    """Latent projection + 3 transposed-conv upsampling layers, tanh output."""

    def __init__(self, config: GanConfig, rng=None, class_mode: str = "mixed"):
        if config.z_dim < 1:
            raise ValueError(f"z_dim must be >= 1, got {config.z_dim}")
        if len(config.gen_channels) != 3 or any(c < 1 for c in config.gen_channels):
            raise ValueError(f"need 3 positive generator channel widths, "
                             f"got {config.gen_channels}")
        size = config.image_size
        for _ in range(3):
            prev = size
            # invert the upsampling arithmetic layer by layer
            if (size + 2 * config.padding - config.kernel) % config.stride != 0:
                raise ValueError(
                    f"generator cannot reach {config.image_size}x{config.image_size} "
                    f"in 3 layers with kernel {config.kernel}, stride {config.stride}, "
                    f"pad {config.padding}: stuck at {prev}")
            size = (size + 2 * config.padding - config.kernel) // config.stride + 1
            if size < 1:
                raise ValueError(
                    f"generator base size collapsed below 1 from {config.image_size}")
        if _upsampled(_upsampled(_upsampled(
                size, config.kernel, config.stride, config.padding),
                config.kernel, config.stride, config.padding),
                config.kernel, config.stride, config.padding) != config.image_size:
            raise ValueError(
                f"kernel {config.kernel}/stride {config.stride}/pad {config.padding} "
                f"cannot reach {config.image_size}x{config.image_size} in 3 layers")

        self.config = config
        self.class_mode = class_mode
        self.base_size = size
        dtype = config.np_dtype()
        c0, c1, c2 = config.gen_channels
        self.proj = fully_connected_params(config.z_dim, c0 * size * size,
                                           config.init_std, rng, dtype)
        self.bn0 = batchnorm_params(c0, dtype=dtype)
        self.ct1 = conv2d_transpose_params(c0, c1, config.kernel, config.stride,
                                           config.padding, config.init_std, rng, dtype)
        self.bn1 = batchnorm_params(c1, dtype=dtype)
        self.ct2 = conv2d_transpose_params(c1, c2, config.kernel, config.stride,
                                           config.padding, config.init_std, rng, dtype)
        self.bn2 = batchnorm_params(c2, dtype=dtype)
        self.ct3 = conv2d_transpose_params(c2, 1, config.kernel, config.stride,
                                           config.padding, config.init_std, rng, dtype)

    def forward(self, z: Tensor, tape: Tape | None = None,
                training: bool = False) -> Tensor:
        n = z.shape[0]
        c0 = self.config.gen_channels[0]
        h = ops.fully_connected_forward(z, self.proj, tape)
        h = ops.reshape(h, (n, c0, self.base_size, self.base_size), tape)
        h = ops.relu(ops.batchnorm_forward(h, self.bn0, training, tape), tape)
        h = ops.conv2d_transpose_forward(h, self.ct1, tape)
        h = ops.relu(ops.batchnorm_forward(h, self.bn1, training, tape), tape)
        h = ops.conv2d_transpose_forward(h, self.ct2, tape)
        h = ops.relu(ops.batchnorm_forward(h, self.bn2, training, tape), tape)
        return ops.tanh(ops.conv2d_transpose_forward(h, self.ct3, tape), tape)

    def named_parameters(self):
        out = {}
        for name, layer in (("proj", self.proj), ("bn0", self.bn0),
                            ("ct1", self.ct1), ("bn1", self.bn1),
                            ("ct2", self.ct2), ("bn2", self.bn2),
                            ("ct3", self.ct3)):
            out[f"{name}.w"] = layer.weights
            out[f"{name}.b"] = layer.bias
        return out

    def named_state(self):
        state = {k: t.data for k, t in self.named_parameters().items()}
        for name, layer in (("bn0", self.bn0), ("bn1", self.bn1), ("bn2", self.bn2)):
            state[f"{name}.running_mean"] = layer.running_mean.data
            state[f"{name}.running_var"] = layer.running_var.data
        return state

    def load_state(self, state: dict):
        _load_state_into(self, state)


class DiscriminatorNet:
    """2 strided convolutions with leaky ReLU into a sigmoid head."""

    def __init__(self, config: GanConfig, rng=None):
        if len(config.disc_channels) != 2 or any(c < 1 for c in config.disc_channels):
            raise ValueError(f"need 2 positive discriminator channel widths, "
                             f"got {config.disc_channels}")
        size = config.image_size
        for _ in range(2):
            size = _downsampled(size, config.kernel, config.stride, config.padding)
            if size < 1:
                raise ValueError("discriminator spatial size collapsed below 1")
        flat = config.disc_channels[1] * size * size
        if flat != config.head_features:
            raise ValueError(
                f"flatten length {flat} (= {config.disc_channels[1]} x {size} x {size}) "
                f"does not match the configured {config.head_features}-wide head")

        self.config = config
        self.flat_size = flat
        self.feat_hw = size
        dtype = config.np_dtype()
        c1, c2 = config.disc_channels
        self.cv1 = conv2d_params(1, c1, config.kernel, config.stride,
                                 config.padding, config.init_std, rng, dtype)
        self.cv2 = conv2d_params(c1, c2, config.kernel, config.stride,
                                 config.padding, config.init_std, rng, dtype)
        self.head = fully_connected_params(flat, 1, config.init_std, rng, dtype)

    def forward(self, x: Tensor, tape: Tape | None = None,
                training: bool = False) -> Tensor:
        n = x.shape[0]
        h = ops.leaky_relu(ops.conv2d_forward(x, self.cv1, tape), LEAKY_ALPHA, tape)
        h = ops.leaky_relu(ops.conv2d_forward(h, self.cv2, tape), LEAKY_ALPHA, tape)
        h = ops.reshape(h, (n, self.flat_size), tape)
        return ops.sigmoid(ops.fully_connected_forward(h, self.head, tape), tape)

    def named_parameters(self):
        out = {}
        for name, layer in (("cv1", self.cv1), ("cv2", self.cv2), ("head", self.head)):
            out[f"{name}.w"] = layer.weights
            out[f"{name}.b"] = layer.bias
        return out

    def named_state(self):
        return {k: t.data for k, t in self.named_parameters().items()}

    def load_state(self, state: dict):
        _load_state_into(self, state)


def _load_state_into(net, state: dict):
    targets = dict(net.named_parameters())
    for name, layer in vars(net).items():
        if hasattr(layer, "running_mean") and layer.running_mean is not None:
            targets[f"{name}.running_mean"] = layer.running_mean
            targets[f"{name}.running_var"] = layer.running_var
    for key, tensor in targets.items():
        if key not in state:
            raise KeyError(f"checkpoint is missing parameter {key!r}")
        arr = np.asarray(state[key], dtype=tensor.data.dtype)
        if arr.shape != tensor.data.shape:
            raise ValueError(f"parameter {key!r} shape {arr.shape} does not match "
                             f"model shape {tensor.data.shape}")
        tensor.data = arr.copy()


def build_generator(config: GanConfig | None = None, rng=None,
                    class_mode: str = "mixed") -> GeneratorNet:
    return GeneratorNet(config or GanConfig(), rng, class_mode)


def build_discriminator(config: GanConfig | None = None, rng=None) -> DiscriminatorNet:
    return DiscriminatorNet(config or GanConfig(), rng)


# --------------------------------------------------------------------------
# losses (numpy level; the training loop assembles the same formulas from
# tape ops so they stay differentiable)


def _clamped(p):
    arr = np.asarray(p, dtype=np.float64).reshape(-1)
    if arr.size == 0:
        raise ValueError("empty probability batch")
    return np.clip(arr, PROB_EPS, 1.0 - PROB_EPS)


def _log_terms(d_real, d_fake):
    ar = _clamped(d_real)
    af = _clamped(d_fake)
    return float(np.mean(np.log(ar))), float(np.mean(np.log(1.0 - af)))


def discriminator_loss(d_real, d_fake) -> float:
    """-(mean log D(x) + mean log(1 - D(G(z)))); minimized by a good D."""
    m_real, m_fake = _log_terms(d_real, d_fake)
    return -(m_real + m_fake)


def generator_loss(d_fake) -> float:
    """Non-saturating generator objective -mean log D(G(z))."""
    return float(-np.mean(np.log(_clamped(d_fake))))


def value_function_estimate(d_real, d_fake) -> float:
    """The minimax game value: mean log D(x) + mean log(1 - D(G(z)))."""
    m_real, m_fake = _log_terms(d_real, d_fake)
    return m_real + m_fake


# --------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    class_mode: str = "mixed"
    batch_size: int = DEFAULT_BATCH_SIZE
    lr_d: float = DEFAULT_LR_D
    lr_g: float = DEFAULT_LR_G
    max_iterations: int | None = None  # None: class-mode preset ceiling
    seed: int = 0
    checkpoint_every: int = 10_000
    log_every: int = 100
    beta1: float = 0.5
    beta2: float = 0.999

    def __post_init__(self):
        if self.class_mode not in ITERATION_CEILINGS:
            raise ValueError(f"class_mode must be one of "
                             f"{tuple(ITERATION_CEILINGS)}, got {self.class_mode!r}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    @property
    def iterations(self) -> int:
        if self.max_iterations is not None:
            return self.max_iterations
        return ITERATION_CEILINGS[self.class_mode]


@dataclass
class TrainingMetrics:
    iteration: int
    loss_d: float
    loss_g: float
    value_v: float
    d_real_mean: float
    d_fake_mean: float

    def finite(self) -> bool:
        vals = (self.loss_d, self.loss_g, self.value_v,
                self.d_real_mean, self.d_fake_mean)
        return all(np.isfinite(v) for v in vals)


METRICS_HEADER = "iteration,loss_d,loss_g,value_v,d_real_mean,d_fake_mean"


def format_metrics_line(m: TrainingMetrics) -> str:
    return (f"{m.iteration},{m.loss_d!r},{m.loss_g!r},{m.value_v!r},"
            f"{m.d_real_mean!r},{m.d_fake_mean!r}")


def read_metrics_log(path) -> list[TrainingMetrics]:
    out = []
    with open(path) as f:
        header = f.readline().strip()
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {header!r}")
        for line in f:
            parts = line.strip().split(",")
            out.append(TrainingMetrics(int(parts[0]), *(float(p) for p in parts[1:])))
    return out


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration, last_checkpoint, metrics_path):
        super().__init__(f"non-finite loss at iteration {iteration}; "
                         f"last good checkpoint: {last_checkpoint}")
        self.iteration = iteration
        self.last_checkpoint = last_checkpoint
        self.metrics_path = metrics_path


@dataclass
class TrainResult:
    checkpoints: list[Path]
    metrics: list[TrainingMetrics]
    metrics_path: Path
    generator: GeneratorNet
    discriminator: DiscriminatorNet
    adam_g: Adam
    adam_d: Adam


def _gan_loss_terms(probs: Tensor, tape, invert: bool):
    """mean log p (invert=False) or mean log(1 - p) (invert=True), on tape."""
    clamped = ops.clamp(probs, PROB_EPS, 1.0 - PROB_EPS, tape)
    if invert:
        clamped = ops.rsub_scalar(1.0, clamped, tape)
    return ops.mean(ops.log(clamped, tape), tape)


def train(patches, config: TrainConfig, out_dir,
          gan_config: GanConfig | None = None) -> TrainResult:
    """Run adversarial training and emit checkpoints plus a metrics log.

    One iteration = one discriminator Adam step (real minibatch + fake
    minibatch) followed by one generator Adam step, so after k iterations
    each network has received exactly k updates.  Everything is driven by
    a single seeded RNG: a fixed seed reproduces the metrics log
    bit-for-bit.  A non-finite loss aborts with the last written
    checkpoint retained.
    """
    gan_config = gan_config or GanConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    pool = class_subset(list(patches), config.class_mode, seed=None)
    dtype = gan_config.np_dtype()
    data = np.stack([p.pixels for p in pool]).astype(dtype)[:, None, :, :]
    if data.size and (data.min() < -1.0 or data.max() > 1.0):
        raise ValueError("training patches must be normalized to [-1, 1]")

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    rng_g = np.random.default_rng(seeds[0])
    rng_d = np.random.default_rng(seeds[1])
    rng_loop = np.random.default_rng(seeds[2])

    gen = GeneratorNet(gan_config, rng_g, class_mode=config.class_mode)
    disc = DiscriminatorNet(gan_config, rng_d)
    adam_g = Adam(gen.named_parameters(), config.lr_g, config.beta1, config.beta2)
    adam_d = Adam(disc.named_parameters(), config.lr_d, config.beta1, config.beta2)

    checkpoints = [_write_checkpoint(out_dir, 0, gen, disc, config, gan_config)]
    metrics: list[TrainingMetrics] = []
    metrics_path = out_dir / "metrics.csv"

    n = data.shape[0]
    with open(metrics_path, "w") as logf:
        logf.write(METRICS_HEADER + "\n")
        for it in range(1, config.iterations + 1):
            idx = rng_loop.choice(n, size=config.batch_size, replace=n < config.batch_size)
            z = Tensor(rng_loop.standard_normal((config.batch_size,
                                                 gan_config.z_dim)), dtype=dtype)

            # one fake minibatch per iteration, shared by both updates
            tape_g = Tape()
            fake = gen.forward(z, tape_g, training=True)

            # discriminator step on [real | detached fake] as a single batch
            # (the discriminator has no cross-batch statistics, so this is
            # equivalent to two separate passes)
            tape_d = Tape()
            both = Tensor(np.concatenate([data[idx], fake.data]), dtype=dtype)
            p = disc.forward(both, tape_d, training=True)
            d_real = ops.slice_rows(p, 0, config.batch_size, tape_d)
            d_fake = ops.slice_rows(p, config.batch_size, 2 * config.batch_size, tape_d)
            loss_d_t = ops.neg(ops.add(_gan_loss_terms(d_real, tape_d, False),
                                       _gan_loss_terms(d_fake, tape_d, True), tape_d),
                               tape_d)
            if not np.isfinite(loss_d_t.item()):
                raise TrainingDiverged(it, checkpoints[-1], metrics_path)
            backward(loss_d_t, tape_d)
            adam_d.step()
            adam_d.zero_grad()

            # generator step: same fake batch through the freshly updated
            # discriminator, gradients flowing back into the generator
            d_fake_g = disc.forward(fake, tape_g, training=True)
            loss_g_t = ops.neg(_gan_loss_terms(d_fake_g, tape_g, False), tape_g)
            if not np.isfinite(loss_g_t.item()):
                raise TrainingDiverged(it, checkpoints[-1], metrics_path)
            backward(loss_g_t, tape_g)
            adam_g.step()
            adam_g.zero_grad()
            adam_d.zero_grad()

            m = TrainingMetrics(
                iteration=it,
                loss_d=loss_d_t.item(),
                loss_g=loss_g_t.item(),
                value_v=value_function_estimate(d_real.data, d_fake.data),
                d_real_mean=float(d_real.data.mean()),
                d_fake_mean=float(d_fake.data.mean()),
            )
            if not m.finite():
                raise TrainingDiverged(it, checkpoints[-1], metrics_path)
            if config.log_every > 0 and it % config.log_every == 0:
                metrics.append(m)
                logf.write(format_metrics_line(m) + "\n")
                logf.flush()
            if config.checkpoint_every > 0 and it % config.checkpoint_every == 0:
                checkpoints.append(_write_checkpoint(out_dir, it, gen, disc,
                                                     config, gan_config))

    if checkpoints[-1].name != _checkpoint_name(config.iterations):
        checkpoints.append(_write_checkpoint(out_dir, config.iterations, gen, disc,
                                             config, gan_config))
    return TrainResult(checkpoints, metrics, metrics_path, gen, disc,
                       adam_g, adam_d)


def _checkpoint_name(iteration: int) -> str:
    return f"ckpt_{iteration:07d}.nfck"


def _write_checkpoint(out_dir: Path, iteration, gen, disc, config, gan_config) -> Path:
    path = out_dir / _checkpoint_name(iteration)
    state = {f"g.{k}": v for k, v in gen.named_state().items()}
    state.update({f"d.{k}": v for k, v in disc.named_state().items()})
    save_checkpoint(path, state)
    sidecar = {
        "iteration": iteration,
        "class_mode": config.class_mode,
        "seed": config.seed,
        "gan_config": asdict(gan_config),
    }
    path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))
    return path


def load_nets(checkpoint_path) -> tuple[GeneratorNet, DiscriminatorNet, dict]:
    """Rebuild both networks from a checkpoint and its sidecar."""
    checkpoint_path = Path(checkpoint_path)
    sidecar = json.loads(checkpoint_path.with_suffix(".json").read_text())
    cfg_dict = dict(sidecar["gan_config"])
    cfg_dict["gen_channels"] = tuple(cfg_dict["gen_channels"])
    cfg_dict["disc_channels"] = tuple(cfg_dict["disc_channels"])
    gan_config = GanConfig(**cfg_dict)
    state = load_checkpoint(checkpoint_path)
    gen = GeneratorNet(gan_config, class_mode=sidecar["class_mode"])
    disc = DiscriminatorNet(gan_config)
    gen.load_state({k[2:]: v for k, v in state.items() if k.startswith("g.")})
    disc.load_state({k[2:]: v for k, v in state.items() if k.startswith("d.")})
    return gen, disc, sidecar


def sample(generator: GeneratorNet, n: int, seed: int,
           batch_size: int = 64) -> list[ImagePatch]:
    """Draw n patches from the generator with a recorded seed.

    Inference mode (running batch-norm statistics); provenance is
    'generated' and the label follows the model's class mode.
    """
    if n < 1:
        raise ValueError(f"sample count must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    label = generator.class_mode if generator.class_mode in ("benign", "malignant") else None
    dtype = generator.config.np_dtype()
    out: list[ImagePatch] = []
    done = 0
    while done < n:
        take = min(batch_size, n - done)
        z = Tensor(rng.standard_normal((take, generator.config.z_dim)), dtype=dtype)
        imgs = generator.forward(z, tape=None, training=False)
        for i in range(take):
            out.append(ImagePatch(
                pixels=np.asarray(imgs.data[i, 0], dtype=np.float64),
                provenance="generated",
                source_id=f"gen-{generator.class_mode}-{seed}-{done + i:05d}",
                label=label,
                seed=seed,
            ))
        done += take
    return out
