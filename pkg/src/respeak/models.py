"""Two-generator / two-discriminator translation model and its training step.

Generators follow the residual style-transfer recipe for 128x128 inputs:
a 7x7 stem (reflect padding), two stride-2 downsampling convolutions, six
residual blocks, two stride-2 transposed convolutions, and a 7x7 head with
tanh, all instance-normalized. Discriminators are patch classifiers built
from stride-2 4x4 convolutions that score each receptive-field patch
independently (a 14x14 score map for 128x128 input, no final sigmoid).

The adversarial objective defaults to the least-squares form for training
stability; the log form is available behind `loss_form`. Both are minimized
by the same real==1 / fake==0 optimum.

Image tensors are channels-last throughout: (batch, height, width, channels).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator, Tuple

import numpy as np

from .errors import ContractError, ShapeError
from .optim import Adam
from .spectro import SpectroImage
from .tensor import (
    Tensor,
    abs_,
    add,
    backward,
    conv2d,
    conv_transpose2d,
    instance_norm,
    leaky_relu,
    log,
    mean,
    mul,
    neg,
    no_grad,
    relu,
    sigmoid,
    tanh,
)

WEIGHT_SIGMA = 0.02


@dataclass
class TrainingConfig:
    batch_size: int = 4
    lambda_cyc: float = 10.0
    lr: float = 2e-4
    betas: Tuple[float, float] = (0.5, 0.999)
    total_steps: int = 20000
    seed: int = 0
    flip_augmentation: bool = False
    checkpoint_every: int = 1000
    loss_form: str = "lsgan"  # or "log"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.lambda_cyc < 0:
            raise ContractError(f"lambda_cyc must be >= 0, got {self.lambda_cyc}")
        if self.loss_form not in ("lsgan", "log"):
            raise ContractError(f"loss_form must be 'lsgan' or 'log', got {self.loss_form!r}")


@dataclass
class StepLosses:
    d_x_loss: float
    d_y_loss: float
    g_adv_loss: float
    cycle_loss: float
    total_g_loss: float


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class ConvLayer:
    def __init__(self, rng, c_in, c_out, kernel, stride=1, padding=0, pad_mode="zero"):
        self.stride = stride
        self.padding = padding
        self.pad_mode = pad_mode
        self.weight = Tensor(
            rng.normal(0.0, WEIGHT_SIGMA, (kernel, kernel, c_in, c_out)).astype(np.float32),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(c_out, dtype=np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.weight, self.bias, self.stride, self.padding, self.pad_mode)

    def named_params(self):
        yield "weight", self.weight
        yield "bias", self.bias


class ConvTransposeLayer:
    def __init__(self, rng, c_in, c_out, kernel, stride, padding, output_padding):
        self.stride = stride
        self.padding = padding
        self.output_padding = output_padding
        self.weight = Tensor(
            rng.normal(0.0, WEIGHT_SIGMA, (c_in, kernel, kernel, c_out)).astype(np.float32),
            requires_grad=True,
        )
        self.bias = Tensor(np.zeros(c_out, dtype=np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv_transpose2d(
            x, self.weight, self.bias, self.stride, self.padding, self.output_padding
        )

    def named_params(self):
        yield "weight", self.weight
        yield "bias", self.bias


class NormLayer:
    def __init__(self, channels):
        self.scale = Tensor(np.ones(channels, dtype=np.float32), requires_grad=True)
        self.offset = Tensor(np.zeros(channels, dtype=np.float32), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return instance_norm(x, self.scale, self.offset)

    def named_params(self):
        yield "scale", self.scale
        yield "offset", self.offset


class ResidualBlock:
    """conv-norm-relu-conv-norm with an identity skip; reflect padding keeps
    the block free of zero-border artifacts."""

    def __init__(self, rng, channels):
        self.conv1 = ConvLayer(rng, channels, channels, 3, 1, 1, "reflect")
        self.norm1 = NormLayer(channels)
        self.conv2 = ConvLayer(rng, channels, channels, 3, 1, 1, "reflect")
        self.norm2 = NormLayer(channels)

    def __call__(self, x: Tensor) -> Tensor:
        h = relu(self.norm1(self.conv1(x)))
        h = self.norm2(self.conv2(h))
        return add(x, h)

    def named_params(self):
        for sub_name, sub in (("conv1", self.conv1), ("norm1", self.norm1),
                              ("conv2", self.conv2), ("norm2", self.norm2)):
            for k, p in sub.named_params():
                yield f"{sub_name}.{k}", p


class Generator:
    """Shape-preserving image translator; output is tanh-bounded in [-1, 1]."""

    N_RES_BLOCKS = 6

    def __init__(self, rng):
        self.stem = ConvLayer(rng, 1, 64, 7, 1, 3, "reflect")
        self.stem_norm = NormLayer(64)
        self.down1 = ConvLayer(rng, 64, 128, 3, 2, 1)
        self.down1_norm = NormLayer(128)
        self.down2 = ConvLayer(rng, 128, 256, 3, 2, 1)
        self.down2_norm = NormLayer(256)
        self.blocks = [ResidualBlock(rng, 256) for _ in range(self.N_RES_BLOCKS)]
        self.up1 = ConvTransposeLayer(rng, 256, 128, 3, 2, 1, 1)
        self.up1_norm = NormLayer(128)
        self.up2 = ConvTransposeLayer(rng, 128, 64, 3, 2, 1, 1)
        self.up2_norm = NormLayer(64)
        self.head = ConvLayer(rng, 64, 1, 7, 1, 3, "reflect")

    def __call__(self, x: Tensor) -> Tensor:
        h = relu(self.stem_norm(self.stem(x)))
        h = relu(self.down1_norm(self.down1(h)))
        h = relu(self.down2_norm(self.down2(h)))
        for block in self.blocks:
            h = block(h)
        h = relu(self.up1_norm(self.up1(h)))
        h = relu(self.up2_norm(self.up2(h)))
        return tanh(self.head(h))

    def named_params(self):
        mods = [("stem", self.stem), ("stem_norm", self.stem_norm),
                ("down1", self.down1), ("down1_norm", self.down1_norm),
                ("down2", self.down2), ("down2_norm", self.down2_norm)]
        mods += [(f"res{i}", b) for i, b in enumerate(self.blocks)]
        mods += [("up1", self.up1), ("up1_norm", self.up1_norm),
                 ("up2", self.up2), ("up2_norm", self.up2_norm),
                 ("head", self.head)]
        for mod_name, mod in mods:
            for k, p in mod.named_params():
                yield f"{mod_name}.{k}", p


class Discriminator:
    """Patch classifier: raw per-patch scores, no final sigmoid (the loss
    decides how scores are interpreted)."""

    def __init__(self, rng):
        self.conv1 = ConvLayer(rng, 1, 64, 4, 2, 1)
        self.conv2 = ConvLayer(rng, 64, 128, 4, 2, 1)
        self.norm2 = NormLayer(128)
        self.conv3 = ConvLayer(rng, 128, 256, 4, 2, 1)
        self.norm3 = NormLayer(256)
        self.conv4 = ConvLayer(rng, 256, 512, 4, 1, 1)
        self.norm4 = NormLayer(512)
        self.conv5 = ConvLayer(rng, 512, 1, 4, 1, 1)

    def __call__(self, x: Tensor) -> Tensor:
        h = leaky_relu(self.conv1(x), 0.2)
        h = leaky_relu(self.norm2(self.conv2(h)), 0.2)
        h = leaky_relu(self.norm3(self.conv3(h)), 0.2)
        h = leaky_relu(self.norm4(self.conv4(h)), 0.2)
        return self.conv5(h)

    def named_params(self):
        mods = [("conv1", self.conv1), ("conv2", self.conv2), ("norm2", self.norm2),
                ("conv3", self.conv3), ("norm3", self.norm3),
                ("conv4", self.conv4), ("norm4", self.norm4),
                ("conv5", self.conv5)]
        for mod_name, mod in mods:
            for k, p in mod.named_params():
                yield f"{mod_name}.{k}", p


@dataclass
class CycleGanModels:
    """The four networks: a2b/b2a generators and per-domain discriminators
    (d_x judges source-domain images, d_y target-domain ones)."""

    g_ab: Generator
    g_ba: Generator
    d_x: Discriminator
    d_y: Discriminator

    def named_params(self) -> Iterator[Tuple[str, Tensor]]:
        for prefix, model in (("g_ab", self.g_ab), ("g_ba", self.g_ba),
                              ("d_x", self.d_x), ("d_y", self.d_y)):
            for k, p in model.named_params():
                yield f"{prefix}.{k}", p


@dataclass
class Optimizers:
    gen: Adam  # both generators
    dis: Adam  # both discriminators


def build_models(seed: int = 0) -> CycleGanModels:
    rng = np.random.default_rng(seed)
    return CycleGanModels(
        g_ab=Generator(rng), g_ba=Generator(rng),
        d_x=Discriminator(rng), d_y=Discriminator(rng),
    )


def build_optimizers(models: CycleGanModels, cfg: TrainingConfig) -> Optimizers:
    gen_params = {f"g_ab.{k}": p for k, p in models.g_ab.named_params()}
    gen_params.update({f"g_ba.{k}": p for k, p in models.g_ba.named_params()})
    dis_params = {f"d_x.{k}": p for k, p in models.d_x.named_params()}
    dis_params.update({f"d_y.{k}": p for k, p in models.d_y.named_params()})
    return Optimizers(
        gen=Adam(gen_params, lr=cfg.lr, betas=cfg.betas),
        dis=Adam(dis_params, lr=cfg.lr, betas=cfg.betas),
    )


def _set_requires_grad(model, flag: bool) -> None:
    for _, p in model.named_params():
        p.requires_grad = flag


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def adversarial_loss(d_out_real: Tensor, d_out_fake: Tensor, form: str = "lsgan") -> Tuple[Tensor, Tensor]:
    """(discriminator loss, generator loss) from two patch-score maps.

    Least-squares form: d = mean((real-1)^2) + mean(fake^2), g = mean((fake-1)^2).
    Log form uses sigmoid cross-entropy with the non-saturating generator
    objective. Both are zero-minimized at real==1, fake==0 for d.
    """
    if d_out_real.shape != d_out_fake.shape:
        raise ShapeError(f"patch maps differ: {d_out_real.shape} vs {d_out_fake.shape}")
    if form == "lsgan":
        dr = d_out_real - 1.0
        d_loss = add(mean(mul(dr, dr)), mean(mul(d_out_fake, d_out_fake)))
        gf = d_out_fake - 1.0
        g_loss = mean(mul(gf, gf))
        return d_loss, g_loss
    if form == "log":
        p_real = sigmoid(d_out_real)
        p_fake = sigmoid(d_out_fake)
        d_loss = add(neg(mean(log(p_real))), neg(mean(log(1.0 - p_fake))))
        g_loss = neg(mean(log(p_fake)))
        return d_loss, g_loss
    raise ContractError(f"unknown adversarial loss form {form!r}")


def _gen_adv_loss(d_out_fake: Tensor, form: str) -> Tensor:
    """Generator half of adversarial_loss; avoids scoring real images during
    the generator phase where that score is unused."""
    if form == "lsgan":
        gf = d_out_fake - 1.0
        return mean(mul(gf, gf))
    return neg(mean(log(sigmoid(d_out_fake))))


def _l1(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"l1 operands differ: {a.shape} vs {b.shape}")
    return mean(abs_(a - b))


def cycle_loss(x: Tensor, y: Tensor, g_ab: Callable, g_ba: Callable) -> Tensor:
    """Forward and backward reconstruction penalty:
    mean|g_ba(g_ab(x)) - x| + mean|g_ab(g_ba(y)) - y|."""
    return add(_l1(g_ba(g_ab(x)), x), _l1(g_ab(g_ba(y)), y))


# ---------------------------------------------------------------------------
# training step and inference
# ---------------------------------------------------------------------------

def train_step(
    batch_x: np.ndarray,
    batch_y: np.ndarray,
    models: CycleGanModels,
    optimizers: Optimizers,
    cfg: TrainingConfig,
    step: int = 0,
) -> StepLosses:
    """One alternating update: generators first (discriminators frozen), then
    discriminators on real vs detached fakes. Deterministic given
    (cfg.seed, step); batches must already be (B, H, W, 1) float32 in [-1, 1].
    """
    bx = np.asarray(batch_x, dtype=np.float32)
    by = np.asarray(batch_y, dtype=np.float32)
    if bx.ndim != 4 or by.ndim != 4 or bx.shape[0] != cfg.batch_size or by.shape[0] != cfg.batch_size:
        raise ShapeError(
            f"expected two (batch={cfg.batch_size}, H, W, 1) batches, got {bx.shape} and {by.shape}"
        )
    if cfg.flip_augmentation:
        rng = np.random.default_rng([cfg.seed, step, 0xF11F])
        bx = np.where(rng.random((cfg.batch_size, 1, 1, 1)) < 0.5, bx[:, :, ::-1, :], bx)
        by = np.where(rng.random((cfg.batch_size, 1, 1, 1)) < 0.5, by[:, :, ::-1, :], by)

    x = Tensor(bx)
    y = Tensor(by)

    # phase 1: update generators with discriminators frozen
    _set_requires_grad(models.d_x, False)
    _set_requires_grad(models.d_y, False)
    fake_y = models.g_ab(x)
    fake_x = models.g_ba(y)
    rec_x = models.g_ba(fake_y)
    rec_y = models.g_ab(fake_x)
    g_adv = add(
        _gen_adv_loss(models.d_y(fake_y), cfg.loss_form),
        _gen_adv_loss(models.d_x(fake_x), cfg.loss_form),
    )
    cyc = add(_l1(rec_x, x), _l1(rec_y, y))
    total_g = add(g_adv, cfg.lambda_cyc * cyc)
    backward(total_g)
    optimizers.gen.step()
    _set_requires_grad(models.d_x, True)
    _set_requires_grad(models.d_y, True)

    # phase 2: update discriminators on real vs detached fakes
    d_x_loss, _ = adversarial_loss(models.d_x(x), models.d_x(fake_x.detach()), cfg.loss_form)
    d_y_loss, _ = adversarial_loss(models.d_y(y), models.d_y(fake_y.detach()), cfg.loss_form)
    d_total = add(d_x_loss, d_y_loss)
    backward(d_total)
    optimizers.dis.step()

    losses = StepLosses(
        d_x_loss=d_x_loss.item(),
        d_y_loss=d_y_loss.item(),
        g_adv_loss=g_adv.item(),
        cycle_loss=cyc.item(),
        total_g_loss=total_g.item(),
    )
    for name, value in vars(losses).items():
        if not np.isfinite(value):
            raise ContractError(f"non-finite {name} at step {step}: {value}")
    return losses


def convert(img: SpectroImage, generator: Generator) -> SpectroImage:
    """Translate one image; gradient-free. n_speech_frames carries over so
    downstream inversion knows where the padding starts."""
    with no_grad():
        x = Tensor(img.pixels[None, :, :, None])
        out = generator(x)
    pixels = np.clip(out.data[0, :, :, 0], -1.0, 1.0).astype(np.float32)
    return SpectroImage(
        pixels=pixels,
        db_floor=img.db_floor,
        db_ceil=img.db_ceil,
        n_speech_frames=img.n_speech_frames,
    )
