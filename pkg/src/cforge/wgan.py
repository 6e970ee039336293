"""Conditional WGAN-GP over (institutional quality, complexity, human capital).

The regime label is one-hot encoded and concatenated to both the generator
input (after the latent noise) and the critic input (after the data columns).
An epoch is one pass over all mini-batches of the training matrix; each
mini-batch drives one critic update, and the generator is updated after
every ``n_critic`` critic updates, counted across epochs.
"""

from __future__ import annotations

import base64
import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DataError, NumericError, RankError, SchemaError, ShapeError, VocabularyError
from .nn import autodiff as ad
from .nn.autodiff import Tape, Tensor, no_record
from .nn.layers import Mlp, MlpConfig
from .nn.optim import AdamState, adam_step
from .panel import FittedTransforms, PcaResult, Preprocessed, pca_fit
from .rng import make_rng

CHECKPOINT_FORMAT = "cforge-checkpoint"
CHECKPOINT_VERSION = 1
LOG_COLUMNS = ("epoch", "wasserstein_estimate", "critic_loss", "generator_loss", "gradient_penalty")

DEFAULT_GENERATOR = MlpConfig((128, 64, 32), "relu", batch_norm=True)
DEFAULT_CRITIC = MlpConfig((128, 64, 32), "leaky_relu", leaky_alpha=0.2, dropout_rate=0.3)


@dataclass(frozen=True)
class GanConfig:
    latent_dim: int = 8
    condition_encoding: str = "one_hot"
    generator: MlpConfig = DEFAULT_GENERATOR
    critic: MlpConfig = DEFAULT_CRITIC
    gp_lambda: float = 10.0
    n_critic: int = 5
    batch_size: int = 64
    epochs: int = 15000
    eta: float = 1e-4
    beta1: float = 0.5
    beta2: float = 0.9
    epsilon: float = 1e-8
    weight_decay: float = 1e-4
    seed: int = 0
    marginal_rescale: bool = True
    calibration_size: int = 4096

    def __post_init__(self):
        for name in ("latent_dim", "n_critic", "batch_size", "calibration_size"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.epochs < 0:
            raise ValueError("epochs must be non-negative")
        if self.gp_lambda < 0:
            raise ValueError("gp_lambda must be >= 0")
        if self.condition_encoding != "one_hot":
            raise ValueError("only one_hot condition encoding is supported")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["generator"]["layer_widths"] = list(self.generator.layer_widths)
        d["critic"]["layer_widths"] = list(self.critic.layer_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GanConfig":
        d = dict(d)
        for key in ("generator", "critic"):
            sub = dict(d[key])
            sub["layer_widths"] = tuple(sub["layer_widths"])
            d[key] = MlpConfig(**sub)
        return cls(**d)


@dataclass
class EpochLog:
    epoch: int
    wasserstein_estimate: float
    critic_loss: float
    generator_loss: float
    gradient_penalty: float


@dataclass
class QuantileMap:
    """Monotone map sending a reference synthetic sample onto a real column's
    empirical quantile function."""

    source: np.ndarray  # sorted reference synthetic values
    target: np.ndarray  # sorted real values

    def __call__(self, values) -> np.ndarray:
        x = np.asarray(values, dtype=float)
        m, n = self.source.size, self.target.size
        if m == 1:
            pos = np.zeros_like(x)
        else:
            pos = np.interp(x, self.source, np.arange(m, dtype=float))
        if n == 1:
            return np.full_like(x, self.target[0])
        h = pos * (n - 1) / max(m - 1, 1)
        lo = np.clip(np.floor(h).astype(int), 0, n - 1)
        hi = np.minimum(lo + 1, n - 1)
        frac = h - lo
        return self.target[lo] + frac * (self.target[hi] - self.target[lo])


def marginal_rescale_fit(real_column, synthetic_column) -> QuantileMap:
    real = np.sort(np.asarray(real_column, dtype=float))
    synth = np.sort(np.asarray(synthetic_column, dtype=float))
    if real.size == 0 or synth.size == 0:
        raise DataError("marginal rescaling needs non-empty columns")
    return QuantileMap(synth, real)


def marginal_rescale_apply(qmap: QuantileMap, column) -> np.ndarray:
    return qmap(column)


def marginal_rescale(real_column, synthetic_column) -> np.ndarray:
    """Rank-map ``synthetic_column`` onto the empirical quantiles of ``real_column``."""
    return marginal_rescale_apply(marginal_rescale_fit(real_column, synthetic_column), synthetic_column)


@dataclass
class GanModel:
    config: GanConfig
    generator: Mlp
    critic: Mlp
    condition_vocabulary: tuple[str, ...]
    data_dim: int
    fitted_transforms: FittedTransforms | None = None
    training_log: list[EpochLog] = field(default_factory=list)
    rescale_maps: list[QuantileMap] | None = None
    train_min: np.ndarray | None = None
    train_max: np.ndarray | None = None
    optim_generator: AdamState | None = None
    optim_critic: AdamState | None = None
    rng_state: dict = field(default_factory=dict)
    epoch: int = 0
    index_pca: tuple[PcaResult, float, float] | None = None

    @property
    def generator_params(self) -> list[Tensor]:
        return self.generator.parameters()

    @property
    def critic_params(self) -> list[Tensor]:
        return self.critic.parameters()

    def one_hot(self, labels: Sequence[str]) -> np.ndarray:
        index = {lab: i for i, lab in enumerate(self.condition_vocabulary)}
        out = np.zeros((len(labels), len(index)))
        for row, lab in enumerate(labels):
            if lab not in index:
                raise VocabularyError(
                    f"unknown regime {lab!r}; known: {', '.join(self.condition_vocabulary)}"
                )
            out[row, index[lab]] = 1.0
        return out


def sample_latent(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    if n < 1 or dim < 1:
        raise ValueError("sample_latent needs n, dim >= 1")
    return rng.standard_normal((n, dim))


def build_model(
    config: GanConfig,
    vocabulary: Sequence[str],
    data_dim: int = 3,
    transforms: FittedTransforms | None = None,
) -> GanModel:
    rng = make_rng(config.seed, "init")
    k = len(vocabulary)
    generator = Mlp.build(config.generator, config.latent_dim + k, data_dim, rng)
    critic = Mlp.build(config.critic, data_dim + k, 1, rng)
    hyper = dict(
        eta=config.eta,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
        weight_decay=config.weight_decay,
    )
    return GanModel(
        config=config,
        generator=generator,
        critic=critic,
        condition_vocabulary=tuple(vocabulary),
        data_dim=data_dim,
        fitted_transforms=transforms,
        optim_generator=AdamState.for_params(generator.parameters(), **hyper),
        optim_critic=AdamState.for_params(critic.parameters(), **hyper),
    )


def gradient_penalty(
    critic: Callable[[Tensor], Tensor],
    real_batch,
    fake_batch,
    rng: np.random.Generator,
) -> Tensor:
    """Mean of (||grad_x critic(x_hat)||_2 - 1)^2 over per-row interpolates.

    ``critic`` must be deterministic (no dropout). Must be called inside an
    active :class:`Tape`; the result is differentiable w.r.t. every tensor
    the critic closes over.
    """
    real = real_batch.data if isinstance(real_batch, Tensor) else np.asarray(real_batch, float)
    fake = fake_batch.data if isinstance(fake_batch, Tensor) else np.asarray(fake_batch, float)
    if real.shape != fake.shape:
        raise ShapeError(f"gradient penalty batches differ: {real.shape} vs {fake.shape}")
    tape = ad.current_tape()
    u = rng.random((real.shape[0], 1))
    x_hat = Tensor(u * real + (1.0 - u) * fake, requires_grad=True)
    scores = critic(x_hat)
    (grad,) = tape.gradient(ad.reduce_sum(scores), [x_hat], create_graph=True)
    norms = ad.norm2_rows(grad)
    return ad.reduce_mean(ad.square(ad.sub(norms, Tensor(1.0))))


def critic_loss(
    model: GanModel,
    real: np.ndarray,
    fake: np.ndarray,
    cond: np.ndarray,
    rng: np.random.Generator,
    gp_lambda: float | None = None,
    gp_rng: np.random.Generator | None = None,
) -> tuple[Tensor, dict]:
    """mean D(fake) - mean D(real) + lambda * penalty, inside an active tape.

    Real and fake rows share dropout masks, so identical batches score
    identically and the Wasserstein term vanishes exactly.
    """
    lam = model.config.gp_lambda if gp_lambda is None else gp_lambda
    n = real.shape[0]
    masks = model.critic.dropout_masks(n, rng)
    if masks is not None:
        masks = [np.vstack([m, m]) for m in masks]
    stacked = Tensor(np.vstack([np.hstack([real, cond]), np.hstack([fake, cond])]))
    scores = model.critic(stacked, True, masks)
    paired = ad.mul(ad.reshape(scores, (2, n)), Tensor(np.array([[1.0], [-1.0]])))
    w_est = ad.reduce_mean(ad.reduce_sum(paired, axis=0))
    loss = ad.neg(w_est)
    gp_value = 0.0
    if lam > 0:
        gp = gradient_penalty(
            lambda x: model.critic(ad.concat(x, Tensor(cond))), real, fake, gp_rng or rng
        )
        gp_value = float(gp.data)
        loss = ad.add(loss, ad.mul(gp, Tensor(lam)))
    return loss, {"wasserstein": float(w_est.data), "gradient_penalty": gp_value}


def _generator_forward(model: GanModel, z: np.ndarray, cond: np.ndarray, train: bool) -> Tensor:
    return model.generator(ad.concat(Tensor(z), Tensor(cond)), train)


def _check(value: float, epoch: int, what: str) -> None:
    if not np.isfinite(value):
        raise NumericError(f"epoch {epoch}: non-finite {what}")


def train(
    matrix,
    labels: Sequence[str],
    config: GanConfig,
    transforms: FittedTransforms | None = None,
    vocabulary: Sequence[str] | None = None,
    progress: Callable[[EpochLog], None] | None = None,
) -> GanModel:
    """Train a conditional WGAN-GP on ``matrix`` (model-space rows) labelled
    by regime. Returns the model with marginal-rescaling maps fitted."""
    data = np.asarray(matrix, dtype=float)
    if data.ndim != 2 or data.shape[0] != len(labels):
        raise ShapeError(f"matrix {data.shape} does not match {len(labels)} labels")
    if data.shape[0] < 2:
        raise DataError("training needs at least two rows")
    if not np.all(np.isfinite(data)):
        raise DataError("training matrix contains non-finite values")
    labels = list(labels)
    if vocabulary is None:
        vocabulary = sorted(set(labels))
    counts = {v: 0 for v in vocabulary}
    for lab in labels:
        if lab not in counts:
            raise VocabularyError(f"label {lab!r} not in vocabulary {list(vocabulary)}")
        counts[lab] += 1
    empty = [v for v, c in counts.items() if c == 0]
    if empty:
        raise DataError(f"empty regime stratum: {', '.join(empty)}")

    model = build_model(config, vocabulary, data.shape[1], transforms)
    cond_all = model.one_hot(labels)
    n = data.shape[0]
    bs = min(config.batch_size, n)

    shuffle_rng = make_rng(config.seed, "shuffle")
    noise_rng = make_rng(config.seed, "noise")
    dropout_rng = make_rng(config.seed, "dropout")
    gp_rng = make_rng(config.seed, "interpolate")

    g_params = model.generator_params
    c_params = model.critic_params
    critic_steps = 0
    last_g_loss = float("nan")

    for epoch in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        batches = [perm[i : i + bs] for i in range(0, n, bs)]
        if len(batches) > 1 and batches[-1].size < 2:
            batches[-2] = np.concatenate([batches[-2], batches[-1]])
            batches.pop()
        w_sum = c_sum = gp_sum = 0.0
        g_losses = []
        for idx in batches:
            real = data[idx]
            cond = cond_all[idx]
            z = sample_latent(idx.size, config.latent_dim, noise_rng)
            with no_record():
                fake = _generator_forward(model, z, cond, train=True).data
            with Tape() as tape:
                loss, parts = critic_loss(model, real, fake, cond, dropout_rng, gp_rng=gp_rng)
                grads = tape.gradient(loss, c_params)
            c_val = float(loss.data)
            _check(c_val, epoch, "critic loss")
            adam_step(c_params, grads, model.optim_critic)
            w_sum += parts["wasserstein"]
            c_sum += c_val
            gp_sum += parts["gradient_penalty"]
            critic_steps += 1

            if critic_steps % config.n_critic == 0:
                rows = noise_rng.integers(0, n, size=bs)
                g_cond = cond_all[rows]
                gz = sample_latent(bs, config.latent_dim, noise_rng)
                with Tape() as tape:
                    fake_t = _generator_forward(model, gz, g_cond, train=True)
                    masks = model.critic.dropout_masks(bs, dropout_rng)
                    score = model.critic(ad.concat(fake_t, Tensor(g_cond)), True, masks)
                    g_loss = ad.neg(ad.reduce_mean(score))
                    g_grads = tape.gradient(g_loss, g_params)
                last_g_loss = float(g_loss.data)
                _check(last_g_loss, epoch, "generator loss")
                adam_step(g_params, g_grads, model.optim_generator)
                g_losses.append(last_g_loss)

        k = len(batches)
        entry = EpochLog(
            epoch=epoch + 1,
            wasserstein_estimate=w_sum / k,
            critic_loss=c_sum / k,
            generator_loss=float(np.mean(g_losses)) if g_losses else float("nan"),
            gradient_penalty=gp_sum / k,
        )
        model.training_log.append(entry)
        model.epoch = epoch + 1
        if progress is not None:
            progress(entry)

    normalized = transforms.from_latent(data) if transforms is not None else data
    model.train_min = normalized.min(axis=0)
    model.train_max = normalized.max(axis=0)
    model.index_pca = fit_index_pca(normalized)
    if config.marginal_rescale:
        _fit_rescaling(model, normalized, counts)
    model.rng_state = {
        "shuffle": shuffle_rng.bit_generator.state,
        "noise": noise_rng.bit_generator.state,
        "dropout": dropout_rng.bit_generator.state,
        "interpolate": gp_rng.bit_generator.state,
    }
    return model


def fit_index_pca(normalized: np.ndarray):
    """First principal axis of the training triplets plus its score range."""
    try:
        pca = pca_fit(normalized, 1)
    except (RankError, ValueError):
        return None
    scores = pca.transform(normalized)[:, 0]
    return pca, float(scores.min()), float(scores.max())


def train_preprocessed(prep: Preprocessed, config: GanConfig, vocabulary=None, progress=None) -> GanModel:
    return train(prep.latent, prep.regimes, config, prep.transforms, vocabulary, progress)


def _allocate(total: int, counts: dict[str, int]) -> dict[str, int]:
    """Split ``total`` draws across regimes in proportion to ``counts``
    (largest remainder, ties broken by vocabulary order)."""
    n = sum(counts.values())
    exact = {k: total * c / n for k, c in counts.items()}
    alloc = {k: int(np.floor(v)) for k, v in exact.items()}
    short = total - sum(alloc.values())
    order = sorted(counts, key=lambda k: (-(exact[k] - alloc[k]), list(counts).index(k)))
    for k in order[:short]:
        alloc[k] += 1
    return alloc


def _raw_generate(model: GanModel, z: np.ndarray, cond: np.ndarray) -> np.ndarray:
    with Tape():
        with no_record():
            out = _generator_forward(model, z, cond, train=False).data
    if model.fitted_transforms is not None:
        out = model.fitted_transforms.from_latent(out)
    return out


def _fit_rescaling(model: GanModel, normalized: np.ndarray, counts: dict[str, int]) -> None:
    rng = make_rng(model.config.seed, "calibration")
    alloc = _allocate(model.config.calibration_size, counts)
    chunks = []
    for label in model.condition_vocabulary:
        m = alloc[label]
        if m == 0:
            continue
        z = sample_latent(m, model.config.latent_dim, rng)
        chunks.append(_raw_generate(model, z, model.one_hot([label] * m)))
    pooled = np.vstack(chunks)
    model.rescale_maps = [
        marginal_rescale_fit(normalized[:, j], pooled[:, j]) for j in range(normalized.shape[1])
    ]


def generate(model: GanModel, z, condition: str) -> np.ndarray:
    """Triplets in normalized units for latent batch ``z`` under ``condition``.

    With marginal rescaling each column is passed through its fitted quantile
    map; otherwise columns are clipped to the training range.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim != 2 or z.shape[1] != model.config.latent_dim:
        raise ShapeError(f"latent batch must be n x {model.config.latent_dim}, got {z.shape}")
    cond = model.one_hot([condition] * z.shape[0])
    out = _raw_generate(model, z, cond)
    if model.config.marginal_rescale and model.rescale_maps is not None:
        return np.column_stack([m(out[:, j]) for j, m in enumerate(model.rescale_maps)])
    if model.train_min is not None:
        return np.clip(out, model.train_min, model.train_max)
    return out


def sample_synthetic(model: GanModel, counts: dict[str, int], rng: np.random.Generator):
    """Draw a labelled synthetic sample with ``counts[label]`` rows per regime."""
    rows, labs = [], []
    for label in model.condition_vocabulary:
        m = counts.get(label, 0)
        if m == 0:
            continue
        rows.append(generate(model, sample_latent(m, model.config.latent_dim, rng), label))
        labs.extend([label] * m)
    return np.vstack(rows), labs


# ------------------------------------------------------------ persistence


def _encode(arr) -> dict:
    a = np.ascontiguousarray(np.asarray(arr, dtype="<f8"))
    return {"shape": list(a.shape), "dtype": "<f8", "b64": base64.b64encode(a.tobytes()).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["b64"])
    return np.frombuffer(raw, dtype=d["dtype"]).reshape(d["shape"]).astype(np.float64)


def _encode_adam(state: AdamState) -> dict:
    return {
        "eta": state.eta,
        "beta1": state.beta1,
        "beta2": state.beta2,
        "epsilon": state.epsilon,
        "weight_decay": state.weight_decay,
        "step_count": state.step_count,
        "first_moment": [_encode(m) for m in state.first_moment],
        "second_moment": [_encode(v) for v in state.second_moment],
    }


def _decode_adam(d: dict) -> AdamState:
    return AdamState(
        eta=d["eta"],
        beta1=d["beta1"],
        beta2=d["beta2"],
        epsilon=d["epsilon"],
        weight_decay=d["weight_decay"],
        step_count=d["step_count"],
        first_moment=[_decode(m) for m in d["first_moment"]],
        second_moment=[_decode(v) for v in d["second_moment"]],
    )


def checkpoint_dict(model: GanModel) -> dict:
    log = np.array(
        [[getattr(e, c) for c in LOG_COLUMNS] for e in model.training_log], dtype=float
    ).reshape(-1, len(LOG_COLUMNS))
    return {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "condition_vocabulary": list(model.condition_vocabulary),
        "data_dim": model.data_dim,
        "epoch": model.epoch,
        "generator": {
            "params": [_encode(p.data) for p in model.generator_params],
            "buffers": [_encode(b) for b in model.generator.buffers()],
        },
        "critic": {
            "params": [_encode(p.data) for p in model.critic_params],
            "buffers": [_encode(b) for b in model.critic.buffers()],
        },
        "optim_generator": _encode_adam(model.optim_generator),
        "optim_critic": _encode_adam(model.optim_critic),
        "rng_state": model.rng_state,
        "fitted_transforms": None
        if model.fitted_transforms is None
        else model.fitted_transforms.to_dict(),
        "training_log": _encode(log),
        "train_min": None if model.train_min is None else _encode(model.train_min),
        "train_max": None if model.train_max is None else _encode(model.train_max),
        "rescale_maps": None
        if model.rescale_maps is None
        else [{"source": _encode(m.source), "target": _encode(m.target)} for m in model.rescale_maps],
        "index_pca": None
        if model.index_pca is None
        else {
            "components": _encode(model.index_pca[0].components),
            "ratio": _encode(model.index_pca[0].explained_variance_ratio),
            "means": _encode(model.index_pca[0].means),
            "lo": _encode(np.array([model.index_pca[1]])),
            "hi": _encode(np.array([model.index_pca[2]])),
        },
    }


def save_checkpoint(model: GanModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(checkpoint_dict(model), fh, sort_keys=True, indent=1)
        fh.write("\n")


def model_from_dict(d: dict) -> GanModel:
    if d.get("format") != CHECKPOINT_FORMAT:
        raise SchemaError("not a cforge checkpoint")
    config = GanConfig.from_dict(d["config"])
    transforms = None
    if d["fitted_transforms"] is not None:
        transforms = FittedTransforms.from_dict(d["fitted_transforms"])
    model = build_model(config, d["condition_vocabulary"], d["data_dim"], transforms)
    for net, key in ((model.generator, "generator"), (model.critic, "critic")):
        for p, enc in zip(net.parameters(), d[key]["params"]):
            p.data = _decode(enc)
        for buf, enc in zip(net.buffers(), d[key]["buffers"]):
            buf[...] = _decode(enc)
    model.optim_generator = _decode_adam(d["optim_generator"])
    model.optim_critic = _decode_adam(d["optim_critic"])
    model.rng_state = d["rng_state"]
    model.epoch = d["epoch"]
    log = _decode(d["training_log"])
    model.training_log = [
        EpochLog(int(row[0]), float(row[1]), float(row[2]), float(row[3]), float(row[4]))
        for row in log
    ]
    if d["train_min"] is not None:
        model.train_min = _decode(d["train_min"])
        model.train_max = _decode(d["train_max"])
    if d["rescale_maps"] is not None:
        model.rescale_maps = [
            QuantileMap(_decode(m["source"]), _decode(m["target"])) for m in d["rescale_maps"]
        ]
    if d.get("index_pca") is not None:
        ip = d["index_pca"]
        model.index_pca = (
            PcaResult(_decode(ip["components"]), _decode(ip["ratio"]), _decode(ip["means"])),
            float(_decode(ip["lo"])[0]),
            float(_decode(ip["hi"])[0]),
        )
    return model


def load_checkpoint(path) -> GanModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def write_training_log(model: GanModel, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(LOG_COLUMNS)
    for e in model.training_log:
        writer.writerow(
            [e.epoch] + [f"{getattr(e, c):.6g}" for c in LOG_COLUMNS[1:]]
        )
