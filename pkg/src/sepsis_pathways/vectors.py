"""Ternary stage vectors over the concept vocabulary and their autoencoder compression."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import _mlp
from .textproc.matching import Polarity
from .timeline import StageSeries

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


class TrainingDivergedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ConceptVocabulary:
    cuis: tuple[str, ...]
    index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(set(self.cuis)) != len(self.cuis):
            raise ValueError("vocabulary contains duplicates")
        object.__setattr__(self, "index", {c: i for i, c in enumerate(self.cuis)})

    def __len__(self) -> int:
        return len(self.cuis)

    def to_json(self) -> dict:
        return {"cuis": list(self.cuis)}

    @classmethod
    def from_json(cls, obj: Mapping) -> "ConceptVocabulary":
        return cls(tuple(obj["cuis"]))


def build_vocabulary(series: Iterable[StageSeries]) -> ConceptVocabulary:
    """Sorted set of every CUI mentioned (either polarity) in any stage."""
    cuis = set()
    for s in series:
        for stage in s.stages:
            cuis.update(stage.conditions)
    if not cuis:
        raise ValueError("no concepts in corpus; vocabulary would be empty")
    return ConceptVocabulary(tuple(sorted(cuis)))


def build_ternary_vector(conditions: Mapping[str, Polarity], vocab: ConceptVocabulary) -> np.ndarray:
    """+1 present, -1 negated, 0 not mentioned."""
    vec = np.zeros(len(vocab), dtype=np.int8)
    for cui, pol in conditions.items():
        try:
            i = vocab.index[cui]
        except KeyError:
            raise KeyError(f"{cui} is not in the vocabulary") from None
        vec[i] = 1 if pol is Polarity.POSITIVE else -1
    return vec


def to_sparse(vec: np.ndarray) -> str:
    """``"i:v i:v ..."`` for the nonzero entries."""
    return " ".join(f"{i}:{int(vec[i])}" for i in np.flatnonzero(vec))


def from_sparse(text: str, dim: int) -> np.ndarray:
    vec = np.zeros(dim, dtype=np.int8)
    for item in text.split():
        i, v = item.split(":")
        vec[int(i)] = int(v)
    return vec


@dataclass
class AutoencoderConfig:
    latent: int
    hidden: list[int] | None = None  # encoder hidden sizes; default [4 * latent]
    activation: str = "tanh"
    output_activation: str = "linear"
    epochs: int = 200
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    optimizer: str = "adam"
    init: str = "glorot_uniform"

    def layer_sizes(self, dim: int) -> list[int]:
        hidden = [4 * self.latent] if self.hidden is None else list(self.hidden)
        return [dim, *hidden, self.latent, *reversed(hidden), dim]


@dataclass
class AutoencoderModel:
    sizes: list[int]
    activations: list[str]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    seed: int = 0
    loss_curve: list[float] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.sizes) - 1
        if n % 2 or self.sizes != self.sizes[::-1]:
            raise ValueError(f"encoder/decoder sizes are not mirrored: {self.sizes}")
        if len(self.weights) != n or len(self.biases) != n or len(self.activations) != n:
            raise ValueError("layer count mismatch")

    @property
    def input_dim(self) -> int:
        return self.sizes[0]

    @property
    def latent(self) -> int:
        return self.sizes[len(self.sizes) // 2]

    @property
    def n_encoder_layers(self) -> int:
        return (len(self.sizes) - 1) // 2

    def _check(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"expected vectors of length {self.input_dim}, got {x.shape[-1]}")
        return x

    def to_json(self) -> dict:
        return {
            "format": "sepsis_pathways.autoencoder",
            "version": MODEL_FORMAT_VERSION,
            "sizes": list(self.sizes),
            "activations": list(self.activations),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "seed": self.seed,
            "loss_curve": list(self.loss_curve),
            "config": dict(self.config),
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "AutoencoderModel":
        if obj.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model version {obj.get('version')!r}")
        return cls(
            sizes=list(obj["sizes"]),
            activations=list(obj["activations"]),
            weights=[np.asarray(w, dtype=float).reshape(a, b) for w, a, b in zip(obj["weights"], obj["sizes"][:-1], obj["sizes"][1:])],
            biases=[np.asarray(b, dtype=float) for b in obj["biases"]],
            seed=int(obj["seed"]),
            loss_curve=[float(v) for v in obj["loss_curve"]],
            config=dict(obj.get("config", {})),
        )

    def save(self, path) -> None:
        from ._io import write_json

        write_json(path, self.to_json())

    @classmethod
    def load(cls, path) -> "AutoencoderModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


def new_autoencoder(dim: int, config: AutoencoderConfig) -> AutoencoderModel:
    sizes = config.layer_sizes(dim)
    n = len(sizes) - 1
    acts = [config.activation] * (n - 1) + [config.output_activation]
    rng = np.random.default_rng(config.seed)
    weights, biases = _mlp.init_layers(sizes, rng, config.init)
    return AutoencoderModel(sizes, acts, weights, biases, config.seed, [], asdict(config))


def mse_loss_and_grads(model: AutoencoderModel, x: np.ndarray):
    """Mean squared reconstruction error over all entries, with parameter gradients."""
    y, cache = _mlp.forward(x, model.weights, model.biases, model.activations)
    diff = y - x
    loss = float(np.mean(diff * diff))
    grad_out = 2.0 * diff / diff.size
    gw, gb = _mlp.backward(grad_out, cache, model.weights, model.activations)
    return loss, gw, gb


def reconstruction_mse(model: AutoencoderModel, x: np.ndarray) -> float:
    y = reconstruct(model, x)
    return float(np.mean((y - np.asarray(x, dtype=float)) ** 2))


def train_autoencoder(vectors, config: AutoencoderConfig) -> AutoencoderModel:
    """Mini-batch training on mean squared reconstruction error.

    ``loss_curve[0]`` is the full-data loss before any update and
    ``loss_curve[e]`` the loss after epoch ``e``.

    Raises:
        TrainingDivergedError: as soon as a batch or epoch loss is non-finite.
    """
    x = np.asarray(vectors, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("need at least one training vector")
    dim = x.shape[1]
    if config.latent > dim:
        raise ValueError(f"latent size {config.latent} exceeds input size {dim}")
    model = new_autoencoder(dim, config)
    params = model.weights + model.biases
    opt = _mlp.Optimizer(params, config.optimizer, config.learning_rate)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    n = x.shape[0]
    bs = max(1, min(config.batch_size, n))
    curve = [reconstruction_mse(model, x)]
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, bs):
            batch = x[order[start : start + bs]]
            loss, gw, gb = mse_loss_and_grads(model, batch)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite batch loss at epoch {epoch}, batch offset {start}; "
                    f"lr={config.learning_rate}, last epoch loss={curve[-1]!r}"
                )
            opt.step(gw + gb)
        epoch_loss = reconstruction_mse(model, x)
        if not np.isfinite(epoch_loss):
            raise TrainingDivergedError(f"non-finite loss after epoch {epoch}; lr={config.learning_rate}")
        curve.append(epoch_loss)
    model.loss_curve = curve
    logger.info("autoencoder trained: loss %.6g -> %.6g over %d epochs", curve[0], curve[-1], config.epochs)
    return model


def encode(model: AutoencoderModel, vector) -> np.ndarray:
    """Latent representation of one vector or a batch (rows)."""
    x = model._check(vector)
    k = model.n_encoder_layers
    out, _ = _mlp.forward(x, model.weights[:k], model.biases[:k], model.activations[:k])
    return out


def reconstruct(model: AutoencoderModel, vector) -> np.ndarray:
    x = model._check(vector)
    out, _ = _mlp.forward(x, model.weights, model.biases, model.activations)
    return out
