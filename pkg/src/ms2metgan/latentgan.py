"""Conditional latent generator, match discriminator, and round protocol.

The generator maps a spectrum latent to a structure latent through three dense
layers (relu, relu, linear). The discriminator reshapes a concatenated
spectrum+structure latent into a short token sequence, runs a stack of
attention layers, normalizes, applies one dense layer shared across tokens,
mean-pools, and finishes with a dense layer plus relu, so scores are never
negative. Both train full-batch under AdamW against mean squared error to 0/1
targets with 0.5 as the decision threshold.

The protocol trains the discriminator alone in round 0 against externally
supplied decoys, then alternates generator and discriminator phases, where
each round's decoys are the current generator's outputs paired with their
conditioning spectra. The discriminator is snapshotted after every round.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .autoencoders import LatentVector
from .numkit import (
    Adamw,
    AdamwConfig,
    AttentionBlock,
    DenseLayer,
    LayerNorm,
    Prng,
    Tensor,
    layer_norm_forward,
    linear_forward,
    load_checkpoint,
    multihead_attention,
    relu,
    save_checkpoint,
)

__all__ = [
    "Discriminator",
    "Generator",
    "LatentGanConfig",
    "LatentMSM",
    "PhaseReport",
    "ProtocolError",
    "ProtocolResult",
    "RoundConfig",
    "discriminate",
    "generate",
    "load_discriminator",
    "load_generator",
    "make_generated_decoys",
    "run_protocol",
    "save_discriminator",
    "save_generator",
    "train_discriminator_phase",
    "train_generator_phase",
    "write_protocol_log",
]

SCORE_THRESHOLD = 0.5

PROTOCOL_LOG_HEADER = ("round", "phase", "epochs", "metric")


@dataclass(frozen=True)
class LatentGanConfig:
    """Shapes shared by the generator and discriminator."""

    d_spec: int = 1500
    d_struct: int = 1280
    gen_hidden: tuple[int, int] = (1500, 1280)
    tokens: int = 20
    disc_layers: int = 16
    heads: int = 1

    def __post_init__(self) -> None:
        dims = (self.d_spec, self.d_struct, *self.gen_hidden, self.tokens,
                self.disc_layers, self.heads)
        if any(v <= 0 for v in dims):
            raise ValueError("all latent-model dims must be positive")
        concat = self.d_spec + self.d_struct
        if concat % self.tokens != 0:
            raise ValueError(
                f"concat width {concat} is not divisible into {self.tokens} tokens"
            )
        if self.token_width % self.heads != 0:
            raise ValueError(
                f"token width {self.token_width} not divisible by heads "
                f"{self.heads}"
            )

    @property
    def concat_width(self) -> int:
        return self.d_spec + self.d_struct

    @property
    def token_width(self) -> int:
        return (self.d_spec + self.d_struct) // self.tokens


@dataclass(frozen=True)
class LatentMSM:
    """A spectrum latent paired with a structure latent plus its label."""

    spectrum_latent: LatentVector
    structure_latent: LatentVector
    label: str

    def __post_init__(self) -> None:
        if self.label not in ("true-match", "decoy"):
            raise ValueError(f"unknown pair label {self.label!r}")
        if self.spectrum_latent.family != "spectrum":
            raise ValueError(
                f"first member must be a spectrum latent, got "
                f"{self.spectrum_latent.family!r}"
            )
        if self.structure_latent.family != "structure":
            raise ValueError(
                f"second member must be a structure latent, got "
                f"{self.structure_latent.family!r}"
            )

    def concat(self) -> np.ndarray:
        return np.concatenate(
            [self.spectrum_latent.values, self.structure_latent.values]
        )


class Generator:
    """Three dense layers from spectrum latent to structure latent."""

    def __init__(self, cfg: LatentGanConfig, layers: list[DenseLayer]):
        self.cfg = cfg
        self.layers = layers

    @classmethod
    def create(cls, cfg: LatentGanConfig, prng: Prng) -> "Generator":
        h1, h2 = cfg.gen_hidden
        dims = [(cfg.d_spec, h1), (h1, h2), (h2, cfg.d_struct)]
        return cls(cfg, [DenseLayer.create(prng, i, o) for i, o in dims])

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, layer in enumerate(self.layers, start=1):
            out.update(layer.params(f"gen{i}"))
        return out

    def forward(self, x: Tensor) -> Tensor:
        h = relu(linear_forward(self.layers[0], x))
        h = relu(linear_forward(self.layers[1], h))
        return linear_forward(self.layers[2], h)

    def transform(self, spec_values: np.ndarray) -> np.ndarray:
        x = np.asarray(spec_values, dtype=np.float64).reshape(-1)
        if x.size != self.cfg.d_spec:
            raise ValueError(
                f"spectrum latent has {x.size} values, generator expects "
                f"{self.cfg.d_spec}"
            )
        return self.forward(Tensor(x)).data.copy()

    def clone(self) -> "Generator":
        twin = Generator.create(self.cfg, Prng(0))
        mine = self.params()
        for name, tensor in twin.params().items():
            tensor.data = mine[name].data.copy()
        return twin


class Discriminator:
    """Attention stack over latent tokens ending in a non-negative score."""

    def __init__(self, cfg: LatentGanConfig, blocks: list[AttentionBlock],
                 norm: LayerNorm, shared: DenseLayer, final: DenseLayer):
        self.cfg = cfg
        self.blocks = blocks
        self.norm = norm
        self.shared = shared
        self.final = final

    @classmethod
    def create(cls, cfg: LatentGanConfig, prng: Prng) -> "Discriminator":
        w = cfg.token_width
        final = DenseLayer.create(prng, w, 1)
        # start at the decision midpoint so the output relu begins active;
        # an all-negative start has zero gradient and never recovers
        final.bias.data[:] = SCORE_THRESHOLD
        return cls(
            cfg,
            blocks=[AttentionBlock.create(prng, w, cfg.heads)
                    for _ in range(cfg.disc_layers)],
            norm=LayerNorm.create(w),
            shared=DenseLayer.create(prng, w, w),
            final=final,
        )

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, block in enumerate(self.blocks, start=1):
            out.update(block.params(f"disc{i}"))
        out.update(self.norm.params("disc_norm"))
        out.update(self.shared.params("disc_shared"))
        out.update(self.final.params("disc_final"))
        return out

    def forward(self, concat: Tensor) -> Tensor:
        """Scores for a [n, d_spec + d_struct] batch; returns shape [n]."""
        n = concat.data.shape[0]
        if concat.data.ndim != 2 or concat.data.shape[1] != self.cfg.concat_width:
            raise ValueError(
                f"discriminator input must be [n, {self.cfg.concat_width}], "
                f"got {concat.data.shape}"
            )
        tokens = concat.reshape((n, self.cfg.tokens, self.cfg.token_width))
        for block in self.blocks:
            tokens = multihead_attention(block, tokens)
        tokens = layer_norm_forward(self.norm, tokens)
        tokens = linear_forward(self.shared, tokens)
        pooled = tokens.mean(axis=1)
        return relu(linear_forward(self.final, pooled)).reshape((n,))

    def score(self, concat_values: np.ndarray) -> float:
        x = np.asarray(concat_values, dtype=np.float64).reshape(1, -1)
        return float(self.forward(Tensor(x)).data[0])

    def clone(self) -> "Discriminator":
        twin = Discriminator.create(self.cfg, Prng(0))
        mine = self.params()
        for name, tensor in twin.params().items():
            tensor.data = mine[name].data.copy()
        return twin


def generate(g: Generator, spec: LatentVector) -> LatentVector:
    """Map a spectrum latent through the generator to a structure latent."""
    if spec.family != "spectrum":
        raise ValueError(f"generator conditions on spectrum latents, got "
                         f"{spec.family!r}")
    values = g.transform(spec.values)
    return LatentVector(values=values, family="structure",
                        source_id=spec.source_id)


def discriminate(d: Discriminator, msm: LatentMSM) -> float:
    """Score one latent pair; classification is score >= 0.5."""
    if len(msm.spectrum_latent) != d.cfg.d_spec:
        raise ValueError(
            f"spectrum latent has {len(msm.spectrum_latent)} values, "
            f"discriminator expects {d.cfg.d_spec}"
        )
    if len(msm.structure_latent) != d.cfg.d_struct:
        raise ValueError(
            f"structure latent has {len(msm.structure_latent)} values, "
            f"discriminator expects {d.cfg.d_struct}"
        )
    return d.score(msm.concat())


@dataclass(frozen=True)
class RoundConfig:
    rounds: int = 9
    disc_accuracy_target: float = 0.99
    gen_fool_target: float = 0.99
    final_round_gen_target: float = 0.9875
    max_epochs: int = 5000
    opt: AdamwConfig = field(default_factory=AdamwConfig)

    def __post_init__(self) -> None:
        if self.rounds < 0:
            raise ValueError("rounds must be non-negative")
        for name in ("disc_accuracy_target", "gen_fool_target",
                     "final_round_gen_target"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {value}")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be at least 1")


@dataclass(frozen=True)
class PhaseReport:
    """Outcome of one training phase; metric is an exact fraction."""

    round_index: int
    phase: str
    epochs: int
    metric: Fraction
    converged: bool


def _target_fraction(value: float) -> Fraction:
    """Read a stop target by its decimal rendering, so 0.9875 means 79/80.

    Exact-fraction metrics would otherwise be compared against the binary
    float, which for 0.9875 sits just above the true decimal value and would
    reject a run that hit the target exactly.
    """
    return Fraction(str(value))


def _stack_msms(msms: Sequence[LatentMSM], cfg: LatentGanConfig,
                expected_label: str) -> np.ndarray:
    rows = []
    for msm in msms:
        if msm.label != expected_label:
            raise ValueError(
                f"pair for {msm.spectrum_latent.source_id!r} is labeled "
                f"{msm.label!r}, expected {expected_label!r}"
            )
        if len(msm.spectrum_latent) != cfg.d_spec \
                or len(msm.structure_latent) != cfg.d_struct:
            raise ValueError(
                f"pair for {msm.spectrum_latent.source_id!r} has dims "
                f"({len(msm.spectrum_latent)}, {len(msm.structure_latent)}), "
                f"expected ({cfg.d_spec}, {cfg.d_struct})"
            )
        rows.append(msm.concat())
    return np.stack(rows)


def train_discriminator_phase(d: Discriminator,
                              true_msms: Sequence[LatentMSM],
                              decoy_msms: Sequence[LatentMSM],
                              cfg: RoundConfig,
                              round_index: int = 0) -> PhaseReport:
    """Fit d to score true pairs 1 and decoys 0; stop at the accuracy target.

    Accuracy is evaluated before every update, so an already-converged
    discriminator reports zero update epochs.
    """
    if len(true_msms) == 0:
        raise ValueError("discriminator round requires positives")
    if len(decoy_msms) == 0:
        raise ValueError("discriminator round requires negatives")
    true_x = _stack_msms(true_msms, d.cfg, "true-match")
    decoy_x = _stack_msms(decoy_msms, d.cfg, "decoy")
    x = Tensor(np.concatenate([true_x, decoy_x], axis=0))
    targets = np.concatenate([
        np.ones(len(true_msms)), np.zeros(len(decoy_msms))
    ])
    total = targets.size

    def accuracy() -> Fraction:
        scores = d.forward(x).data
        predicted = scores >= SCORE_THRESHOLD
        return Fraction(int(np.sum(predicted == (targets == 1.0))), total)

    acc = accuracy()
    if acc >= _target_fraction(cfg.disc_accuracy_target):
        return PhaseReport(round_index, "discriminator", 0, acc, True)
    optimizer = Adamw(list(d.params().values()), cfg.opt)
    target_t = Tensor(targets)
    for epoch in range(1, cfg.max_epochs + 1):
        optimizer.zero_grad()
        loss = ((d.forward(x) - target_t) ** 2).mean()
        loss.backward()
        optimizer.step()
        acc = accuracy()
        if acc >= _target_fraction(cfg.disc_accuracy_target):
            return PhaseReport(round_index, "discriminator", epoch, acc, True)
    return PhaseReport(round_index, "discriminator", cfg.max_epochs, acc, False)


def train_generator_phase(g: Generator, frozen_d: Discriminator,
                          spectrum_latents: Sequence[LatentVector],
                          cfg: RoundConfig,
                          is_final_round: bool = False,
                          round_index: int = 0) -> PhaseReport:
    """Fit g so its pairs score 1 under a frozen discriminator.

    Stops when the fooling rate (fraction of pairs scoring >= 0.5) meets the
    round target. The discriminator's parameters are never handed to the
    optimizer and its gradient scratch is cleared afterwards.
    """
    if len(spectrum_latents) == 0:
        raise ValueError("generator round requires spectrum latents")
    for vec in spectrum_latents:
        if vec.family != "spectrum":
            raise ValueError(
                f"latent {vec.source_id!r} is {vec.family!r}, expected spectrum"
            )
        if len(vec) != g.cfg.d_spec:
            raise ValueError(
                f"latent {vec.source_id!r} has {len(vec)} values, expected "
                f"{g.cfg.d_spec}"
            )
    spec_x = np.stack([vec.values for vec in spectrum_latents])
    spec_t = Tensor(spec_x)
    total = spec_x.shape[0]
    target = cfg.final_round_gen_target if is_final_round else cfg.gen_fool_target

    def paired_scores() -> Tensor:
        fake = g.forward(spec_t)
        return frozen_d.forward(_concat_cols(spec_t, fake))

    def fooling(scores: np.ndarray) -> Fraction:
        return Fraction(int(np.sum(scores >= SCORE_THRESHOLD)), total)

    rate = fooling(paired_scores().data)
    if rate >= _target_fraction(target):
        _clear_grads(frozen_d)
        return PhaseReport(round_index, "generator", 0, rate, True)
    optimizer = Adamw(list(g.params().values()), cfg.opt)
    ones = Tensor(np.ones(total))
    for epoch in range(1, cfg.max_epochs + 1):
        optimizer.zero_grad()
        loss = ((paired_scores() - ones) ** 2).mean()
        loss.backward()
        optimizer.step()
        rate = fooling(paired_scores().data)
        if rate >= _target_fraction(target):
            _clear_grads(frozen_d)
            return PhaseReport(round_index, "generator", epoch, rate, True)
    _clear_grads(frozen_d)
    return PhaseReport(round_index, "generator", cfg.max_epochs, rate, False)


def _concat_cols(a: Tensor, b: Tensor) -> Tensor:
    """Column concatenation that routes gradients to both inputs."""
    n, wa = a.data.shape
    wb = b.data.shape[1]
    left = np.zeros((wa, wa + wb))
    left[:, :wa] = np.eye(wa)
    right = np.zeros((wb, wa + wb))
    right[:, wa:] = np.eye(wb)
    return a @ Tensor(left) + b @ Tensor(right)


def _clear_grads(model) -> None:
    for tensor in model.params().values():
        tensor.grad = None


def make_generated_decoys(g: Generator,
                          spectrum_latents: Sequence[LatentVector]
                          ) -> list[LatentMSM]:
    """Pair every spectrum latent with the generator's structure latent."""
    return [
        LatentMSM(spectrum_latent=vec, structure_latent=generate(g, vec),
                  label="decoy")
        for vec in spectrum_latents
    ]


class ProtocolError(RuntimeError):
    """A phase failure annotated with the round it happened in."""

    def __init__(self, round_index: int, message: str):
        super().__init__(f"round {round_index}: {message}")
        self.round_index = round_index


@dataclass(frozen=True)
class ProtocolResult:
    checkpoints: tuple[tuple[str, Discriminator], ...]
    generator: Generator
    reports: tuple[PhaseReport, ...]

    def discriminator(self, name: str) -> Discriminator:
        for label, snapshot in self.checkpoints:
            if label == name:
                return snapshot
        raise KeyError(f"no checkpoint named {name!r}")


def run_protocol(true_msms: Sequence[LatentMSM],
                 isomer_decoy_msms: Sequence[LatentMSM],
                 spectrum_latents: Sequence[LatentVector],
                 cfg: RoundConfig,
                 dims: LatentGanConfig,
                 prng: Prng,
                 out_dir: str | Path | None = None) -> ProtocolResult:
    """Round 0 trains d alone; rounds 1..R alternate g and d phases.

    Every round ends with a discriminator snapshot GAN-<k>. When out_dir is
    given, snapshots are written as gan-<k>.msgw next to a tab-separated
    protocol log with one line per phase.
    """
    g = Generator.create(dims, prng)
    d = Discriminator.create(dims, prng)
    reports: list[PhaseReport] = []
    checkpoints: list[tuple[str, Discriminator]] = []

    def snapshot(k: int) -> None:
        checkpoints.append((f"GAN-{k}", d.clone()))

    try:
        reports.append(
            train_discriminator_phase(d, true_msms, isomer_decoy_msms, cfg,
                                      round_index=0)
        )
    except ValueError as exc:
        raise ProtocolError(0, str(exc)) from exc
    snapshot(0)

    for k in range(1, cfg.rounds + 1):
        try:
            reports.append(
                train_generator_phase(g, d, spectrum_latents, cfg,
                                      is_final_round=(k == cfg.rounds),
                                      round_index=k)
            )
            decoys = make_generated_decoys(g, spectrum_latents)
            reports.append(
                train_discriminator_phase(d, true_msms, decoys, cfg,
                                          round_index=k)
            )
        except ValueError as exc:
            raise ProtocolError(k, str(exc)) from exc
        snapshot(k)

    result = ProtocolResult(
        checkpoints=tuple(checkpoints),
        generator=g,
        reports=tuple(reports),
    )
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, snap in result.checkpoints:
            save_discriminator(snap, out / f"{name.lower()}.msgw")
        write_protocol_log(result.reports, out / "protocol-log.tsv")
    return result


def write_protocol_log(reports: Sequence[PhaseReport], path: str | Path) -> None:
    lines = ["\t".join(PROTOCOL_LOG_HEADER)]
    for report in reports:
        lines.append("\t".join([
            str(report.round_index),
            report.phase,
            str(report.epochs),
            repr(float(report.metric)),
        ]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


# ---------------------------------------------------------------------------
# persistence


def _meta(cfg: LatentGanConfig) -> np.ndarray:
    return np.array([
        cfg.d_spec, cfg.d_struct, *cfg.gen_hidden, cfg.tokens,
        cfg.disc_layers, cfg.heads,
    ])


def _cfg_from_meta(meta: np.ndarray) -> LatentGanConfig:
    return LatentGanConfig(
        d_spec=int(meta[0]), d_struct=int(meta[1]),
        gen_hidden=(int(meta[2]), int(meta[3])), tokens=int(meta[4]),
        disc_layers=int(meta[5]), heads=int(meta[6]),
    )


def save_discriminator(d: Discriminator, path: str | Path) -> None:
    sections = {"meta": _meta(d.cfg)}
    sections.update({k: v.data for k, v in d.params().items()})
    save_checkpoint(path, sections)


def load_discriminator(path: str | Path) -> Discriminator:
    sections = load_checkpoint(path)
    d = Discriminator.create(_cfg_from_meta(sections["meta"]), Prng(0))
    _restore(d, sections)
    return d


def save_generator(g: Generator, path: str | Path) -> None:
    sections = {"meta": _meta(g.cfg)}
    sections.update({k: v.data for k, v in g.params().items()})
    save_checkpoint(path, sections)


def load_generator(path: str | Path) -> Generator:
    sections = load_checkpoint(path)
    g = Generator.create(_cfg_from_meta(sections["meta"]), Prng(0))
    _restore(g, sections)
    return g


def _restore(model, sections: dict[str, np.ndarray]) -> None:
    for name, tensor in model.params().items():
        if name not in sections:
            raise ValueError(f"checkpoint is missing parameter {name!r}")
        stored = sections[name]
        if stored.shape != tensor.data.shape:
            raise ValueError(
                f"parameter {name!r} has shape {stored.shape}, model expects "
                f"{tensor.data.shape}"
            )
        tensor.data = stored.astype(np.float64)
