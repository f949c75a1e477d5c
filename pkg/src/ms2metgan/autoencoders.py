"""Spectrum and structure autoencoders with two-stage training.

Stage 1 trains encoder and decoder jointly on the whole training set. Stage 2
fine-tunes a per-sample copy of the encoder against the shared decoder, whose
parameters are the very same objects as the base model's and are never handed
to the optimizer, so the freeze contract is enforced structurally rather than
by convention.

The spectrum model is a plain MLP: three encoder layers (tanh, tanh, linear)
and seven decoder layers (tanh on 1-6, relu on 7). The structure model is a
graph transformer: node features plus a degree embedding form atom tokens,
attention logits are biased by bucketed shortest-path distances, tokens are
mean-pooled, normalized, and projected to the latent. Its decoder expands a
latent into per-atom tokens via a broadcast projection plus positional
embeddings, runs a fixed 12 attention layers, and predicts a standardized
[degree, H-count, aromatic] triple per atom.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .molecules import MolGraph, NODE_TARGET_DIM, graph_features
from .numkit import (
    Adamw,
    AdamwConfig,
    AttentionBlock,
    DenseLayer,
    LayerNorm,
    Prng,
    Tensor,
    dropout,
    layer_norm_forward,
    linear_forward,
    load_checkpoint,
    multihead_attention,
    relu,
    save_checkpoint,
    tanh,
)
from .spectra import BinnedSpectrum, downsample_adjacent

__all__ = [
    "LatentVector",
    "SpectrumAeConfig",
    "SpectrumAutoencoder",
    "StructureAeConfig",
    "StructureAutoencoder",
    "encode_spectrum",
    "encode_structure",
    "finetune_encode",
    "load_spectrum_ae",
    "load_structure_ae",
    "reconstruction_loss",
    "save_spectrum_ae",
    "save_structure_ae",
    "train_stage1",
]

SIGMA_FLOOR = 1e-3


@dataclass(frozen=True)
class LatentVector:
    """A finite latent with its family tag and source sample id."""

    values: np.ndarray
    family: str
    source_id: str

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "values", np.asarray(self.values, dtype=np.float64).reshape(-1)
        )
        if self.family not in ("spectrum", "structure"):
            raise ValueError(f"unknown latent family {self.family!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"latent for {self.source_id!r} has non-finite values")

    def __len__(self) -> int:
        return self.values.size


# ---------------------------------------------------------------------------
# spectrum autoencoder


@dataclass(frozen=True)
class SpectrumAeConfig:
    input_dim: int = 7500
    d_spec: int = 1500
    encoder_hidden: tuple[int, int] = (4000, 2500)
    decoder_hidden: tuple[int, ...] = (2000, 2800, 3600, 4500, 5500, 6500)
    dropout: float = 1e-4

    def __post_init__(self) -> None:
        dims = (self.input_dim, self.d_spec, *self.encoder_hidden,
                *self.decoder_hidden)
        if any(d <= 0 for d in dims):
            raise ValueError("all widths must be positive")
        if len(self.decoder_hidden) != 6:
            raise ValueError("the decoder has 7 layers, so 6 hidden widths")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")


class SpectrumAutoencoder:
    """MLP autoencoder over downsampled binned spectra."""

    def __init__(self, cfg: SpectrumAeConfig, enc_layers, dec_layers,
                 trained: bool = False):
        self.cfg = cfg
        self.enc_layers = enc_layers
        self.dec_layers = dec_layers
        self.trained = trained

    @classmethod
    def create(cls, cfg: SpectrumAeConfig, prng: Prng) -> "SpectrumAutoencoder":
        h1, h2 = cfg.encoder_hidden
        enc_dims = [(cfg.input_dim, h1), (h1, h2), (h2, cfg.d_spec)]
        widths = (cfg.d_spec, *cfg.decoder_hidden, cfg.input_dim)
        dec_dims = list(zip(widths[:-1], widths[1:]))
        enc = [DenseLayer.create(prng, i, o) for i, o in enc_dims]
        dec = [DenseLayer.create(prng, i, o) for i, o in dec_dims]
        return cls(cfg, enc, dec)

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, layer in enumerate(self.enc_layers, start=1):
            out.update(layer.params(f"enc{i}"))
        for i, layer in enumerate(self.dec_layers, start=1):
            out.update(layer.params(f"dec{i}"))
        return out

    def encoder_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params().items() if k.startswith("enc")}

    def decoder_params(self) -> dict[str, Tensor]:
        return {k: v for k, v in self.params().items() if k.startswith("dec")}

    def _maybe_drop(self, x: Tensor, training: bool, prng: Prng | None) -> Tensor:
        if training and self.cfg.dropout > 0.0:
            if prng is None:
                raise ValueError("training-mode forward needs a prng for dropout")
            return dropout(x, self.cfg.dropout, prng, training=True)
        return x

    def encode(self, x: Tensor, training: bool = False,
               prng: Prng | None = None) -> Tensor:
        h = tanh(linear_forward(self.enc_layers[0], x))
        h = self._maybe_drop(h, training, prng)
        h = tanh(linear_forward(self.enc_layers[1], h))
        h = self._maybe_drop(h, training, prng)
        z = linear_forward(self.enc_layers[2], h)
        return self._maybe_drop(z, training, prng)

    def decode(self, z: Tensor, training: bool = False,
               prng: Prng | None = None) -> Tensor:
        h = z
        for layer in self.dec_layers[:-1]:
            h = tanh(linear_forward(layer, h))
            h = self._maybe_drop(h, training, prng)
        out = relu(linear_forward(self.dec_layers[-1], h))
        return self._maybe_drop(out, training, prng)

    def sample_loss(self, sample, enc_override=None) -> Tensor:
        """Reconstruction MSE for one vector, dropout inactive."""
        x = np.asarray(sample, dtype=np.float64).reshape(-1)
        if x.size != self.cfg.input_dim:
            raise ValueError(
                f"sample width {x.size} != input dim {self.cfg.input_dim}"
            )
        xt = Tensor(x)
        model = self if enc_override is None else enc_override
        out = self.decode(model.encode(xt))
        return ((out - xt) ** 2).mean()

    def batch_loss(self, dataset: np.ndarray, training: bool = False,
                   prng: Prng | None = None) -> Tensor:
        x = Tensor(np.asarray(dataset, dtype=np.float64))
        out = self.decode(self.encode(x, training, prng), training, prng)
        return ((out - x) ** 2).mean()

    def validate_dataset(self, dataset) -> np.ndarray:
        data = np.asarray(dataset, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] == 0:
            raise ValueError("dataset must be a non-empty 2-D array")
        if data.shape[1] != self.cfg.input_dim:
            raise ValueError(
                f"dataset width {data.shape[1]} != input dim {self.cfg.input_dim}"
            )
        return data

    def encode_sample(self, sample) -> np.ndarray:
        x = np.asarray(sample, dtype=np.float64).reshape(-1)
        return self.encode(Tensor(x)).data.copy()

    def clone_shared_decoder(self) -> "SpectrumAutoencoder":
        """Fresh encoder parameters; decoder tensors shared with self."""
        enc = [
            DenseLayer(
                weight=Tensor(layer.weight.data.copy(), requires_grad=True),
                bias=Tensor(layer.bias.data.copy(), requires_grad=True),
            )
            for layer in self.enc_layers
        ]
        return SpectrumAutoencoder(self.cfg, enc, self.dec_layers, self.trained)


# ---------------------------------------------------------------------------
# structure autoencoder


@dataclass(frozen=True)
class StructureAeConfig:
    d_model: int = 80
    heads: int = 4
    d_struct: int = 1280
    encoder_layers: int = 4
    decoder_layers: int = 12
    node_feature_dim: int = 14
    node_out: int = NODE_TARGET_DIM
    max_degree: int = 8
    distance_cap: int = 5
    max_nodes: int = 64

    def __post_init__(self) -> None:
        positive = (self.d_model, self.heads, self.d_struct,
                    self.encoder_layers, self.node_out, self.max_nodes,
                    self.node_feature_dim)
        if any(v <= 0 for v in positive):
            raise ValueError("all structure-model dims must be positive")
        if self.decoder_layers != 12:
            raise ValueError("the structure decoder depth is fixed at 12")
        if self.d_model % self.heads != 0:
            raise ValueError(
                f"d_model {self.d_model} not divisible by heads {self.heads}"
            )
        if self.max_degree < 1 or self.distance_cap < 1:
            raise ValueError("degree and distance tables need at least 2 rows")


@dataclass
class _StructParams:
    node_embed: DenseLayer
    degree_embed: Tensor
    spatial_embed: Tensor
    enc_blocks: list[AttentionBlock]
    enc_norm: LayerNorm
    enc_proj: DenseLayer
    dec_expand: DenseLayer
    dec_pos: Tensor
    dec_blocks: list[AttentionBlock]
    dec_norm: LayerNorm
    dec_out: DenseLayer


class StructureAutoencoder:
    """Graph-transformer autoencoder over molecular graphs."""

    def __init__(self, cfg: StructureAeConfig, p: _StructParams,
                 trained: bool = False,
                 norm_mu: np.ndarray | None = None,
                 norm_sigma: np.ndarray | None = None):
        self.cfg = cfg
        self.p = p
        self.trained = trained
        self.norm_mu = norm_mu
        self.norm_sigma = norm_sigma

    @classmethod
    def create(cls, cfg: StructureAeConfig, prng: Prng) -> "StructureAutoencoder":
        d = cfg.d_model
        p = _StructParams(
            node_embed=DenseLayer.create(prng, cfg.node_feature_dim, d),
            degree_embed=Tensor(
                prng.uniform((cfg.max_degree + 1, d), -0.1, 0.1),
                requires_grad=True,
            ),
            spatial_embed=Tensor(
                prng.uniform((cfg.distance_cap + 1, cfg.heads), -0.1, 0.1),
                requires_grad=True,
            ),
            enc_blocks=[AttentionBlock.create(prng, d, cfg.heads)
                        for _ in range(cfg.encoder_layers)],
            enc_norm=LayerNorm.create(d),
            enc_proj=DenseLayer.create(prng, d, cfg.d_struct),
            dec_expand=DenseLayer.create(prng, cfg.d_struct, d),
            dec_pos=Tensor(
                prng.uniform((cfg.max_nodes, d), -0.1, 0.1), requires_grad=True
            ),
            dec_blocks=[AttentionBlock.create(prng, d, cfg.heads)
                        for _ in range(cfg.decoder_layers)],
            dec_norm=LayerNorm.create(d),
            dec_out=DenseLayer.create(prng, d, cfg.node_out),
        )
        return cls(cfg, p)

    def params(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        out.update(self.p.node_embed.params("embed/node"))
        out["embed/degree"] = self.p.degree_embed
        out["embed/spatial"] = self.p.spatial_embed
        for i, block in enumerate(self.p.enc_blocks, start=1):
            out.update(block.params(f"enc{i}"))
        out.update(self.p.enc_norm.params("enc_norm"))
        out.update(self.p.enc_proj.params("enc_proj"))
        out.update(self.p.dec_expand.params("dec_expand"))
        out["dec_pos"] = self.p.dec_pos
        for i, block in enumerate(self.p.dec_blocks, start=1):
            out.update(block.params(f"dec{i}"))
        out.update(self.p.dec_norm.params("dec_norm"))
        out.update(self.p.dec_out.params("dec_out"))
        return out

    _ENCODER_PREFIXES = ("embed/", "enc")

    def encoder_params(self) -> dict[str, Tensor]:
        return {
            k: v for k, v in self.params().items()
            if k.startswith(self._ENCODER_PREFIXES)
        }

    def decoder_params(self) -> dict[str, Tensor]:
        return {
            k: v for k, v in self.params().items()
            if not k.startswith(self._ENCODER_PREFIXES)
        }

    # -- featurization ----------------------------------------------------

    def _featurize(self, mol: MolGraph):
        if not mol.atoms:
            raise ValueError("cannot encode an empty graph")
        feats = graph_features(mol, distance_cap=self.cfg.distance_cap)
        degrees = np.minimum(
            feats.node_features[:, 0].astype(int), self.cfg.max_degree
        )
        return feats, degrees

    def _pad_batch(self, mols: Sequence[MolGraph]):
        """Stack variable-size graphs into padded arrays plus a token mask."""
        per_mol = [self._featurize(m) for m in mols]
        counts = np.array([f.node_features.shape[0] for f, _ in per_mol])
        t = int(counts.max())
        b = len(mols)
        feats = np.zeros((b, t, self.cfg.node_feature_dim))
        degrees = np.zeros((b, t), dtype=int)
        spatial = np.zeros((b, t, t), dtype=int)
        mask = np.zeros((b, t))
        for i, (f, deg) in enumerate(per_mol):
            n = counts[i]
            feats[i, :n] = f.node_features
            degrees[i, :n] = deg
            spatial[i, :n, :n] = f.spatial
            mask[i, :n] = 1.0
        return feats, degrees, spatial, mask, counts

    def _encode_tokens(self, feats, degrees, model=None) -> Tensor:
        p = (model or self).p
        n = feats.node_features.shape[0]
        tokens = linear_forward(p.node_embed, Tensor(feats.node_features))
        tokens = tokens + p.degree_embed[degrees]
        bias = p.spatial_embed[feats.spatial.reshape(-1)]
        bias = bias.reshape((n, n, self.cfg.heads)).swapaxes(0, 2).swapaxes(1, 2)
        for block in p.enc_blocks:
            tokens = multihead_attention(block, tokens, bias=bias)
        pooled = tokens.mean(axis=0)
        normed = layer_norm_forward(p.enc_norm, pooled)
        return linear_forward(p.enc_proj, normed)

    def encode_mol(self, mol: MolGraph, model=None) -> Tensor:
        feats, degrees = self._featurize(mol)
        return self._encode_tokens(feats, degrees, model=model)

    def encode_batch(self, mols: Sequence[MolGraph]) -> tuple[Tensor, np.ndarray, np.ndarray]:
        """Latents for many graphs at once; returns (latents, mask, counts)."""
        feats, degrees, spatial, mask, counts = self._pad_batch(mols)
        p = self.p
        b, t = mask.shape
        tokens = linear_forward(p.node_embed, Tensor(feats))
        tokens = tokens + p.degree_embed[degrees]
        bias = p.spatial_embed[spatial.reshape(-1)]
        bias = bias.reshape((b, t, t, self.cfg.heads))
        bias = bias.swapaxes(1, 3).swapaxes(2, 3)
        # padded keys are pushed out of every softmax row
        key_mask = (mask - 1.0).reshape(b, 1, 1, t) * 1e9
        bias = bias + Tensor(key_mask)
        for block in p.enc_blocks:
            tokens = multihead_attention(block, tokens, bias=bias)
        pooled = (tokens * Tensor(mask.reshape(b, t, 1))).sum(axis=1)
        pooled = pooled * Tensor((1.0 / counts).reshape(b, 1))
        normed = layer_norm_forward(p.enc_norm, pooled)
        return linear_forward(p.enc_proj, normed), mask, counts

    def decode_batch(self, latents: Tensor, mask: np.ndarray) -> Tensor:
        """Per-atom outputs [b, t, node_out] for a batch of latents."""
        p = self.p
        b, t = mask.shape
        if t > self.cfg.max_nodes:
            raise ValueError(
                f"batch needs {t} tokens, decoder supports {self.cfg.max_nodes}"
            )
        seed = linear_forward(p.dec_expand, latents)
        tokens = p.dec_pos[:t].reshape((1, t, self.cfg.d_model)) \
            + seed.reshape((b, 1, self.cfg.d_model))
        key_mask = Tensor((mask - 1.0).reshape(b, 1, 1, t) * 1e9)
        for block in p.dec_blocks:
            tokens = multihead_attention(block, tokens, bias=key_mask)
        tokens = layer_norm_forward(p.dec_norm, tokens)
        return linear_forward(p.dec_out, tokens)

    def decode_latent(self, latent: Tensor, n_nodes: int) -> Tensor:
        if n_nodes > self.cfg.max_nodes:
            raise ValueError(
                f"molecule has {n_nodes} atoms, decoder supports at most "
                f"{self.cfg.max_nodes}"
            )
        p = self.p
        seed = linear_forward(p.dec_expand, latent)
        tokens = p.dec_pos[:n_nodes] + seed.reshape((1, self.cfg.d_model))
        for block in p.dec_blocks:
            tokens = multihead_attention(block, tokens)
        tokens = layer_norm_forward(p.dec_norm, tokens)
        return linear_forward(p.dec_out, tokens)

    # -- normalization ----------------------------------------------------

    def fit_normalizer(self, mols: Sequence[MolGraph]) -> None:
        """Per-column target stats over all atoms of the training set."""
        rows = []
        for mol in mols:
            feats, _ = self._featurize(mol)
            rows.append(feats.node_features[:, :self.cfg.node_out])
        stacked = np.concatenate(rows, axis=0)
        self.norm_mu = stacked.mean(axis=0)
        self.norm_sigma = np.maximum(stacked.std(axis=0), SIGMA_FLOOR)

    def target_for(self, mol: MolGraph) -> np.ndarray:
        if self.norm_mu is None or self.norm_sigma is None:
            raise ValueError("fit_normalizer has not run")
        feats, _ = self._featurize(mol)
        raw = feats.node_features[:, :self.cfg.node_out]
        return (raw - self.norm_mu) / self.norm_sigma

    # -- losses ------------------------------------------------------------

    def sample_loss(self, mol: MolGraph, enc_override=None) -> Tensor:
        target = self.target_for(mol)
        latent = self.encode_mol(mol, model=enc_override)
        out = self.decode_latent(latent, len(mol.atoms))
        return ((out - Tensor(target)) ** 2).mean()

    def batch_loss(self, dataset: Sequence[MolGraph], training: bool = False,
                   prng: Prng | None = None) -> Tensor:
        """Mean over molecules of each molecule's mean reconstruction error."""
        latents, mask, counts = self.encode_batch(dataset)
        out = self.decode_batch(latents, mask)
        b, t = mask.shape
        targets = np.zeros((b, t, self.cfg.node_out))
        for i, mol in enumerate(dataset):
            targets[i, :counts[i]] = self.target_for(mol)
        sq = ((out - Tensor(targets)) ** 2) * Tensor(mask.reshape(b, t, 1))
        per_mol = sq.sum(axis=2).sum(axis=1)
        per_mol = per_mol * Tensor(1.0 / (counts * self.cfg.node_out))
        return per_mol.mean()

    def validate_dataset(self, dataset) -> Sequence[MolGraph]:
        if len(dataset) == 0:
            raise ValueError("dataset must be non-empty")
        for mol in dataset:
            if not mol.atoms:
                raise ValueError("dataset contains an empty graph")
            if len(mol.atoms) > self.cfg.max_nodes:
                raise ValueError(
                    f"molecule {mol.id!r} exceeds max_nodes {self.cfg.max_nodes}"
                )
        if self.norm_mu is None:
            self.fit_normalizer(dataset)
        return dataset

    def encode_sample(self, mol: MolGraph) -> np.ndarray:
        return self.encode_mol(mol).data.copy()

    def clone_shared_decoder(self) -> "StructureAutoencoder":
        def copy_dense(layer: DenseLayer) -> DenseLayer:
            return DenseLayer(
                weight=Tensor(layer.weight.data.copy(), requires_grad=True),
                bias=Tensor(layer.bias.data.copy(), requires_grad=True),
            )

        def copy_block(block: AttentionBlock) -> AttentionBlock:
            return AttentionBlock(
                heads=block.heads,
                wq=copy_dense(block.wq), wk=copy_dense(block.wk),
                wv=copy_dense(block.wv), wo=copy_dense(block.wo),
                ff1=copy_dense(block.ff1), ff2=copy_dense(block.ff2),
                ln1=LayerNorm(
                    gamma=Tensor(block.ln1.gamma.data.copy(), requires_grad=True),
                    beta=Tensor(block.ln1.beta.data.copy(), requires_grad=True),
                ),
                ln2=LayerNorm(
                    gamma=Tensor(block.ln2.gamma.data.copy(), requires_grad=True),
                    beta=Tensor(block.ln2.beta.data.copy(), requires_grad=True),
                ),
            )

        p = self.p
        clone = _StructParams(
            node_embed=copy_dense(p.node_embed),
            degree_embed=Tensor(p.degree_embed.data.copy(), requires_grad=True),
            spatial_embed=Tensor(p.spatial_embed.data.copy(), requires_grad=True),
            enc_blocks=[copy_block(b) for b in p.enc_blocks],
            enc_norm=LayerNorm(
                gamma=Tensor(p.enc_norm.gamma.data.copy(), requires_grad=True),
                beta=Tensor(p.enc_norm.beta.data.copy(), requires_grad=True),
            ),
            enc_proj=copy_dense(p.enc_proj),
            dec_expand=p.dec_expand,
            dec_pos=p.dec_pos,
            dec_blocks=p.dec_blocks,
            dec_norm=p.dec_norm,
            dec_out=p.dec_out,
        )
        return StructureAutoencoder(self.cfg, clone, self.trained,
                                    self.norm_mu, self.norm_sigma)


# ---------------------------------------------------------------------------
# training entry points


def train_stage1(model, dataset, epochs: int,
                 opt_cfg: AdamwConfig | None = None,
                 prng: Prng | None = None) -> list[float]:
    """Joint encoder+decoder training; returns the per-epoch loss curve.

    A fixed default dropout stream is used when no prng is supplied, so
    repeat runs stay reproducible.
    """
    if epochs < 0:
        raise ValueError("epochs must be non-negative")
    data = model.validate_dataset(dataset)
    if epochs == 0:
        return []
    if prng is None:
        prng = Prng(0)
    optimizer = Adamw(list(model.params().values()), opt_cfg or AdamwConfig())
    curve = []
    for _ in range(epochs):
        optimizer.zero_grad()
        loss = model.batch_loss(data, training=True, prng=prng)
        loss.backward()
        optimizer.step()
        curve.append(float(loss.data))
    model.trained = True
    return curve


def finetune_encode(sample, base_model, steps: int,
                    opt_cfg: AdamwConfig | None = None) -> np.ndarray:
    """Per-sample encoder fine-tuning against the shared frozen decoder."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    if steps == 0:
        return base_model.encode_sample(sample)
    clone = base_model.clone_shared_decoder()
    optimizer = Adamw(list(clone.encoder_params().values()),
                      opt_cfg or AdamwConfig())
    for _ in range(steps):
        optimizer.zero_grad()
        loss = base_model.sample_loss(sample, enc_override=clone)
        loss.backward()
        optimizer.step()
    # shared decoder tensors accumulated scratch gradients; drop them
    for tensor in base_model.decoder_params().values():
        tensor.grad = None
    return clone.encode_sample(sample)


def reconstruction_loss(model, sample) -> float:
    """Mean squared reconstruction error for one sample."""
    return float(model.sample_loss(sample).data)


def encode_spectrum(binned: BinnedSpectrum, ae: SpectrumAutoencoder,
                    finetune: int = 0,
                    opt_cfg: AdamwConfig | None = None) -> LatentVector:
    """Downsample a binned spectrum and encode it, optionally fine-tuned."""
    if not ae.trained:
        raise ValueError("spectrum autoencoder has not been trained")
    vec = downsample_adjacent(binned.bins)
    if vec.size < ae.cfg.input_dim:
        raise ValueError(
            f"downsampled spectrum has {vec.size} bins, model expects "
            f"{ae.cfg.input_dim}"
        )
    vec = vec[:ae.cfg.input_dim]
    values = finetune_encode(vec, ae, finetune, opt_cfg)
    return LatentVector(values=values, family="spectrum",
                        source_id=binned.source_id)


def encode_structure(mol: MolGraph, ae: StructureAutoencoder,
                     finetune: int = 0,
                     opt_cfg: AdamwConfig | None = None) -> LatentVector:
    """Encode a molecular graph, optionally fine-tuned per sample."""
    if not ae.trained:
        raise ValueError("structure autoencoder has not been trained")
    if not mol.atoms:
        raise ValueError("cannot encode an empty graph")
    values = finetune_encode(mol, ae, finetune, opt_cfg)
    return LatentVector(values=values, family="structure", source_id=mol.id)


# ---------------------------------------------------------------------------
# persistence


def _meta_spectrum(cfg: SpectrumAeConfig, trained: bool) -> np.ndarray:
    return np.array([
        cfg.input_dim, cfg.d_spec, *cfg.encoder_hidden, *cfg.decoder_hidden,
        cfg.dropout, float(trained),
    ])


def save_spectrum_ae(model: SpectrumAutoencoder, path) -> None:
    sections = {"meta": _meta_spectrum(model.cfg, model.trained)}
    sections.update({k: v.data for k, v in model.params().items()})
    save_checkpoint(path, sections)


def load_spectrum_ae(path) -> SpectrumAutoencoder:
    sections = load_checkpoint(path)
    meta = sections["meta"]
    cfg = SpectrumAeConfig(
        input_dim=int(meta[0]), d_spec=int(meta[1]),
        encoder_hidden=(int(meta[2]), int(meta[3])),
        decoder_hidden=tuple(int(v) for v in meta[4:10]),
        dropout=float(meta[10]),
    )
    model = SpectrumAutoencoder.create(cfg, Prng(0))
    model.trained = bool(meta[11])
    _load_params(model, sections)
    return model


def _meta_structure(cfg: StructureAeConfig, trained: bool) -> np.ndarray:
    return np.array([
        cfg.d_model, cfg.heads, cfg.d_struct, cfg.encoder_layers,
        cfg.decoder_layers, cfg.node_feature_dim, cfg.node_out, cfg.max_degree,
        cfg.distance_cap, cfg.max_nodes, float(trained),
    ])


def save_structure_ae(model: StructureAutoencoder, path) -> None:
    sections = {"meta": _meta_structure(model.cfg, model.trained)}
    if model.norm_mu is not None:
        sections["norm/mu"] = model.norm_mu
        sections["norm/sigma"] = model.norm_sigma
    sections.update({k: v.data for k, v in model.params().items()})
    save_checkpoint(path, sections)


def load_structure_ae(path) -> StructureAutoencoder:
    sections = load_checkpoint(path)
    meta = sections["meta"]
    cfg = StructureAeConfig(
        d_model=int(meta[0]), heads=int(meta[1]), d_struct=int(meta[2]),
        encoder_layers=int(meta[3]), decoder_layers=int(meta[4]),
        node_feature_dim=int(meta[5]), node_out=int(meta[6]),
        max_degree=int(meta[7]), distance_cap=int(meta[8]),
        max_nodes=int(meta[9]),
    )
    model = StructureAutoencoder.create(cfg, Prng(0))
    model.trained = bool(meta[10])
    if "norm/mu" in sections:
        model.norm_mu = sections["norm/mu"]
        model.norm_sigma = sections["norm/sigma"]
    _load_params(model, sections)
    return model


def _load_params(model, sections: dict[str, np.ndarray]) -> None:
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
