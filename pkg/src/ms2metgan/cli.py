"""Command line front end for the spectrum-to-structure pipeline.

Subcommands cover the full workflow: `prepare` bins raw spectra,
`train-ae` fits both autoencoders, `encode` builds the latent caches,
`build-decoys` assigns candidate decoys, `train-gan` runs the
adversarial protocol, `search` ranks corpus candidates per spectrum,
and `evaluate` recomputes the benchmark comparison tables.

Configuration is JSON layered over a named preset (`paper` or `desk`).
Unknown keys are rejected with their full dotted path; missing keys
fall back to the preset. Exit codes: 0 on success, 1 for usage or
configuration problems, 2 for missing or malformed data.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import os
import sys
from collections import Counter
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .autoencoders import (
    LatentVector,
    SpectrumAeConfig,
    SpectrumAutoencoder,
    StructureAeConfig,
    StructureAutoencoder,
    encode_spectrum,
    encode_structure,
    load_spectrum_ae,
    load_structure_ae,
    save_spectrum_ae,
    save_structure_ae,
    train_stage1,
)
from .decoygen import (
    CompoundCorpus,
    build_corpus,
    build_test_decoy_set,
    select_training_decoy,
    write_assignments,
)
from .evalbench import emit_table, load_accuracy_table, pairwise_winrate, summarize
from .latentgan import (
    LatentGanConfig,
    LatentMSM,
    ProtocolError,
    RoundConfig,
    load_discriminator,
    run_protocol,
    save_discriminator,
    save_generator,
    write_protocol_log,
)
from .molecules import parse_corpus
from .numkit import AdamwConfig, Prng
from .numkit.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .search import (
    CacheError,
    LatentCache,
    SearchResult,
    cache_read,
    cache_write,
    filter_candidates,
    search_spectrum,
    write_results,
)
from .spectra import (
    BinnedSpectrum,
    MgfError,
    bin_spectrum,
    downsample_adjacent,
    group_by_compound,
    merge_spectra,
    parse_mgf,
)

log = logging.getLogger("ms2metgan.cli")


class UsageError(Exception):
    """Bad invocation or bad configuration; exits with status 1."""


class DataError(Exception):
    """Missing, malformed, or conflicting run data; exits with status 2."""


# ---------------------------------------------------------------------------
# file layout

BINNED_NAME = "binned.msgw"
MAPPING_NAME = "spectrum-compounds.tsv"
SPECTRUM_CACHE_NAME = "spectra.lmsm"
STRUCTURE_CACHE_NAME = "structures.lmsm"
DECOYS_NAME = "decoys.tsv"
SPECTRUM_AE_NAME = "spectrum-ae.msgw"
STRUCTURE_AE_NAME = "structure-ae.msgw"
GENERATOR_NAME = "generator.msgw"
PROTOCOL_LOG_NAME = "protocol-log.tsv"
SEARCH_RESULTS_NAME = "search-results.tsv"
WINRATES_NAME = "winrates.tsv"
ACCURACY_SUMMARY_NAME = "accuracy-summary.tsv"

# Independent seed streams so each stage draws from its own generator.
_STREAM_SPECTRUM_AE = 1
_STREAM_STRUCTURE_AE = 2
_STREAM_SPECTRUM_TRAIN = 3
_STREAM_STRUCTURE_TRAIN = 4
_STREAM_GAN = 5

_DATABASES = ("metacyc", "isomer")
_TOOL_COLUMNS = (
    "midas", "sf-matching", "magma-plus", "csi-fingerid",
    "cfm-id", "metfrag", "cmssp", "csu-ms2",
)
_REFERENCE_COLUMN = "ms2metgan"
_AGGREGATE_ROWS = ("Mean", "SD")


# ---------------------------------------------------------------------------
# configuration

_PRESETS: dict[str, dict] = {
    "paper": {
        "seed": 0,
        "threads": 1,
        "spectrum_ae": {
            "input_dim": 7500,
            "d_spec": 1500,
            "encoder_hidden": [4000, 2500],
            "decoder_hidden": [2000, 2800, 3600, 4500, 5500, 6500],
            "dropout": 1e-4,
        },
        "structure_ae": {
            "d_model": 80,
            "heads": 4,
            "d_struct": 1280,
            "encoder_layers": 4,
            "decoder_layers": 12,
            "node_feature_dim": 14,
            "node_out": 3,
            "max_degree": 8,
            "distance_cap": 5,
            "max_nodes": 64,
        },
        "gan": {
            "gen_hidden": [1500, 1280],
            "tokens": 20,
            "disc_layers": 16,
            "heads": 1,
        },
        "optimizer": {
            "lr": 1e-3,
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
            "weight_decay": 0.01,
        },
        "protocol": {
            "rounds": 9,
            "disc_accuracy_target": 0.99,
            "gen_fool_target": 0.99,
            "final_round_gen_target": 0.9875,
            "max_epochs": 5000,
        },
        "training": {
            "ae_epochs": 500,
            "finetune_steps": 50,
            "decoy_cap": 10,
        },
        "paths": {
            "spectra": "data/spectra.mgf",
            "corpus": "data/corpus.tsv",
            "cache": "cache",
            "checkpoints": "checkpoints",
            "reports": "reports",
        },
    },
    "desk": {
        "seed": 0,
        "threads": 1,
        "spectrum_ae": {
            "input_dim": 64,
            "d_spec": 8,
            "encoder_hidden": [32, 16],
            "decoder_hidden": [12, 16, 24, 32, 44, 56],
            "dropout": 1e-4,
        },
        "structure_ae": {
            "d_model": 16,
            "heads": 2,
            "d_struct": 12,
            "encoder_layers": 4,
            "decoder_layers": 12,
            "node_feature_dim": 14,
            "node_out": 3,
            "max_degree": 8,
            "distance_cap": 5,
            "max_nodes": 32,
        },
        "gan": {
            "gen_hidden": [16, 16],
            "tokens": 4,
            "disc_layers": 3,
            "heads": 1,
        },
        "optimizer": {
            "lr": 1e-3,
            "beta1": 0.9,
            "beta2": 0.999,
            "eps": 1e-8,
            "weight_decay": 0.01,
        },
        "protocol": {
            "rounds": 3,
            "disc_accuracy_target": 0.99,
            "gen_fool_target": 0.99,
            "final_round_gen_target": 0.9875,
            "max_epochs": 2000,
        },
        "training": {
            "ae_epochs": 300,
            "finetune_steps": 25,
            "decoy_cap": 10,
        },
        "paths": {
            "spectra": "data/spectra.mgf",
            "corpus": "data/corpus.tsv",
            "cache": "cache",
            "checkpoints": "checkpoints",
            "reports": "reports",
        },
    },
}


def _merge_config(base: dict, override: dict, trail: str) -> dict:
    """Overlay `override` on `base`, rejecting keys the schema lacks."""
    merged = dict(base)
    for key, value in override.items():
        if not isinstance(key, str) or key not in base:
            raise UsageError(f"unknown config key {trail}{key}")
        slot = base[key]
        here = f"{trail}{key}"
        if isinstance(slot, dict):
            if not isinstance(value, dict):
                raise UsageError(f"config key {here} must be an object")
            merged[key] = _merge_config(slot, value, here + ".")
        elif isinstance(slot, list):
            if (not isinstance(value, list)
                    or not all(_is_int(v) for v in value)):
                raise UsageError(f"config key {here} must be a list of integers")
            merged[key] = list(value)
        elif isinstance(slot, float):
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise UsageError(f"config key {here} must be a number")
            merged[key] = float(value)
        elif isinstance(slot, int):
            if not _is_int(value):
                raise UsageError(f"config key {here} must be an integer")
            merged[key] = value
        else:
            if not isinstance(value, str):
                raise UsageError(f"config key {here} must be a string")
            merged[key] = value
    return merged


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


@dataclass(frozen=True)
class TrainingConfig:
    """Epoch and step budgets that are not model hyperparameters."""

    ae_epochs: int = 500
    finetune_steps: int = 50
    decoy_cap: int = 10

    def __post_init__(self) -> None:
        if self.ae_epochs < 0:
            raise ValueError(f"ae_epochs must be non-negative, got {self.ae_epochs}")
        if self.finetune_steps < 0:
            raise ValueError(
                f"finetune_steps must be non-negative, got {self.finetune_steps}"
            )
        if self.decoy_cap < 1:
            raise ValueError(f"decoy_cap must be at least 1, got {self.decoy_cap}")


@dataclass(frozen=True)
class PathsConfig:
    """Where a run reads its inputs and writes its artifacts."""

    spectra: Path
    corpus: Path
    cache: Path
    checkpoints: Path
    reports: Path


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved settings for one pipeline invocation."""

    seed: int
    threads: int
    spectrum_ae: SpectrumAeConfig
    structure_ae: StructureAeConfig
    gan: LatentGanConfig
    optimizer: AdamwConfig
    protocol: RoundConfig
    training: TrainingConfig
    paths: PathsConfig

    def __post_init__(self) -> None:
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ValueError(f"seed must fit in 64 bits, got {self.seed}")
        if self.threads < 1:
            raise ValueError(f"threads must be at least 1, got {self.threads}")


def _build_run_config(effective: dict) -> RunConfig:
    spec_raw = effective["spectrum_ae"]
    gan_raw = effective["gan"]
    if len(spec_raw["encoder_hidden"]) != 2:
        raise UsageError("spectrum_ae.encoder_hidden must list exactly 2 widths")
    if len(gan_raw["gen_hidden"]) != 2:
        raise UsageError("gan.gen_hidden must list exactly 2 widths")
    try:
        spectrum_ae = SpectrumAeConfig(
            input_dim=spec_raw["input_dim"],
            d_spec=spec_raw["d_spec"],
            encoder_hidden=tuple(spec_raw["encoder_hidden"]),
            decoder_hidden=tuple(spec_raw["decoder_hidden"]),
            dropout=spec_raw["dropout"],
        )
        structure_ae = StructureAeConfig(**effective["structure_ae"])
        # The adversarial pair never carries its own latent widths; they
        # are whatever the two autoencoders produce, so a token count
        # that does not divide that combined width is a config conflict.
        gan = LatentGanConfig(
            d_spec=spectrum_ae.d_spec,
            d_struct=structure_ae.d_struct,
            gen_hidden=tuple(gan_raw["gen_hidden"]),
            tokens=gan_raw["tokens"],
            disc_layers=gan_raw["disc_layers"],
            heads=gan_raw["heads"],
        )
        optimizer = AdamwConfig(**effective["optimizer"])
        protocol = RoundConfig(opt=optimizer, **effective["protocol"])
        training = TrainingConfig(**effective["training"])
        paths = PathsConfig(**{k: Path(v) for k, v in effective["paths"].items()})
        return RunConfig(
            seed=effective["seed"],
            threads=effective["threads"],
            spectrum_ae=spectrum_ae,
            structure_ae=structure_ae,
            gan=gan,
            optimizer=optimizer,
            protocol=protocol,
            training=training,
            paths=paths,
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid config: {exc}") from exc


def load_config(
    config_path: str | Path | None,
    preset_name: str = "paper",
    seed_override: int | None = None,
    threads_override: int | None = None,
) -> tuple[RunConfig, dict]:
    """Resolve preset, optional JSON file, and flag overrides in that order."""
    if preset_name not in _PRESETS:
        raise UsageError(
            f"unknown preset {preset_name!r}; choose from {sorted(_PRESETS)}"
        )
    effective = copy.deepcopy(_PRESETS[preset_name])
    if config_path is not None:
        path = Path(config_path)
        if not path.is_file():
            raise UsageError(f"config file not found: {path}")
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(
                f"{path}: invalid JSON at line {exc.lineno} column "
                f"{exc.colno}: {exc.msg}"
            ) from exc
        if not isinstance(raw, dict):
            raise UsageError(f"{path}: top level must be a JSON object")
        effective = _merge_config(effective, raw, "")
    if seed_override is not None:
        effective["seed"] = seed_override
    if threads_override is not None:
        effective["threads"] = threads_override
    return _build_run_config(effective), effective


def _stream_seed(seed: int, stream: int) -> int:
    return (seed + stream) % (2 ** 64)


# ---------------------------------------------------------------------------
# shared run helpers

def _require_file(path: Path, what: str) -> Path:
    if not path.is_file():
        raise DataError(f"{what} not found: {path}")
    return path


def _ensure_absent(paths: Sequence[Path], force: bool) -> None:
    existing = [str(p) for p in paths if p.exists()]
    if existing and not force:
        listing = ", ".join(existing)
        raise DataError(f"refusing to overwrite {listing} (pass --force to replace)")


def _load_sections(path: Path) -> dict[str, np.ndarray]:
    try:
        return load_checkpoint(path)
    except CheckpointError as exc:
        raise DataError(str(exc)) from exc


def _load_corpus(path: Path) -> CompoundCorpus:
    try:
        records = parse_corpus(path.read_text(encoding="utf-8"))
        return build_corpus(records)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from exc


def _load_cache(path: Path) -> LatentCache:
    try:
        return cache_read(path)
    except CacheError as exc:
        raise DataError(str(exc)) from exc


def _read_mapping(path: Path) -> list[tuple[str, str]]:
    rows: list[tuple[str, str]] = []
    for lineno, line in enumerate(
        path.read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(
                f"{path}:{lineno}: expected 'spectrum<TAB>compound', got {line!r}"
            )
        rows.append((parts[0], parts[1]))
    return rows


def _binned_ids(sections: dict[str, np.ndarray]) -> list[str]:
    ids = sorted(
        name[len("bins/"):] for name in sections if name.startswith("bins/")
    )
    if not ids:
        raise DataError("binned spectrum archive holds no spectra")
    return ids


def _cached_latent(cache: LatentCache, key: str, family: str,
                   what: str) -> LatentVector:
    if key not in cache:
        raise DataError(f"no cached {what} latent for {key!r} (run encode first)")
    return LatentVector(
        values=cache.get(key).astype(np.float64), family=family, source_id=key,
    )


# ---------------------------------------------------------------------------
# subcommands

def cmd_prepare(cfg: RunConfig, args: argparse.Namespace) -> None:
    mgf_path = _require_file(cfg.paths.spectra, "spectra file")
    binned_path = cfg.paths.cache / BINNED_NAME
    mapping_path = cfg.paths.cache / MAPPING_NAME
    _ensure_absent((binned_path, mapping_path), args.force)
    try:
        spectra = parse_mgf(mgf_path.read_text(encoding="utf-8"))
    except MgfError as exc:
        raise DataError(str(exc)) from exc
    if not spectra:
        raise DataError(f"{mgf_path}: no spectra found")

    annotated = [s for s in spectra if s.compound_id]
    anonymous = [s for s in spectra if not s.compound_id]
    groups = group_by_compound(annotated)
    merged = [
        merge_spectra(groups[cid], merged_id=cid) for cid in sorted(groups)
    ]
    final = merged + anonymous
    counts = Counter(s.id for s in final)
    duplicates = sorted(i for i, n in counts.items() if n > 1)
    if duplicates:
        raise DataError(
            f"duplicate spectrum ids after per-compound merging: {duplicates}"
        )

    sections: dict[str, np.ndarray] = {}
    mapping_lines = []
    for s in final:
        binned = bin_spectrum(s)
        sections[f"bins/{s.id}"] = binned.bins
        sections[f"precursor/{s.id}"] = np.array([s.precursor_mz])
        mapping_lines.append(f"{s.id}\t{s.compound_id}")
    cfg.paths.cache.mkdir(parents=True, exist_ok=True)
    save_checkpoint(binned_path, sections)
    mapping_path.write_text("\n".join(mapping_lines) + "\n", encoding="utf-8")
    log.info(
        "prepared %d spectra (%d merged compounds, %d unannotated) -> %s",
        len(final), len(merged), len(anonymous), binned_path,
    )


def cmd_train_ae(cfg: RunConfig, args: argparse.Namespace) -> None:
    binned_path = _require_file(cfg.paths.cache / BINNED_NAME,
                                "binned spectrum archive")
    corpus_path = _require_file(cfg.paths.corpus, "compound corpus")
    spec_out = cfg.paths.checkpoints / SPECTRUM_AE_NAME
    struct_out = cfg.paths.checkpoints / STRUCTURE_AE_NAME
    _ensure_absent((spec_out, struct_out), args.force)

    sections = _load_sections(binned_path)
    rows = []
    for sid in _binned_ids(sections):
        vec = downsample_adjacent(sections[f"bins/{sid}"])
        if vec.size < cfg.spectrum_ae.input_dim:
            raise DataError(
                f"spectrum {sid!r} downsamples to {vec.size} bins, model "
                f"expects {cfg.spectrum_ae.input_dim}"
            )
        rows.append(vec[: cfg.spectrum_ae.input_dim])
    spectrum_data = np.stack(rows)

    corpus = _load_corpus(corpus_path)
    molecules = [corpus.entry(cid).mol for cid in sorted(corpus.records)]

    spec_ae = SpectrumAutoencoder.create(
        cfg.spectrum_ae, Prng(_stream_seed(cfg.seed, _STREAM_SPECTRUM_AE))
    )
    try:
        spec_curve = train_stage1(
            spec_ae, spectrum_data, cfg.training.ae_epochs,
            opt_cfg=cfg.optimizer,
            prng=Prng(_stream_seed(cfg.seed, _STREAM_SPECTRUM_TRAIN)),
        )
    except ValueError as exc:
        raise DataError(f"spectrum autoencoder training: {exc}") from exc

    struct_ae = StructureAutoencoder.create(
        cfg.structure_ae, Prng(_stream_seed(cfg.seed, _STREAM_STRUCTURE_AE))
    )
    try:
        struct_curve = train_stage1(
            struct_ae, molecules, cfg.training.ae_epochs,
            opt_cfg=cfg.optimizer,
            prng=Prng(_stream_seed(cfg.seed, _STREAM_STRUCTURE_TRAIN)),
        )
    except ValueError as exc:
        raise DataError(f"structure autoencoder training: {exc}") from exc

    cfg.paths.checkpoints.mkdir(parents=True, exist_ok=True)
    save_spectrum_ae(spec_ae, spec_out)
    save_structure_ae(struct_ae, struct_out)
    log.info(
        "trained spectrum autoencoder on %d spectra (final loss %.6g) -> %s",
        spectrum_data.shape[0], spec_curve[-1] if spec_curve else float("nan"),
        spec_out,
    )
    log.info(
        "trained structure autoencoder on %d molecules (final loss %.6g) -> %s",
        len(molecules), struct_curve[-1] if struct_curve else float("nan"),
        struct_out,
    )


def cmd_encode(cfg: RunConfig, args: argparse.Namespace) -> None:
    binned_path = _require_file(cfg.paths.cache / BINNED_NAME,
                                "binned spectrum archive")
    corpus_path = _require_file(cfg.paths.corpus, "compound corpus")
    spec_ae_path = _require_file(cfg.paths.checkpoints / SPECTRUM_AE_NAME,
                                 "spectrum autoencoder checkpoint")
    struct_ae_path = _require_file(cfg.paths.checkpoints / STRUCTURE_AE_NAME,
                                   "structure autoencoder checkpoint")
    spec_cache_path = cfg.paths.cache / SPECTRUM_CACHE_NAME
    struct_cache_path = cfg.paths.cache / STRUCTURE_CACHE_NAME
    _ensure_absent((spec_cache_path, struct_cache_path), args.force)

    try:
        spec_ae = load_spectrum_ae(spec_ae_path)
        struct_ae = load_structure_ae(struct_ae_path)
    except (CheckpointError, ValueError) as exc:
        raise DataError(str(exc)) from exc

    sections = _load_sections(binned_path)
    corpus = _load_corpus(corpus_path)
    steps = cfg.training.finetune_steps

    spec_cache = LatentCache(dim=spec_ae.cfg.d_spec)
    try:
        for sid in _binned_ids(sections):
            latent = encode_spectrum(
                BinnedSpectrum(bins=sections[f"bins/{sid}"], source_id=sid),
                spec_ae, finetune=steps, opt_cfg=cfg.optimizer,
            )
            spec_cache.add(sid, latent.values)
        struct_cache = LatentCache(dim=struct_ae.cfg.d_struct)
        for cid in sorted(corpus.records):
            latent = encode_structure(
                corpus.entry(cid).mol, struct_ae,
                finetune=steps, opt_cfg=cfg.optimizer,
            )
            struct_cache.add(cid, latent.values)
    except (ValueError, CacheError) as exc:
        raise DataError(str(exc)) from exc

    cache_write(spec_cache, spec_cache_path)
    cache_write(struct_cache, struct_cache_path)
    log.info(
        "encoded %d spectra -> %s and %d structures -> %s (%d tuning steps each)",
        len(spec_cache), spec_cache_path, len(struct_cache), struct_cache_path,
        steps,
    )


def cmd_build_decoys(cfg: RunConfig, args: argparse.Namespace) -> None:
    corpus_path = _require_file(cfg.paths.corpus, "compound corpus")
    mapping_path = _require_file(cfg.paths.cache / MAPPING_NAME,
                                 "spectrum-compound mapping")
    out_path = cfg.paths.cache / DECOYS_NAME
    _ensure_absent((out_path,), args.force)

    corpus = _load_corpus(corpus_path)
    assignments = []
    for sid, cid in _read_mapping(mapping_path):
        if not cid:
            continue
        if cid not in corpus.records:
            raise DataError(
                f"spectrum {sid!r} is annotated with {cid!r}, which the "
                f"corpus does not contain"
            )
        assignments.append(
            build_test_decoy_set(
                cid, corpus, cap=cfg.training.decoy_cap, spectrum_id=sid,
            )
        )
    if not assignments:
        raise DataError("no annotated spectra; nothing to assign decoys to")
    write_assignments(assignments, out_path)
    total = sum(len(a.decoy_ids) for a in assignments)
    log.info(
        "assigned %d decoys across %d spectra -> %s",
        total, len(assignments), out_path,
    )


def cmd_train_gan(cfg: RunConfig, args: argparse.Namespace) -> None:
    spec_cache_path = _require_file(cfg.paths.cache / SPECTRUM_CACHE_NAME,
                                    "spectrum latent cache")
    struct_cache_path = _require_file(cfg.paths.cache / STRUCTURE_CACHE_NAME,
                                      "structure latent cache")
    mapping_path = _require_file(cfg.paths.cache / MAPPING_NAME,
                                 "spectrum-compound mapping")
    corpus_path = _require_file(cfg.paths.corpus, "compound corpus")
    checkpoint_paths = [
        cfg.paths.checkpoints / f"gan-{k}.msgw"
        for k in range(cfg.protocol.rounds + 1)
    ]
    generator_path = cfg.paths.checkpoints / GENERATOR_NAME
    log_path = cfg.paths.reports / PROTOCOL_LOG_NAME
    _ensure_absent((*checkpoint_paths, generator_path, log_path), args.force)

    spec_cache = _load_cache(spec_cache_path)
    struct_cache = _load_cache(struct_cache_path)
    if spec_cache.dim != cfg.gan.d_spec:
        raise DataError(
            f"spectrum cache dim {spec_cache.dim} does not match the "
            f"configured latent width {cfg.gan.d_spec}"
        )
    if struct_cache.dim != cfg.gan.d_struct:
        raise DataError(
            f"structure cache dim {struct_cache.dim} does not match the "
            f"configured latent width {cfg.gan.d_struct}"
        )
    corpus = _load_corpus(corpus_path)

    true_msms: list[LatentMSM] = []
    decoy_msms: list[LatentMSM] = []
    spectrum_latents: list[LatentVector] = []
    undecoyed: list[str] = []
    for sid, cid in _read_mapping(mapping_path):
        if not cid:
            continue
        spec_latent = _cached_latent(spec_cache, sid, "spectrum", "spectrum")
        struct_latent = _cached_latent(struct_cache, cid, "structure",
                                       "structure")
        true_msms.append(LatentMSM(spec_latent, struct_latent, "true-match"))
        spectrum_latents.append(spec_latent)
        decoy_id = select_training_decoy(cid, corpus)
        if decoy_id is None:
            undecoyed.append(sid)
            continue
        decoy_latent = _cached_latent(struct_cache, decoy_id, "structure",
                                      "structure")
        decoy_msms.append(LatentMSM(spec_latent, decoy_latent, "decoy"))
    if not true_msms:
        raise DataError("no annotated spectra; nothing to train the pair on")
    if undecoyed:
        log.warning(
            "%d spectra have no qualifying isomer decoy and only serve as "
            "positives: %s", len(undecoyed), ", ".join(undecoyed[:10]),
        )

    try:
        result = run_protocol(
            true_msms, decoy_msms, spectrum_latents,
            cfg.protocol, cfg.gan,
            Prng(_stream_seed(cfg.seed, _STREAM_GAN)),
        )
    except ProtocolError as exc:
        raise DataError(str(exc)) from exc

    cfg.paths.checkpoints.mkdir(parents=True, exist_ok=True)
    cfg.paths.reports.mkdir(parents=True, exist_ok=True)
    for name, disc in result.checkpoints:
        save_discriminator(disc, cfg.paths.checkpoints / f"{name.lower()}.msgw")
    save_generator(result.generator, generator_path)
    write_protocol_log(result.reports, log_path)
    finals = {r.round_index: r for r in result.reports
              if r.phase == "discriminator"}
    log.info(
        "protocol finished: %d checkpoints, final accuracy %s -> %s",
        len(result.checkpoints),
        float(finals[max(finals)].metric), log_path,
    )
    for report in result.reports:
        log.debug(
            "round %d %s: %d epochs, metric %.4f, %s",
            report.round_index, report.phase, report.epochs,
            float(report.metric),
            "converged" if report.converged else "stopped at the epoch cap",
        )


def cmd_search(cfg: RunConfig, args: argparse.Namespace) -> None:
    spectra_path = Path(args.spectra) if args.spectra else cfg.paths.spectra
    struct_cache_path = (Path(args.cache) if args.cache
                         else cfg.paths.cache / STRUCTURE_CACHE_NAME)
    model_path = (Path(args.model) if args.model
                  else cfg.paths.checkpoints / f"gan-{cfg.protocol.rounds}.msgw")
    _require_file(spectra_path, "spectra file")
    _require_file(struct_cache_path, "structure latent cache")
    _require_file(model_path, "discriminator checkpoint")
    corpus_path = _require_file(cfg.paths.corpus, "compound corpus")
    spec_ae_path = _require_file(cfg.paths.checkpoints / SPECTRUM_AE_NAME,
                                 "spectrum autoencoder checkpoint")
    out_path = cfg.paths.reports / SEARCH_RESULTS_NAME
    _ensure_absent((out_path,), args.force)

    try:
        discriminator = load_discriminator(model_path)
        spec_ae = load_spectrum_ae(spec_ae_path)
    except (CheckpointError, ValueError) as exc:
        raise DataError(str(exc)) from exc
    struct_cache = _load_cache(struct_cache_path)
    if discriminator.cfg.d_spec != spec_ae.cfg.d_spec:
        raise DataError(
            f"discriminator expects spectrum latents of width "
            f"{discriminator.cfg.d_spec}, autoencoder produces "
            f"{spec_ae.cfg.d_spec}"
        )
    if discriminator.cfg.d_struct != struct_cache.dim:
        raise DataError(
            f"discriminator expects structure latents of width "
            f"{discriminator.cfg.d_struct}, cache holds {struct_cache.dim}"
        )
    corpus = _load_corpus(corpus_path)

    try:
        spectra = parse_mgf(spectra_path.read_text(encoding="utf-8"))
    except MgfError as exc:
        raise DataError(str(exc)) from exc
    if not spectra:
        raise DataError(f"{spectra_path}: no spectra found")

    results: list[SearchResult] = []
    empty = 0
    top1 = 0
    ranked_true = 0
    for s in spectra:
        try:
            latent = encode_spectrum(
                bin_spectrum(s), spec_ae,
                finetune=cfg.training.finetune_steps, opt_cfg=cfg.optimizer,
            )
            candidates = filter_candidates(s.precursor_mz, corpus)
        except ValueError as exc:
            raise DataError(f"spectrum {s.id!r}: {exc}") from exc
        if not candidates:
            empty += 1
            results.append(SearchResult(spectrum_id=s.id, ranked=()))
            log.debug("spectrum %s: no candidates in the mass window", s.id)
            continue
        missing = [c for c in candidates if c not in struct_cache]
        if missing:
            raise DataError(
                f"spectrum {s.id!r}: no cached structure latent for "
                f"{missing[:5]} (run encode first)"
            )
        true_id = s.compound_id if s.compound_id in candidates else None
        result = search_spectrum(
            s.id, latent.values, candidates, discriminator.score,
            cache=struct_cache, true_id=true_id,
        )
        results.append(result)
        if result.true_rank is not None:
            ranked_true += 1
            if result.true_rank == 1:
                top1 += 1

    cfg.paths.reports.mkdir(parents=True, exist_ok=True)
    write_results(results, out_path)
    log.info(
        "searched %d spectra (%d without candidates) -> %s",
        len(results), empty, out_path,
    )
    if ranked_true:
        log.info(
            "%d of %d annotated spectra ranked their compound first",
            top1, ranked_true,
        )


def cmd_evaluate(cfg: RunConfig, args: argparse.Namespace) -> None:
    fixtures = Path(args.fixtures)
    accuracy_dir = fixtures / "accuracy"
    if not accuracy_dir.is_dir():
        raise DataError(f"accuracy fixture directory not found: {accuracy_dir}")
    winrates_path = cfg.paths.reports / WINRATES_NAME
    summary_path = cfg.paths.reports / ACCURACY_SUMMARY_NAME
    _ensure_absent((winrates_path, summary_path), args.force)

    winrate_rows = []
    summary_rows = []
    for database in _DATABASES:
        tools_path = _require_file(accuracy_dir / f"{database}_tools.tsv",
                                   "tool accuracy table")
        gans_path = _require_file(accuracy_dir / f"{database}_gans.tsv",
                                  "round accuracy table")
        try:
            tools = load_accuracy_table(tools_path)
            gans = load_accuracy_table(gans_path)
        except ValueError as exc:
            raise DataError(str(exc)) from exc
        for column in (_REFERENCE_COLUMN,) + _TOOL_COLUMNS:
            if column not in tools.columns:
                raise DataError(f"{tools_path}: missing column {column!r}")
        # The printed tables close with aggregate Mean and SD rows; the
        # per-benchmark arithmetic runs over the benchmark rows only.
        tool_benchmarks = [r for r in tools.row_labels
                           if r not in _AGGREGATE_ROWS]
        gan_benchmarks = [r for r in gans.row_labels
                          if r not in _AGGREGATE_ROWS]
        try:
            ours = tools.column(_REFERENCE_COLUMN, rows=tool_benchmarks)
            winrate_rows.append(
                [database] + [
                    str(pairwise_winrate(
                        ours, tools.column(tool, rows=tool_benchmarks)
                    ))
                    for tool in _TOOL_COLUMNS
                ]
            )
            for model in gans.columns:
                summary = summarize({
                    row: Fraction(Decimal(cell)) / 100
                    for row, cell in gans.column(
                        model, rows=gan_benchmarks
                    ).items()
                })
                if "Mean" in gans.row_labels:
                    printed = gans.cells[model]["Mean"]
                    if str(summary.mean_percent) != printed:
                        raise DataError(
                            f"{gans_path}: column {model!r} mean "
                            f"{summary.mean_percent} disagrees with the "
                            f"printed {printed}"
                        )
                if "SD" in gans.row_labels:
                    printed = gans.cells[model]["SD"]
                    if str(summary.sd) != printed:
                        raise DataError(
                            f"{gans_path}: column {model!r} deviation "
                            f"{summary.sd} disagrees with the printed "
                            f"{printed}"
                        )
                summary_rows.append(
                    [database, model,
                     str(summary.mean_percent), str(summary.sd)]
                )
        except (ValueError, InvalidOperation) as exc:
            raise DataError(f"{gans_path}: {exc}") from exc

    expected_path = accuracy_dir / "winrate_expected.tsv"
    if expected_path.is_file():
        expected = [
            line.split("\t")
            for line in expected_path.read_text(encoding="utf-8").splitlines()
            if line
        ]
        computed = [["database", *_TOOL_COLUMNS]] + winrate_rows
        if expected != computed:
            raise DataError(
                f"computed win rates disagree with {expected_path}; "
                f"got {computed!r}"
            )
        log.info("win rates match the reference table")

    cfg.paths.reports.mkdir(parents=True, exist_ok=True)
    emit_table(winrate_rows, winrates_path, header=["database", *_TOOL_COLUMNS])
    emit_table(summary_rows, summary_path,
               header=["database", "model", "mean", "sd"])
    log.info(
        "wrote %d win rate rows -> %s and %d summaries -> %s",
        len(winrate_rows), winrates_path, len(summary_rows), summary_path,
    )


# ---------------------------------------------------------------------------
# argument parsing and dispatch

class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.format_usage().rstrip()}\n{message}")


def _add_common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH",
                        help="JSON settings layered over the preset")
    parser.add_argument("--preset", choices=sorted(_PRESETS), default="paper",
                        help="base settings (default: paper)")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the run seed")
    parser.add_argument("--threads", type=int, default=None,
                        help="thread budget recorded with the run")
    parser.add_argument("--force", action="store_true",
                        help="overwrite existing output files")


_COMMANDS: tuple[tuple[str, str, Callable], ...] = (
    ("prepare", "parse and bin an MGF file, merging replicate spectra",
     cmd_prepare),
    ("train-ae", "fit the spectrum and structure autoencoders", cmd_train_ae),
    ("encode", "fill the spectrum and structure latent caches", cmd_encode),
    ("build-decoys", "assign isomeric decoy candidates per spectrum",
     cmd_build_decoys),
    ("train-gan", "run the adversarial round protocol", cmd_train_gan),
    ("search", "rank corpus candidates for each query spectrum", cmd_search),
    ("evaluate", "recompute the benchmark comparison tables", cmd_evaluate),
)


def build_parser() -> _Parser:
    parser = _Parser(
        prog="ms2metgan",
        description="Spectrum-to-structure matching with an adversarial "
                    "latent ranker.",
    )
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    for name, help_text, func in _COMMANDS:
        sub = subparsers.add_parser(name, help=help_text,
                                    description=help_text)
        _add_common_flags(sub)
        if name == "search":
            sub.add_argument("--spectra", metavar="PATH",
                             help="query MGF file (default: paths.spectra)")
            sub.add_argument("--cache", metavar="PATH",
                             help="structure latent cache "
                                  "(default: paths.cache/structures.lmsm)")
            sub.add_argument("--model", metavar="PATH",
                             help="discriminator checkpoint "
                                  "(default: final round under "
                                  "paths.checkpoints)")
        if name == "evaluate":
            sub.add_argument("--fixtures", metavar="DIR", default="fixtures",
                             help="fixture tree holding accuracy/ tables")
        sub.set_defaults(func=func)
    return parser


_LOG_LEVELS = {"debug": logging.DEBUG, "info": logging.INFO}


def _configure_logging() -> None:
    raw = os.environ.get("MS2METGAN_LOG", "info").strip().lower()
    if raw not in _LOG_LEVELS:
        raise UsageError(
            f"MS2METGAN_LOG must be 'debug' or 'info', got {raw!r}"
        )
    package_log = logging.getLogger("ms2metgan")
    package_log.handlers.clear()
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    package_log.addHandler(handler)
    package_log.setLevel(_LOG_LEVELS[raw])
    package_log.propagate = False


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(sys.argv[1:] if argv is None else list(argv))
        if getattr(args, "command", None) is None:
            raise UsageError(f"{parser.format_usage().rstrip()}\n"
                             f"a command is required")
        _configure_logging()
        cfg, effective = load_config(
            args.config, args.preset, args.seed, args.threads,
        )
        log.info("effective config: %s", json.dumps(effective, sort_keys=True))
        log.info("seed %d, %d threads", cfg.seed, cfg.threads)
        args.func(cfg, args)
        return 0
    except UsageError as exc:
        print(f"ms2metgan: error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"ms2metgan: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
