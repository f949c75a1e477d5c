"""Whole-system gate: one test per shipped guarantee, run in order.

Each test is a single pass/fail line under ``pytest -v``. Guarantees that
carry a wall-clock budget measure their own elapsed time and fail when the
budget is exceeded, so a green run certifies both correctness and cost.
"""
from __future__ import annotations

import json
import math
import time
from dataclasses import replace
from decimal import Decimal
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from ms2metgan import cli
from ms2metgan.autoencoders import (
    LatentVector,
    SpectrumAutoencoder,
    StructureAutoencoder,
    encode_spectrum,
    encode_structure,
    train_stage1,
)
from ms2metgan.decoygen import (
    build_corpus,
    build_test_decoy_set,
    read_assignments,
    select_training_decoy,
)
from ms2metgan.evalbench import (
    load_accuracy_table,
    load_rank_table,
    pairwise_winrate,
    summarize,
    topk_percent,
)
from ms2metgan.latentgan import (
    Discriminator,
    Generator,
    LatentMSM,
    load_discriminator,
    run_protocol,
    save_discriminator,
    train_generator_phase,
)
from ms2metgan.molecules import (
    CorpusRecord,
    PROTON_MASS,
    formula_of,
    monoisotopic_mass,
    parse_smiles,
    tanimoto,
)
from ms2metgan.numkit import (
    Adamw,
    AdamwConfig,
    AttentionBlock,
    CheckpointMagicError,
    CheckpointTruncatedError,
    DenseLayer,
    LayerNorm,
    Prng,
    Tensor,
    grad_check,
    layer_norm_forward,
    linear_forward,
    load_checkpoint,
    multihead_attention,
    save_checkpoint,
    tanh,
)
from ms2metgan.search import (
    CacheMagicError,
    CacheTruncatedError,
    LatentCache,
    cache_read,
    cache_write,
    rank_true,
    search_spectrum,
)
from ms2metgan.spectra import N_BINS, Peak, Spectrum, bin_spectrum

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"

DESK = cli.load_config(None, "desk")[0]

DATABASES = ("metacyc", "isomer")
TOOLS = ("midas", "sf-matching", "magma-plus", "csi-fingerid", "cfm-id",
         "metfrag", "cmssp", "csu-ms2")
AGGREGATES = ("Mean", "SD")


def benchmark_rows(table) -> list[str]:
    return [r for r in table.row_labels if r not in AGGREGATES]


# ---------------------------------------------------------------------------
# 1. rank-table arithmetic


def test_c01_rank_tables_recompute_to_printed_percentages():
    t0 = time.perf_counter()
    checked = 0
    for family in DATABASES:
        paths = sorted((FIXTURES / "rank_distributions" / family).glob("*.tsv"))
        assert len(paths) == 18, f"{family}: expected 18 tables, found {len(paths)}"
        for path in paths:
            for row in load_rank_table(path):
                for k in (1, 2, 5):
                    got = str(topk_percent(row.distribution, k))
                    assert got == row.printed[k], (
                        f"{path.name} {row.benchmark} top-{k}: recomputed "
                        f"{got}, table prints {row.printed[k]}"
                    )
                checked += 1
    assert checked == 36 * 9

    rows = load_rank_table(FIXTURES / "rank_distributions" / "metacyc" / "midas.tsv")
    anchor = next(r for r in rows if r.benchmark == "CASMI2016SP")
    assert anchor.distribution.total == 122
    assert anchor.distribution.topk_count(2) == 116
    assert topk_percent(anchor.distribution, 2) == Decimal("95.08")

    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0, f"rank-table recompute took {elapsed:.2f}s"


# ---------------------------------------------------------------------------
# 2. head-to-head win rates


def test_c02_win_rate_grid_matches_reference_cells():
    t0 = time.perf_counter()
    expected_rows = [
        line.split("\t")
        for line in (FIXTURES / "accuracy" / "winrate_expected.tsv")
        .read_text(encoding="utf-8").splitlines()
    ]
    expected_cols = tuple(expected_rows[0][1:])
    assert expected_cols == TOOLS
    expected = {row[0]: dict(zip(expected_cols, row[1:])) for row in expected_rows[1:]}

    cells_checked = 0
    computed: dict[tuple[str, str], str] = {}
    for db in DATABASES:
        table = load_accuracy_table(FIXTURES / "accuracy" / f"{db}_tools.tsv")
        rows = benchmark_rows(table)
        assert len(rows) == 9
        ours = {r: Decimal(c) for r, c in table.column("ms2metgan", rows).items()}
        for tool in TOOLS:
            theirs = {r: Decimal(c) for r, c in table.column(tool, rows).items()}
            got = str(pairwise_winrate(ours, theirs))
            computed[(db, tool)] = got
            assert got == expected[db][tool], (
                f"{db}/{tool}: computed win rate {got}, "
                f"reference says {expected[db][tool]}"
            )
            cells_checked += 1
    assert cells_checked == 16
    assert computed[("metacyc", "midas")] == "66.67"
    assert computed[("metacyc", "cmssp")] == "55.56"
    assert computed[("isomer", "midas")] == "88.89"

    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0, f"win-rate grid took {elapsed:.2f}s"


# ---------------------------------------------------------------------------
# 3. per-round means and standard deviations


def test_c03_round_summary_columns_match_printed_mean_and_sd():
    t0 = time.perf_counter()
    columns_checked = 0
    anchors: dict[tuple[str, str], tuple[str, str]] = {}
    for db in DATABASES:
        table = load_accuracy_table(FIXTURES / "accuracy" / f"{db}_gans.tsv")
        rows = benchmark_rows(table)
        assert len(rows) == 9
        for col in table.columns:
            cells = table.column(col, rows)
            summary = summarize(
                {r: Fraction(Decimal(c)) / 100 for r, c in cells.items()}
            )
            printed_mean = table.cells[col]["Mean"]
            printed_sd = table.cells[col]["SD"]
            assert str(summary.mean_percent) == printed_mean, (
                f"{db}/{col}: mean {summary.mean_percent} != printed {printed_mean}"
            )
            assert str(summary.sd) == printed_sd, (
                f"{db}/{col}: sd {summary.sd} != printed {printed_sd}"
            )
            anchors[(db, col)] = (printed_mean, printed_sd)
            columns_checked += 1
    assert columns_checked == 20
    assert anchors[("metacyc", "gan-9")] == ("76.33", "0.1618")
    assert anchors[("metacyc", "gan-0")][1] == "0.3286"

    elapsed = time.perf_counter() - t0
    assert elapsed < 1.0, f"summary columns took {elapsed:.2f}s"


# ---------------------------------------------------------------------------
# 4. analytic gradients against central differences


GRAD_TOL = 1e-4

# Seeds chosen so relu pre-activations in the generator probe keep a margin
# above 5e-3 at batch 1; a kink within one step of the difference stencil
# would invalidate the comparison, not the gradients.
GENERATOR_SEEDS = (0, 3, 4, 5, 6, 9, 11, 12, 13, 14)


def test_c04_every_trainable_block_passes_gradient_checks():
    t0 = time.perf_counter()
    worst: dict[str, float] = {}

    def record(name: str, err: float) -> None:
        worst[name] = max(worst.get(name, 0.0), err)
        assert err < GRAD_TOL, f"{name}: max relative error {err:.3e}"

    for seed in range(10):
        prng = Prng(seed)
        layer = DenseLayer.create(prng, 5, 4)
        x = Tensor(prng.uniform((3, 5), -1.0, 1.0).data)
        c = Tensor(prng.uniform((3, 4), -1.0, 1.0).data)
        err = grad_check(
            lambda: (tanh(linear_forward(layer, x)) * c).sum(),
            [layer.weight, layer.bias], h=1e-4, order=2,
        )
        record("dense", err)

    for seed in range(10):
        prng = Prng(seed)
        ln = LayerNorm.create(6)
        ln.gamma.data += prng.uniform((6,), -0.3, 0.3).data
        ln.beta.data += prng.uniform((6,), -0.3, 0.3).data
        x = Tensor(prng.uniform((4, 6), -1.0, 1.0).data)
        c = Tensor(prng.uniform((4, 6), -1.0, 1.0).data)
        err = grad_check(
            lambda: (layer_norm_forward(ln, x) * c).sum(),
            [ln.gamma, ln.beta], h=1e-4, order=2,
        )
        record("layer norm", err)

    for seed in range(10):
        prng = Prng(seed)
        block = AttentionBlock.create(prng, 12, 2)
        x = Tensor(prng.uniform((2, 5, 12), -1.0, 1.0).data)
        c = Tensor(prng.uniform((2, 5, 12), -1.0, 1.0).data)
        # mean rather than sum keeps the probe loss O(1), holding roundoff
        # noise in the differences below the checker's relative-error floor
        err = grad_check(
            lambda: (multihead_attention(block, x) * c).mean(),
            list(block.params("blk").values()), h=1e-3, order=4,
        )
        record("attention", err)

    for seed in GENERATOR_SEEDS:
        prng = Prng(seed)
        g = Generator.create(DESK.gan, prng)
        x = Tensor(prng.uniform((1, DESK.gan.d_spec), -1.0, 1.0).data)
        c = Tensor(prng.uniform((1, DESK.gan.d_struct), -1.0, 1.0).data)
        err = grad_check(
            lambda: (g.forward(x) * c).sum(),
            [t for layer in g.layers for t in (layer.weight, layer.bias)],
            h=1e-4, order=2,
        )
        record("generator", err)

    for seed in range(10):
        prng = Prng(seed)
        d = Discriminator.create(DESK.gan, prng)
        x = Tensor(prng.uniform((3, DESK.gan.concat_width), -1.0, 1.0).data)
        err = grad_check(
            lambda: d.forward(x).sum(),
            list(d.params().values()), h=1e-3, order=4,
        )
        record("discriminator", err)

    for seed in range(10):
        prng = Prng(seed)
        ae = SpectrumAutoencoder.create(DESK.spectrum_ae, prng)
        # lift the output layer's bias so its relu stays active for every
        # seed; the check probes gradients, not the init distribution
        ae.params()["dec7.bias"].data += 0.25
        xv = prng.uniform((DESK.spectrum_ae.input_dim,), 0.0, 1.0).data
        xv[3] = 1.0
        err = grad_check(
            lambda: ae.sample_loss(xv),
            list(ae.params().values()),
            h=1e-3, sample=25, prng=Prng(1000 + seed), order=4,
        )
        record("spectrum autoencoder", err)

    mol = parse_smiles("CCO", mol_id="probe")
    for seed in range(10):
        ae = StructureAutoencoder.create(DESK.structure_ae, Prng(seed))
        ae.fit_normalizer([mol])
        err = grad_check(
            lambda: ae.batch_loss([mol]),
            list(ae.params().values()),
            h=1e-3, sample=2, prng=Prng(2000 + seed), order=4,
        )
        record("structure autoencoder", err)

    assert set(worst) == {
        "dense", "layer norm", "attention", "generator", "discriminator",
        "spectrum autoencoder", "structure autoencoder",
    }
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0, f"gradient checks took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 5. optimizer against the hand-derived two-step form


def test_c05_adamw_matches_two_step_closed_form():
    # With a constant unit gradient both bias-corrected moments equal one
    # every step, so the update collapses to
    #   theta <- theta - lr * (1 / (1 + eps) + wd * theta)
    for wd in (0.0, 0.01):
        cfg = AdamwConfig(lr=0.1, weight_decay=wd)
        p = Tensor(np.array([1.0]), requires_grad=True)
        opt = Adamw([p], cfg)
        seen = []
        for _ in range(2):
            p.grad = np.array([1.0])
            opt.step()
            seen.append(float(p.data[0]))

        theta = 1.0
        for step in range(2):
            theta = theta - cfg.lr * (1.0 / (1.0 + cfg.eps) + wd * theta)
            assert abs(seen[step] - theta) < 1e-12, (
                f"wd={wd} step {step + 1}: optimizer {seen[step]!r}, "
                f"closed form {theta!r}"
            )
        if wd == 0.0:
            assert abs(seen[0] - 0.9) < 1e-8


# ---------------------------------------------------------------------------
# 6. protocol convergence on separable latents


def test_c06_protocol_converges_on_separable_latents(tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(60)
    spec = 1.0 + 0.3 * rng.standard_normal((200, DESK.gan.d_spec))
    struct_true = 1.0 + 0.3 * rng.standard_normal((200, DESK.gan.d_struct))
    struct_decoy = -1.0 + 0.3 * rng.standard_normal((200, DESK.gan.d_struct))

    spec_latents = [
        LatentVector(spec[i], "spectrum", f"s{i:03d}") for i in range(200)
    ]
    true_msms = [
        LatentMSM(spec_latents[i],
                  LatentVector(struct_true[i], "structure", f"t{i:03d}"),
                  "true-match")
        for i in range(200)
    ]
    decoy_msms = [
        LatentMSM(spec_latents[i],
                  LatentVector(struct_decoy[i], "structure", f"d{i:03d}"),
                  "decoy")
        for i in range(200)
    ]

    assert DESK.protocol.rounds == 3
    assert DESK.protocol.max_epochs == 2000
    result = run_protocol(true_msms, decoy_msms, spec_latents,
                          DESK.protocol, DESK.gan, Prng(6), out_dir=tmp_path)

    names = [name for name, _ in result.checkpoints]
    assert names == ["GAN-0", "GAN-1", "GAN-2", "GAN-3"]
    for name in names:
        assert (tmp_path / f"{name.lower()}.msgw").is_file()

    round0 = result.reports[0]
    assert round0.round_index == 0
    assert round0.phase == "discriminator"
    assert round0.converged, "round 0 never reached its accuracy target"
    assert round0.metric >= Fraction(99, 100)
    assert round0.epochs <= 2000

    for report in result.reports:
        if report.phase != "generator":
            continue
        assert report.converged or report.epochs == DESK.protocol.max_epochs, (
            f"round {report.round_index} generator stopped after "
            f"{report.epochs} epochs without reaching its target"
        )

    elapsed = time.perf_counter() - t0
    assert elapsed < 180.0, f"protocol run took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 7. end-to-end overfit on a synthetic corpus


OVERFIT_ROWS = [
    ("hexan1ol", "CCCCCCO", "hexan-1-ol"),
    ("hexan2ol", "CCCCC(O)C", "hexan-2-ol"),
    ("hexan3ol", "CCCC(O)CC", "hexan-3-ol"),
    ("mp2ol1", "CCCC(C)CO", "2-methylpentan-1-ol"),
    ("mp3ol1", "CCC(C)CCO", "3-methylpentan-1-ol"),
    ("mp4ol1", "CC(C)CCCO", "4-methylpentan-1-ol"),
    ("mp2ol2", "CCCC(C)(C)O", "2-methylpentan-2-ol"),
    ("mp3ol3", "CCC(C)(O)CC", "3-methylpentan-3-ol"),
    ("mp2ol3", "CCC(O)C(C)C", "2-methylpentan-3-ol"),
    ("dmb22ol1", "CCC(C)(C)CO", "2,2-dimethylbutan-1-ol"),
    ("dmb33ol1", "CC(C)(C)CCO", "3,3-dimethylbutan-1-ol"),
    ("dmb23ol2", "CC(C)C(C)(C)O", "2,3-dimethylbutan-2-ol"),
    ("dmb33ol2", "CC(C)(C)C(O)C", "3,3-dimethylbutan-2-ol"),
    ("dpe", "CCCOCCC", "dipropyl ether"),
    ("bee", "CCCCOCC", "butyl ethyl ether"),
    ("mpentether", "CCCCCOC", "methyl pentyl ether"),
    ("dipe", "CC(C)OC(C)C", "diisopropyl ether"),
    ("etbe", "CC(C)(C)OCC", "ethyl tert-butyl ether"),
    ("tame", "CCC(C)(C)OC", "tert-amyl methyl ether"),
    ("sbee", "CCC(C)OCC", "sec-butyl ethyl ether"),
]


def overfit_mgf(corpus) -> str:
    # Sparse per-compound peak patterns placed in the low-m/z bins the small
    # preset keeps after downsampling (bin b covers [0.2 b, 0.2 b + 0.2)).
    blocks = []
    for k, (cid, _, _) in enumerate(OVERFIT_ROWS):
        bins = (k, 20 + (7 * k + 3) % 30, 50 + (3 * k) % 14)
        heights = (100.0, 70.0, 40.0)
        mass = corpus.entry(cid).mass
        lines = [
            "BEGIN IONS",
            f"TITLE=spec-{cid}",
            f"PEPMASS={mass + PROTON_MASS:.6f}",
            f"COMPOUND={cid}",
        ]
        lines += [f"{b * 0.2 + 0.05:.4f} {h:.1f}" for b, h in zip(bins, heights)]
        lines.append("END IONS")
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + "\n"


def test_c07_pipeline_overfits_synthetic_corpus(tmp_path):
    t0 = time.perf_counter()
    corpus = build_corpus([CorpusRecord(*row) for row in OVERFIT_ROWS])

    data = tmp_path / "data"
    data.mkdir()
    corpus_lines = [f"{cid}\t{smiles}\t{name}" for cid, smiles, name in OVERFIT_ROWS]
    (data / "corpus.tsv").write_text("\n".join(corpus_lines) + "\n",
                                     encoding="utf-8")
    (data / "spectra.mgf").write_text(overfit_mgf(corpus), encoding="utf-8")

    config = {
        "training": {"decoy_cap": 5},
        "paths": {
            "spectra": str(data / "spectra.mgf"),
            "corpus": str(data / "corpus.tsv"),
            "cache": str(tmp_path / "cache"),
            "checkpoints": str(tmp_path / "checkpoints"),
            "reports": str(tmp_path / "reports"),
        },
    }
    config_path = tmp_path / "run.json"
    config_path.write_text(json.dumps(config), encoding="utf-8")

    for command in ("prepare", "train-ae", "encode", "build-decoys", "train-gan"):
        code = cli.main([command, "--config", str(config_path), "--preset", "desk"])
        assert code == 0, f"{command} exited {code}"

    spec_cache = cache_read(tmp_path / "cache" / "spectra.lmsm")
    struct_cache = cache_read(tmp_path / "cache" / "structures.lmsm")
    disc = load_discriminator(tmp_path / "checkpoints" / "gan-3.msgw")
    assignments = {
        a.true_compound_id: a.decoy_ids
        for a in read_assignments(tmp_path / "cache" / "decoys.tsv")
    }
    assert len(assignments) == 20
    assert all(len(ids) == 5 for ids in assignments.values())

    top1 = 0
    for cid, _, _ in OVERFIT_ROWS:
        candidates = [cid, *assignments[cid]]
        result = search_spectrum(cid, spec_cache.get(cid), candidates,
                                 disc.score, cache=struct_cache, true_id=cid)
        assert result.true_rank is not None
        top1 += result.true_rank == 1
    assert top1 >= 18, f"true compound ranked first for only {top1}/20 spectra"

    elapsed = time.perf_counter() - t0
    assert elapsed < 300.0, f"overfit pipeline took {elapsed:.1f}s"


# ---------------------------------------------------------------------------
# 8. binning and ranking against brute-force oracles


def oracle_bin(s: Spectrum) -> np.ndarray:
    bins = np.zeros(N_BINS, dtype=np.float64)
    for p in s.peaks:
        idx = math.floor(p.mz * 10.0)
        if 0 <= idx < N_BINS:
            bins[idx] += p.intensity
    top = bins.max()
    if top > 0.0:
        bins /= top
    return bins


def oracle_rank(scored: list[tuple[str, float]], true_id: str) -> int:
    order = sorted(
        scored,
        key=lambda pair: (-pair[1], pair[0] == true_id, pair[0]),
    )
    return [cid for cid, _ in order].index(true_id) + 1


def test_c08_binning_and_ranking_match_bruteforce_oracles():
    rng = np.random.default_rng(81)
    for trial in range(1000):
        n = int(rng.integers(0, 40))
        mz = rng.uniform(0.0, 1600.0, n)
        snap = rng.random(n) < 0.3
        mz[snap] = np.round(mz[snap], 1)
        intensity = rng.uniform(0.0, 100.0, n)
        peaks = [Peak(float(m), float(i)) for m, i in zip(mz, intensity)]
        if n > 2 and trial % 5 == 0:
            peaks.append(peaks[0])
        s = Spectrum(id=f"r{trial}", precursor_mz=200.0, peaks=peaks)
        assert np.array_equal(bin_spectrum(s).bins, oracle_bin(s))

    rng = np.random.default_rng(82)
    for trial in range(1000):
        n = int(rng.integers(1, 25))
        if trial % 3 == 0:
            scores = np.round(rng.uniform(0.0, 1.0, n), 2)
        else:
            scores = rng.integers(0, 6, n) * 0.25
        ids = [f"c{j:02d}" for j in range(n)]
        true_id = ids[int(rng.integers(0, n))]
        scored = list(zip(ids, (float(v) for v in scores)))
        assert rank_true(scored, true_id) == oracle_rank(scored, true_id)


# ---------------------------------------------------------------------------
# 9. frozen-decoder and frozen-discriminator contracts


def snapshot_params(model) -> dict[str, bytes]:
    return {k: v.data.tobytes() for k, v in model.params().items()}


def test_c09_shared_models_stay_frozen_during_per_sample_phases():
    prng = Prng(90)
    spec_ae = SpectrumAutoencoder.create(DESK.spectrum_ae, prng)
    dataset = prng.uniform((6, DESK.spectrum_ae.input_dim), 0.0, 1.0).data
    train_stage1(spec_ae, dataset, epochs=8, prng=Prng(91))
    peaks = [Peak(0.2 * b + 0.05, float(20 + b)) for b in range(0, 40, 3)]
    binned = bin_spectrum(Spectrum(id="probe", precursor_mz=150.0, peaks=peaks))
    before = snapshot_params(spec_ae)
    vec = encode_spectrum(binned, spec_ae, finetune=6, opt_cfg=AdamwConfig())
    assert vec.family == "spectrum" and len(vec) == DESK.spectrum_ae.d_spec
    after = snapshot_params(spec_ae)
    assert before == after, "spectrum model changed during per-sample encoding"
    assert all(t.grad is None for t in spec_ae.decoder_params().values())

    mols = [parse_smiles(s, mol_id=f"m{i}")
            for i, s in enumerate(["CCO", "CC(C)O", "CCCO"])]
    struct_ae = StructureAutoencoder.create(DESK.structure_ae, Prng(92))
    train_stage1(struct_ae, mols, epochs=4, prng=Prng(93))
    before = snapshot_params(struct_ae)
    vec = encode_structure(mols[0], struct_ae, finetune=5, opt_cfg=AdamwConfig())
    assert vec.family == "structure" and len(vec) == DESK.structure_ae.d_struct
    after = snapshot_params(struct_ae)
    assert before == after, "structure model changed during per-sample encoding"

    disc = Discriminator.create(DESK.gan, Prng(94))
    gen = Generator.create(DESK.gan, Prng(95))
    rng = np.random.default_rng(96)
    latents = [
        LatentVector(rng.standard_normal(DESK.gan.d_spec), "spectrum", f"s{i}")
        for i in range(12)
    ]
    short = replace(DESK.protocol, max_epochs=30)
    before = snapshot_params(disc)
    report = train_generator_phase(gen, disc, latents, short)
    assert report.phase == "generator"
    after = snapshot_params(disc)
    assert before == after, "discriminator changed during a generator phase"
    assert all(t.grad is None for t in disc.params().values())


# ---------------------------------------------------------------------------
# 10. persistence round trips and corruption detection


def test_c10_persistence_is_bit_exact_and_rejects_corruption(tmp_path):
    rng = np.random.default_rng(100)
    sections = {
        "layers/w1": rng.standard_normal((3, 4)),
        "layers/b1": rng.standard_normal(4),
        "meta": np.array([8.0, 12.0, 3.0]),
    }
    p1, p2 = tmp_path / "a.msgw", tmp_path / "b.msgw"
    save_checkpoint(p1, sections)
    save_checkpoint(p2, sections)
    assert p1.read_bytes() == p2.read_bytes()
    loaded = load_checkpoint(p1)
    assert sorted(loaded) == sorted(sections)
    for name, arr in sections.items():
        assert loaded[name].dtype == arr.dtype
        assert loaded[name].shape == arr.shape
        assert loaded[name].tobytes() == arr.tobytes()

    blob = bytearray(p1.read_bytes())
    blob[0] ^= 0xFF
    bad_magic = tmp_path / "magic.msgw"
    bad_magic.write_bytes(bytes(blob))
    with pytest.raises(CheckpointMagicError) as magic_err:
        load_checkpoint(bad_magic)
    truncated = tmp_path / "trunc.msgw"
    truncated.write_bytes(p1.read_bytes()[: p1.stat().st_size // 2])
    with pytest.raises(CheckpointTruncatedError) as trunc_err:
        load_checkpoint(truncated)
    assert type(magic_err.value) is not type(trunc_err.value)

    cache = LatentCache(dim=4)
    for i in range(3):
        cache.add(f"c{i}", rng.standard_normal(4).astype(np.float32))
    c1, c2 = tmp_path / "a.lmsm", tmp_path / "b.lmsm"
    cache_write(cache, c1)
    cache_write(cache, c2)
    assert c1.read_bytes() == c2.read_bytes()
    back = cache_read(c1)
    assert len(back) == 3
    for i in range(3):
        assert back.get(f"c{i}").tobytes() == cache.get(f"c{i}").tobytes()

    blob = bytearray(c1.read_bytes())
    blob[0] ^= 0xFF
    bad_magic = tmp_path / "magic.lmsm"
    bad_magic.write_bytes(bytes(blob))
    with pytest.raises(CacheMagicError) as cache_magic_err:
        cache_read(bad_magic)
    truncated = tmp_path / "trunc.lmsm"
    truncated.write_bytes(c1.read_bytes()[: c1.stat().st_size // 2])
    with pytest.raises(CacheTruncatedError) as cache_trunc_err:
        cache_read(truncated)
    assert type(cache_magic_err.value) is not type(cache_trunc_err.value)

    disc = Discriminator.create(DESK.gan, Prng(101))
    d1, d2 = tmp_path / "d1.msgw", tmp_path / "d2.msgw"
    save_discriminator(disc, d1)
    save_discriminator(load_discriminator(d1), d2)
    assert d1.read_bytes() == d2.read_bytes()


# ---------------------------------------------------------------------------
# 11. chemistry oracles and decoy re-verification


ELEMENT_MASSES = {
    "H": 1.00782503207,
    "C": 12.0,
    "N": 14.0030740048,
    "O": 15.9949146196,
}

MOLECULE_ORACLE = [
    ("water", "O", "H2O", {"H": 2, "O": 1}),
    ("methane", "C", "CH4", {"C": 1, "H": 4}),
    ("ethanol", "CCO", "C2H6O", {"C": 2, "H": 6, "O": 1}),
    ("benzene", "c1ccccc1", "C6H6", {"C": 6, "H": 6}),
    ("glucose", "OCC1OC(O)C(O)C(O)C1O", "C6H12O6", {"C": 6, "H": 12, "O": 6}),
    ("acetic acid", "CC(=O)O", "C2H4O2", {"C": 2, "H": 4, "O": 2}),
    ("pyridine", "c1ccncc1", "C5H5N", {"C": 5, "H": 5, "N": 1}),
    ("cyclohexane", "C1CCCCC1", "C6H12", {"C": 6, "H": 12}),
    ("isopropanol", "CC(C)O", "C3H8O", {"C": 3, "H": 8, "O": 1}),
    ("caffeine", "Cn1cnc2c1c(=O)n(C)c(=O)n2C", "C8H10N4O2",
     {"C": 8, "H": 10, "N": 4, "O": 2}),
]

REVERIFY_ROWS = [
    ("butan1ol", "CCCCO", "butan-1-ol"),
    ("butan2ol", "CCC(O)C", "butan-2-ol"),
    ("tbutanol", "CC(C)(C)O", "2-methylpropan-2-ol"),
    ("isobutanol", "CC(C)CO", "2-methylpropan-1-ol"),
    ("diethylether", "CCOCC", "diethyl ether"),
    ("mpe", "CCCOC", "methyl propyl ether"),
    ("ipme", "CC(C)OC", "isopropyl methyl ether"),
    ("decanol", "OCCCCCCCCCC", "decan-1-ol"),
    ("decanol2", "CC(O)CCCCCCCC", "decan-2-ol"),
    ("caffeine", "Cn1cnc2c1c(=O)n(C)c(=O)n2C", "caffeine"),
]


def test_c11_formula_mass_oracle_and_decoy_reverification():
    for name, smiles, hill, counts in MOLECULE_ORACLE:
        mol = parse_smiles(smiles, mol_id=name)
        formula = formula_of(mol)
        assert formula.hill() == hill, (
            f"{name}: formula {formula.hill()}, expected {hill}"
        )
        expected_mass = sum(ELEMENT_MASSES[el] * n for el, n in counts.items())
        got = monoisotopic_mass(formula)
        assert abs(got - expected_mass) < 1e-4, (
            f"{name}: mass {got:.6f}, oracle {expected_mass:.6f}"
        )

    corpus = build_corpus([CorpusRecord(*row) for row in REVERIFY_ROWS])
    decoys_seen = 0
    for cid, _, _ in REVERIFY_ROWS:
        entry = corpus.entry(cid)
        assignment = build_test_decoy_set(cid, corpus, cap=8)
        assert cid not in assignment.decoy_ids
        for did in assignment.decoy_ids:
            other = corpus.entry(did)
            assert other.formula == entry.formula, (
                f"{cid}: decoy {did} has formula {other.formula.hill()}"
            )
            sim = tanimoto(entry.fingerprint, other.fingerprint)
            assert sim <= 0.75, f"{cid}: decoy {did} similarity {sim:.3f}"
            decoys_seen += 1

        training = select_training_decoy(cid, corpus)
        if cid == "caffeine":
            assert training is None
            assert assignment.decoy_ids == ()
        if training is not None:
            other = corpus.entry(training)
            assert other.formula == entry.formula
            assert tanimoto(entry.fingerprint, other.fingerprint) <= 0.75
    assert decoys_seen > 0
