"""MS2MetGAN: latent-space GAN pipeline for small-molecule MS/MS database search.

Subpackages and modules:

- ``spectra``: MGF ingestion, merging, binning
- ``molecules``: SMILES subset, formulas, masses, fingerprints
- ``numkit``: deterministic autograd, NN blocks, AdamW, checkpoints
- ``autoencoders``: spectrum and structure autoencoders
- ``latentgan``: conditional latent GAN and round protocol
- ``decoygen``: formula-matched decoy selection
- ``search``: candidate filtering, scoring, ranking
- ``evalbench``: rank distributions, accuracy tables, winrates
- ``cli``: the ``ms2metgan`` command
"""
from __future__ import annotations

__version__ = "0.1.0"
