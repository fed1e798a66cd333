"""Shared assembly: raw input files -> network, features, neighbor graphs.

Used by the command-line layer and the experiment harness so both run the
exact same loading sequence (discovery order determines entity indices).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .espf import (
    FeatureMatrix,
    Vocabulary,
    build_feature_matrix,
    build_vocab,
    load_fingerprints,
    load_smiles,
    tokenize_smiles,
)
from .hin import EntityKind, EntityRegistry, Hin, build_hin, load_ddi, load_relation
from .metapath import NeighborGraph, commuting_matrix, neighbor_graph, spec_by_name

__all__ = ["InputPaths", "load_hin_inputs", "make_graphs", "make_espf_features",
           "make_fingerprint_features"]


@dataclass
class InputPaths:
    drug_protein: Path
    drug_side_effect: Path
    ppi: Path
    fingerprints: Path
    ddi: Path
    smiles: Path | None = None

    @classmethod
    def in_dir(cls, directory) -> "InputPaths":
        d = Path(directory)
        return cls(drug_protein=d / "drug_protein.tsv",
                   drug_side_effect=d / "drug_side_effect.tsv",
                   ppi=d / "ppi.tsv",
                   fingerprints=d / "fingerprints.tsv",
                   ddi=d / "ddi.tsv",
                   smiles=d / "smiles.tsv")


def load_hin_inputs(paths: InputPaths, mode: str = "discover") -> Hin:
    """Load all relations in a fixed order (ddi, T, C, H, P) so that
    discovered entity indices are reproducible."""
    registry = EntityRegistry()
    ddi = load_ddi(paths.ddi, registry, mode=mode)
    t = load_relation(paths.drug_protein, EntityKind.DRUG, EntityKind.PROTEIN,
                      registry, mode=mode)
    c = load_relation(paths.drug_side_effect, EntityKind.DRUG,
                      EntityKind.SIDE_EFFECT, registry, mode=mode)
    h, _ = load_fingerprints(paths.fingerprints, registry, mode=mode)
    p = load_relation(paths.ppi, EntityKind.PROTEIN, EntityKind.PROTEIN,
                      registry, mode=mode)
    return build_hin(registry, t, c, h, p, ddi)


def make_graphs(hin: Hin, metapath_names, threshold: int = 1) -> dict[str, NeighborGraph]:
    """Binarized neighbor graphs for the selected meta-paths."""
    graphs = {}
    for name in metapath_names:
        spec = spec_by_name(name)
        graphs[name] = neighbor_graph(commuting_matrix(hin, spec), threshold)
    return graphs


def make_espf_features(smiles_path, hin: Hin, threshold: int = 5,
                       max_size: int = 512) -> tuple[FeatureMatrix, Vocabulary]:
    smiles = load_smiles(smiles_path)
    drug_ids = hin.registry.ids(EntityKind.DRUG)
    missing = [d for d in drug_ids if d not in smiles]
    if missing:
        raise ValueError(f"SMILES file lacks drugs {missing[:5]}"
                         + (" ..." if len(missing) > 5 else ""))
    corpus = [tokenize_smiles(smiles[d]) for d in drug_ids]
    vocab = build_vocab(corpus, threshold=threshold, max_size=max_size)
    return build_feature_matrix(smiles, vocab, hin.registry), vocab


def make_fingerprint_features(fingerprints_path, hin: Hin) -> FeatureMatrix:
    _, features = load_fingerprints(fingerprints_path, hin.registry, mode="strict")
    return features
