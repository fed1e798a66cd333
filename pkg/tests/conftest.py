"""Shared fixture builders for toy and randomized networks."""

import numpy as np
import pytest

from hinddi.hin import EntityKind, EntityRegistry, RelationMatrix, build_hin


def make_registry(n_drugs, n_proteins=0, n_side_effects=0, n_substructures=0):
    reg = EntityRegistry()
    for i in range(n_drugs):
        reg.add(EntityKind.DRUG, f"d{i}")
    for i in range(n_proteins):
        reg.add(EntityKind.PROTEIN, f"p{i}")
    for i in range(n_side_effects):
        reg.add(EntityKind.SIDE_EFFECT, f"s{i}")
    for i in range(n_substructures):
        reg.add(EntityKind.SUBSTRUCTURE, f"b{i}")
    return reg


def make_hin(n_drugs, n_proteins, n_side_effects, n_substructures,
             t_pairs=(), c_pairs=(), h_pairs=(), p_pairs=(), ddi=()):
    """Assemble a Hin from explicit coordinate lists; P pairs are symmetrized."""
    reg = make_registry(n_drugs, n_proteins, n_side_effects, n_substructures)
    sym = list(p_pairs) + [(j, i) for i, j in p_pairs]
    t = RelationMatrix.from_pairs(EntityKind.DRUG, EntityKind.PROTEIN,
                                  (n_drugs, n_proteins), t_pairs)
    c = RelationMatrix.from_pairs(EntityKind.DRUG, EntityKind.SIDE_EFFECT,
                                  (n_drugs, n_side_effects), c_pairs)
    h = RelationMatrix.from_pairs(EntityKind.DRUG, EntityKind.SUBSTRUCTURE,
                                  (n_drugs, n_substructures), h_pairs)
    p = RelationMatrix.from_pairs(EntityKind.PROTEIN, EntityKind.PROTEIN,
                                  (n_proteins, n_proteins), sym)
    return build_hin(reg, t, c, h, p, list(ddi))


def random_hin(rng, max_per_kind=20, density=0.25, ppi_density=0.3):
    """Random network with all four relation kinds populated."""
    nd = int(rng.integers(2, max_per_kind + 1))
    np_ = int(rng.integers(1, max_per_kind + 1))
    ns = int(rng.integers(1, max_per_kind + 1))
    nb = int(rng.integers(1, max_per_kind + 1))

    def bipartite(rows, cols, dens):
        mask = rng.random((rows, cols)) < dens
        return list(zip(*np.nonzero(mask)))

    p_pairs = [(i, j) for i in range(np_) for j in range(i + 1, np_)
               if rng.random() < ppi_density]
    return make_hin(nd, np_, ns, nb,
                    t_pairs=bipartite(nd, np_, density),
                    c_pairs=bipartite(nd, ns, density),
                    h_pairs=bipartite(nd, nb, density),
                    p_pairs=p_pairs)


@pytest.fixture
def toy_hin():
    """Two drugs, two proteins: d0 targets {p0, p1}, d1 targets {p1}."""
    return make_hin(2, 2, 0, 0, t_pairs=[(0, 0), (0, 1), (1, 1)])
