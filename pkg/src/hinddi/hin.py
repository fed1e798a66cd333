"""Typed entity registry and the four relation matrices of the network.

Entities come in four kinds (drug, protein, side effect, chemical
substructure). Relations are sparse boolean incidence matrices loaded from
two-column TSV files: T (drug targets protein), C (drug causes side
effect), H (drug possesses substructure) and P (protein interacts with
protein, symmetric).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import scipy.sparse as sp

__all__ = [
    "EntityKind",
    "HinError",
    "RelationParseError",
    "SchemaError",
    "EntityRegistry",
    "RelationMatrix",
    "Hin",
    "ValidationReport",
    "load_relation",
    "load_pairs",
    "load_ddi",
    "build_hin",
    "validate",
    "stats",
    "save_hin",
    "load_hin",
]


class HinError(Exception):
    """Base class for graph-construction errors."""


class RelationParseError(HinError):
    """A relation file line could not be parsed."""


class SchemaError(HinError):
    """An identifier or matrix violates the network schema."""


class EntityKind(Enum):
    DRUG = "drug"
    PROTEIN = "protein"
    SIDE_EFFECT = "side_effect"
    SUBSTRUCTURE = "substructure"


@dataclass
class EntityRegistry:
    """Per-kind bidirectional mapping between external ids and dense indices."""

    _ids: dict[EntityKind, list[str]] = field(
        default_factory=lambda: {k: [] for k in EntityKind})
    _index: dict[EntityKind, dict[str, int]] = field(
        default_factory=lambda: {k: {} for k in EntityKind})

    def add(self, kind: EntityKind, ident: str) -> int:
        """Register an id (idempotent) and return its dense index."""
        table = self._index[kind]
        existing = table.get(ident)
        if existing is not None:
            return existing
        idx = len(self._ids[kind])
        self._ids[kind].append(ident)
        table[ident] = idx
        return idx

    def index_of(self, kind: EntityKind, ident: str) -> int:
        try:
            return self._index[kind][ident]
        except KeyError:
            raise SchemaError(f"unknown {kind.value} id {ident!r}") from None

    def id_of(self, kind: EntityKind, idx: int) -> str:
        return self._ids[kind][idx]

    def ids(self, kind: EntityKind) -> list[str]:
        return list(self._ids[kind])

    def count(self, kind: EntityKind) -> int:
        return len(self._ids[kind])

    def contains(self, kind: EntityKind, ident: str) -> bool:
        return ident in self._index[kind]


@dataclass(frozen=True)
class RelationMatrix:
    """Sparse boolean incidence between two entity kinds.

    Coordinates are kept as a (k, 2) int64 array, deduplicated and sorted
    row-major; row = source index, column = target index.
    """

    source: EntityKind
    target: EntityKind
    shape: tuple[int, int]
    coords: np.ndarray

    @classmethod
    def from_pairs(cls, source: EntityKind, target: EntityKind,
                   shape: tuple[int, int], pairs) -> "RelationMatrix":
        arr = np.asarray(sorted(set(map(tuple, pairs))), dtype=np.int64)
        if arr.size == 0:
            arr = np.empty((0, 2), dtype=np.int64)
        return cls(source, target, (int(shape[0]), int(shape[1])), arr)

    def __post_init__(self):
        c = self.coords
        if c.ndim != 2 or c.shape[1] != 2:
            raise SchemaError(f"coords must be (k, 2), got {c.shape}")
        if c.size:
            if c.min() < 0 or c[:, 0].max() >= self.shape[0] or c[:, 1].max() >= self.shape[1]:
                raise SchemaError(
                    f"coordinate out of bounds for {self.source.value}x{self.target.value} "
                    f"matrix of shape {self.shape}")

    @property
    def nnz(self) -> int:
        return self.coords.shape[0]

    def resized(self, shape: tuple[int, int]) -> "RelationMatrix":
        return dataclasses.replace(self, shape=(int(shape[0]), int(shape[1])))

    def to_csr(self) -> sp.csr_matrix:
        """Integer CSR view (entries are exactly 1) for path counting."""
        ones = np.ones(self.nnz, dtype=np.int64)
        return sp.csr_matrix((ones, (self.coords[:, 0], self.coords[:, 1])),
                             shape=self.shape)

    def coord_set(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in self.coords}


@dataclass
class Hin:
    """The assembled network: registry, the four relation matrices, and the
    optional labeled interaction pair list (canonical i < j, deduplicated)."""

    registry: EntityRegistry
    t: RelationMatrix
    c: RelationMatrix
    h: RelationMatrix
    p: RelationMatrix
    ddi: list[tuple[int, int]] = field(default_factory=list)

    def matrix(self, name: str) -> RelationMatrix:
        try:
            return {"T": self.t, "C": self.c, "H": self.h, "P": self.p}[name]
        except KeyError:
            raise SchemaError(f"unknown relation matrix {name!r}") from None

    @property
    def n_drugs(self) -> int:
        return self.registry.count(EntityKind.DRUG)


_RELATION_SCHEMAS = {
    "T": (EntityKind.DRUG, EntityKind.PROTEIN),
    "C": (EntityKind.DRUG, EntityKind.SIDE_EFFECT),
    "H": (EntityKind.DRUG, EntityKind.SUBSTRUCTURE),
    "P": (EntityKind.PROTEIN, EntityKind.PROTEIN),
}


def load_pairs(path) -> list[tuple[int, str, str]]:
    """Read a two-column TSV; returns (line_number, left, right) triples.

    Lines starting with '#' and blank lines are skipped.
    """
    out = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0] or not parts[1]:
            raise RelationParseError(
                f"{path}:{lineno}: expected two tab-separated identifiers, got {raw!r}")
        out.append((lineno, parts[0], parts[1]))
    return out


def _resolve(registry: EntityRegistry, kind: EntityKind, ident: str, mode: str) -> int:
    if mode == "discover":
        return registry.add(kind, ident)
    return registry.index_of(kind, ident)


def load_relation(path, source: EntityKind, target: EntityKind,
                  registry: EntityRegistry, mode: str = "discover") -> RelationMatrix:
    """Load one relation matrix from a two-column id TSV.

    Duplicate lines collapse to one coordinate. Protein-protein relations
    are symmetrized: each loaded edge is stored in both directions. In
    "discover" mode unseen ids extend the registry; in "strict" mode they
    raise SchemaError.
    """
    if mode not in ("discover", "strict"):
        raise ValueError(f"unknown registry mode {mode!r}")
    pairs = []
    for lineno, left, right in load_pairs(path):
        i = _resolve(registry, source, left, mode)
        j = _resolve(registry, target, right, mode)
        pairs.append((i, j))
        if source == target == EntityKind.PROTEIN:
            pairs.append((j, i))
    shape = (registry.count(source), registry.count(target))
    return RelationMatrix.from_pairs(source, target, shape, pairs)


def load_ddi(path, registry: EntityRegistry, mode: str = "discover") -> list[tuple[int, int]]:
    """Load labeled drug pairs; unordered, canonicalized to (min, max)."""
    pairs = set()
    for lineno, left, right in load_pairs(path):
        i = _resolve(registry, EntityKind.DRUG, left, mode)
        j = _resolve(registry, EntityKind.DRUG, right, mode)
        if i == j:
            raise RelationParseError(f"{path}:{lineno}: self-interaction {left!r}")
        pairs.add((min(i, j), max(i, j)))
    return sorted(pairs)


def build_hin(registry: EntityRegistry, t: RelationMatrix, c: RelationMatrix,
              h: RelationMatrix, p: RelationMatrix,
              ddi: list[tuple[int, int]] | None = None) -> Hin:
    """Assemble a Hin, refitting matrix shapes to the final registry counts.

    Needed because discover-mode loading can keep growing the registry
    after an earlier matrix was built.
    """
    def fit(m: RelationMatrix) -> RelationMatrix:
        return m.resized((registry.count(m.source), registry.count(m.target)))

    for name, matrix in (("T", t), ("C", c), ("H", h), ("P", p)):
        want = _RELATION_SCHEMAS[name]
        if (matrix.source, matrix.target) != want:
            raise SchemaError(
                f"matrix {name} has kinds ({matrix.source.value}, {matrix.target.value}), "
                f"expected ({want[0].value}, {want[1].value})")
    return Hin(registry, fit(t), fit(c), fit(h), fit(p), sorted(set(ddi or [])))


@dataclass
class ValidationReport:
    errors: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.errors

    def format(self, max_warnings: int | None = None) -> str:
        lines = [f"validation: {'pass' if self.passed else 'FAIL'}"]
        lines += [f"error: {e}" for e in self.errors]
        shown = self.warnings if max_warnings is None else self.warnings[:max_warnings]
        lines += [f"warning: {w}" for w in shown]
        hidden = len(self.warnings) - len(shown)
        if hidden > 0:
            lines.append(f"warning: ... and {hidden} more")
        return "\n".join(lines)


def validate(hin: Hin) -> ValidationReport:
    """Diagnostic scan: orphan entities, P symmetry/diagonal, index bounds.

    Orphans are reported as warnings (legal but suspicious); structural
    defects are errors.
    """
    report = ValidationReport()
    reg = hin.registry

    for name in ("T", "C", "H", "P"):
        m = hin.matrix(name)
        want_shape = (reg.count(m.source), reg.count(m.target))
        if m.shape != want_shape:
            report.errors.append(
                f"{name}: shape {m.shape} disagrees with registry counts {want_shape}")

    pset = hin.p.coord_set()
    for i, j in sorted(pset):
        if i == j:
            report.errors.append(
                f"P: nonzero diagonal at ({reg.id_of(EntityKind.PROTEIN, i)}, "
                f"{reg.id_of(EntityKind.PROTEIN, j)})")
        elif (j, i) not in pset:
            report.errors.append(
                f"P: asymmetric pair ({reg.id_of(EntityKind.PROTEIN, i)}, "
                f"{reg.id_of(EntityKind.PROTEIN, j)}) present without its reverse")

    for i, j in hin.ddi:
        if not (0 <= i < j < reg.count(EntityKind.DRUG)):
            report.errors.append(f"DDI: pair ({i}, {j}) out of bounds or not canonical")

    degree = {kind: np.zeros(reg.count(kind), dtype=np.int64) for kind in EntityKind}
    for m in (hin.t, hin.c, hin.h, hin.p):
        if m.nnz:
            np.add.at(degree[m.source], m.coords[:, 0], 1)
            np.add.at(degree[m.target], m.coords[:, 1], 1)
    for i, j in hin.ddi:
        degree[EntityKind.DRUG][i] += 1
        degree[EntityKind.DRUG][j] += 1
    for kind in EntityKind:
        for idx in np.flatnonzero(degree[kind] == 0):
            report.warnings.append(
                f"orphan {kind.value} {reg.id_of(kind, int(idx))!r} has no relations")
    return report


def stats(hin: Hin) -> dict[str, int]:
    """Node and edge counts; PPI counts undirected protein pairs once."""
    p_coords = hin.p.coords
    ppi = int(np.sum(p_coords[:, 0] < p_coords[:, 1])) if p_coords.size else 0
    reg = hin.registry
    return {
        "Drug": reg.count(EntityKind.DRUG),
        "Protein": reg.count(EntityKind.PROTEIN),
        "SideEffect": reg.count(EntityKind.SIDE_EFFECT),
        "Substructure": reg.count(EntityKind.SUBSTRUCTURE),
        "DDI": len(hin.ddi),
        "DPI": hin.t.nnz,
        "DrugSideEffect": hin.c.nnz,
        "PPI": ppi,
    }


# ---------------------------------------------------------------------------
# directory serialization

_RELATION_FILES = {
    "T": "drug_protein.tsv",
    "C": "drug_side_effect.tsv",
    "H": "drug_substructure.tsv",
    "P": "ppi.tsv",
}


def _write_relation(m: RelationMatrix, registry: EntityRegistry, path: Path) -> None:
    lines = []
    for i, j in m.coords:
        if m.source == m.target and i > j:
            continue  # undirected: store each pair once
        lines.append(f"{registry.id_of(m.source, int(i))}\t{registry.id_of(m.target, int(j))}")
    path.write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def save_hin(hin: Hin, dirpath) -> None:
    """Write registry, relation files and DDI list under a directory."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    reg_lines = []
    for kind in EntityKind:
        for idx, ident in enumerate(hin.registry.ids(kind)):
            reg_lines.append(f"{kind.value}\t{idx}\t{ident}")
    (d / "registry.tsv").write_text("\n".join(reg_lines) + "\n", encoding="utf-8")
    for name, fname in _RELATION_FILES.items():
        _write_relation(hin.matrix(name), hin.registry, d / fname)
    ddi_lines = [f"{hin.registry.id_of(EntityKind.DRUG, i)}\t{hin.registry.id_of(EntityKind.DRUG, j)}"
                 for i, j in hin.ddi]
    (d / "ddi.tsv").write_text("\n".join(ddi_lines) + ("\n" if ddi_lines else ""),
                               encoding="utf-8")


def load_registry(path) -> EntityRegistry:
    registry = EntityRegistry()
    kinds = {k.value: k for k in EntityKind}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise RelationParseError(f"{path}:{lineno}: expected kind/index/id, got {raw!r}")
        kind_name, idx_str, ident = parts
        if kind_name not in kinds:
            raise RelationParseError(f"{path}:{lineno}: unknown entity kind {kind_name!r}")
        idx = registry.add(kinds[kind_name], ident)
        if idx != int(idx_str):
            raise SchemaError(
                f"{path}:{lineno}: index {idx_str} for {ident!r} is not dense (expected {idx})")
    return registry


def load_hin(dirpath) -> Hin:
    """Load a directory written by save_hin (strict registry mode)."""
    d = Path(dirpath)
    registry = load_registry(d / "registry.tsv")
    matrices = {}
    for name, fname in _RELATION_FILES.items():
        source, target = _RELATION_SCHEMAS[name]
        matrices[name] = load_relation(d / fname, source, target, registry, mode="strict")
    ddi = load_ddi(d / "ddi.tsv", registry, mode="strict")
    return build_hin(registry, matrices["T"], matrices["C"], matrices["H"],
                     matrices["P"], ddi)
