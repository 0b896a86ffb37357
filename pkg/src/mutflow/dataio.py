"""Structure and mutation-table IO, cross-validation folds, and cropping.

File surfaces: legacy PDB ATOM records for structures, a 3-column CSV
(``complex_id,mutations,ddg``) for mutation data, JSON for fold splits,
chain clusters, and complex manifests.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import geometry as geo
from .geometry import AA_INDEX, ONE_LETTER, THREE_LETTER, Complex, Residue

logger = logging.getLogger("mutflow.dataio")


class DataError(ValueError):
    """Malformed or inconsistent input data."""


# ---------------------------------------------------------------------------
# structures

# Fixed PDB columns: name 13-16, altloc 17, resname 18-20, chain 22,
# resseq 23-26, x/y/z 31-54.
_BACKBONE = ("N", "CA", "C")


def parse_chains(text: str) -> dict[str, list[Residue]]:
    """Read ATOM records into per-chain residue lists.

    HETATM and other records are ignored; unknown residue names and
    residues with incomplete N/CA/C backbones are skipped with a warning;
    a bad coordinate is a hard error naming the line.
    """
    raw: dict[str, dict[int, tuple[str, dict[str, np.ndarray]]]] = {}
    order: dict[str, list[int]] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.startswith("ATOM"):
            continue
        name = line[12:16].strip()
        altloc = line[16:17]
        three = line[17:20].strip()
        chain = line[21:22].strip() or "_"
        try:
            seq = int(line[22:26])
            xyz = np.array([float(line[30:38]), float(line[38:46]), float(line[46:54])])
        except ValueError as err:
            raise DataError(f"unparseable ATOM record at line {lineno}: {err}") from None
        if three not in AA_INDEX:
            logger.warning("line %d: unknown residue name %r skipped", lineno, three)
            continue
        if altloc not in (" ", "", "A"):
            continue
        res = raw.setdefault(chain, {})
        if seq not in res:
            res[seq] = (three, {})
            order.setdefault(chain, []).append(seq)
        if name not in res[seq][1]:
            res[seq][1][name] = xyz
    chains: dict[str, list[Residue]] = {}
    for chain, seqs in order.items():
        entries = []
        for seq in seqs:
            three, atoms = raw[chain][seq]
            if any(a not in atoms for a in _BACKBONE):
                logger.warning("residue %s %s%d skipped: incomplete backbone", three, chain, seq)
                continue
            entries.append((three, chain, seq, atoms))
        if entries:
            chains[chain] = geo.annotate_chain(entries)
    return chains


def parse_structure(text: str, receptor_chains: Sequence[str], ligand_chains: Sequence[str],
                    structure_id: str = "") -> Complex:
    """Parse a two-binder complex; chain ids route residues to the binders."""
    receptor_chains, ligand_chains = list(receptor_chains), list(ligand_chains)
    if set(receptor_chains) & set(ligand_chains):
        raise DataError(f"complex '{structure_id}': a chain cannot be in both binders")
    chains = parse_chains(text)
    if not chains:
        raise DataError(f"complex '{structure_id}': no parseable residues")
    residues: list[Residue] = []
    receptor_idx: list[int] = []
    ligand_idx: list[int] = []
    for cid in (*receptor_chains, *ligand_chains):
        if cid not in chains:
            raise DataError(f"complex '{structure_id}': chain '{cid}' not present in structure")
        target = receptor_idx if cid in receptor_chains else ligand_idx
        for res in chains[cid]:
            target.append(len(residues))
            residues.append(res)
    try:
        return Complex(residues, tuple(receptor_idx), tuple(ligand_idx), structure_id)
    except geo.GeometryError as err:
        raise DataError(str(err)) from None


def write_pdb(residues: Iterable[Residue]) -> str:
    """Serialize residues back to ATOM records (1e-3 A coordinate precision)."""
    lines = []
    serial = 1
    for res in residues:
        for name, xyz in res.atoms.items():
            padded = f" {name:<3s}" if len(name) < 4 else name
            lines.append(
                f"ATOM  {serial:5d} {padded:<4s} {res.three:<3s} {res.chain_id:1s}{res.seq_num:4d}    "
                f"{xyz[0]:8.3f}{xyz[1]:8.3f}{xyz[2]:8.3f}  1.00  0.00"
            )
            serial += 1
    lines.append("END")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# mutation tables


@dataclass(frozen=True)
class Mutation:
    wild: str
    chain_id: str
    seq_num: int
    mutant: str

    def token(self) -> str:
        return f"{self.wild}{self.chain_id}{self.seq_num}{self.mutant}"


@dataclass
class MutationRecord:
    complex_id: str
    mutations: tuple[Mutation, ...]
    ddg: float | None = None

    def key(self) -> str:
        return f"{self.complex_id}:{';'.join(m.token() for m in self.mutations)}"

    @property
    def is_single(self) -> bool:
        return len(self.mutations) == 1


_MUTATION_RE = re.compile(r"^([A-Z])([A-Za-z0-9])(\d+)([A-Z])$")


def parse_mutation(token: str) -> Mutation:
    m = _MUTATION_RE.match(token.strip())
    if not m:
        raise DataError(f"malformed mutation token {token!r}")
    wild, chain, seq, mutant = m.groups()
    for aa in (wild, mutant):
        if aa not in THREE_LETTER:
            raise DataError(f"mutation token {token!r}: unknown amino acid {aa!r}")
    return Mutation(wild, chain, int(seq), mutant)


def parse_mutation_table(text: str) -> list[MutationRecord]:
    """CSV with header ``complex_id,mutations,ddg``; semicolons separate
    multi-point mutations; an empty ddg field means an unlabeled record."""
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or not {"complex_id", "mutations", "ddg"} <= set(reader.fieldnames):
        raise DataError("mutation table needs header columns complex_id,mutations,ddg")
    records: list[MutationRecord] = []
    for rownum, row in enumerate(reader, start=2):
        try:
            mutations = tuple(parse_mutation(tok) for tok in row["mutations"].split(";") if tok.strip())
            if not mutations:
                raise DataError("empty mutation list")
            ddg_field = (row["ddg"] or "").strip()
            ddg = float(ddg_field) if ddg_field else None
        except (DataError, ValueError) as err:
            logger.warning("row %d rejected: %s", rownum, err)
            continue
        records.append(MutationRecord(row["complex_id"].strip(), mutations, ddg))
    return records


def format_predictions(records: Sequence[MutationRecord], predictions: Sequence[float]) -> str:
    """CSV ``complex_id,mutations,ddg_pred[,ddg_true]`` for downstream tools."""
    out = ["complex_id,mutations,ddg_pred,ddg_true"]
    for rec, pred in zip(records, predictions):
        truth = "" if rec.ddg is None else repr(float(rec.ddg))
        out.append(f"{rec.complex_id},{';'.join(m.token() for m in rec.mutations)},{pred!r},{truth}")
    return "\n".join(out) + "\n"


def parse_predictions(text: str) -> tuple[list[MutationRecord], list[float]]:
    reader = csv.DictReader(io.StringIO(text))
    records, preds = [], []
    for row in reader:
        mutations = tuple(parse_mutation(tok) for tok in row["mutations"].split(";") if tok.strip())
        truth = (row.get("ddg_true") or "").strip()
        records.append(MutationRecord(row["complex_id"], mutations, float(truth) if truth else None))
        preds.append(float(row["ddg_pred"]))
    return records, preds


# ---------------------------------------------------------------------------
# folds


@dataclass
class FoldSplit:
    folds: tuple[list[str], list[str], list[str]]

    def __post_init__(self):
        seen: set[str] = set()
        for fold in self.folds:
            for cid in fold:
                if cid in seen:
                    raise DataError(f"complex '{cid}' appears in two folds")
                seen.add(cid)

    def all_ids(self) -> set[str]:
        return {cid for fold in self.folds for cid in fold}

    def to_json(self) -> str:
        return json.dumps({f"fold{i}": sorted(fold) for i, fold in enumerate(self.folds)}, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "FoldSplit":
        data = json.loads(text)
        try:
            return cls((list(data["fold0"]), list(data["fold1"]), list(data["fold2"])))
        except KeyError as err:
            raise DataError(f"fold file missing key {err}") from None


def split_three_folds(complex_ids: Iterable[str], rng: np.random.Generator) -> FoldSplit:
    """Near-equal random partition of distinct complex ids into three folds."""
    ids = sorted(set(complex_ids))
    if len(ids) < 3:
        raise DataError(f"need at least 3 distinct complexes, got {len(ids)}")
    perm = [ids[i] for i in rng.permutation(len(ids))]
    base, extra = divmod(len(perm), 3)
    sizes = [base + (1 if i < extra else 0) for i in range(3)]
    folds, start = [], 0
    for size in sizes:
        folds.append(perm[start:start + size])
        start += size
    return FoldSplit(tuple(folds))


# ---------------------------------------------------------------------------
# cropping


def crop_interface(cplx: Complex, rng: np.random.Generator, per_binder: int = 64,
                   mode: str = "interface") -> Complex:
    """Keep at most ``per_binder`` residues of each binder.

    ``interface`` mode keeps the residues nearest the partner binder's Ca
    centroid (random jitter breaks ties); ``uniform`` samples uniformly.
    Binders already within the budget pass through whole.
    """
    if mode not in ("interface", "uniform"):
        raise DataError(f"unknown crop mode {mode!r}")
    keep: list[int] = []
    for own, other in ((cplx.receptor_idx, cplx.ligand_idx), (cplx.ligand_idx, cplx.receptor_idx)):
        if len(own) <= per_binder:
            keep.extend(own)
            continue
        if mode == "uniform":
            chosen = rng.choice(len(own), size=per_binder, replace=False)
        else:
            centroid = np.mean([cplx.residues[j].position for j in other], axis=0)
            dists = np.array([np.linalg.norm(cplx.residues[i].position - centroid) for i in own])
            dists = dists + rng.uniform(0.0, 1e-9, size=dists.shape)
            chosen = np.argsort(dists)[:per_binder]
        keep.extend(own[int(c)] for c in chosen)
    keep.sort()
    remap = {old: new for new, old in enumerate(keep)}
    residues = [cplx.residues[i] for i in keep]
    rec = tuple(remap[i] for i in cplx.receptor_idx if i in remap)
    lig = tuple(remap[i] for i in cplx.ligand_idx if i in remap)
    return Complex(residues, rec, lig, cplx.structure_id)


def crop_patch(residues: Sequence[Residue], rng: np.random.Generator,
               size: int = 128) -> list[Residue]:
    """Contiguous window of min(size, len) residues at a random start."""
    if not residues:
        raise DataError("cannot crop an empty chain")
    if len(residues) <= size:
        return list(residues)
    start = int(rng.integers(0, len(residues) - size + 1))
    return list(residues[start:start + size])


# ---------------------------------------------------------------------------
# manifests and clusters


@dataclass
class ComplexEntry:
    complex_id: str
    path: str
    receptor_chains: list[str]
    ligand_chains: list[str]


def load_manifest(path) -> list[ComplexEntry]:
    """JSON list of {id, file, receptor_chains, ligand_chains}; file paths
    are resolved relative to the manifest's directory."""
    path = Path(path)
    data = json.loads(path.read_text())
    entries = []
    for item in data:
        entries.append(ComplexEntry(
            complex_id=item["id"],
            path=str((path.parent / item["file"]).resolve()),
            receptor_chains=list(item["receptor_chains"]),
            ligand_chains=list(item["ligand_chains"]),
        ))
    if not entries:
        raise DataError(f"manifest {path} lists no complexes")
    return entries


def load_complex(entry: ComplexEntry) -> Complex:
    return parse_structure(Path(entry.path).read_text(), entry.receptor_chains,
                           entry.ligand_chains, entry.complex_id)


@dataclass(frozen=True)
class ChainRef:
    path: str
    chain_id: str


def load_clusters(path) -> dict[str, list[ChainRef]]:
    """JSON mapping cluster id -> [{file, chain}, ...], paths relative to the file."""
    path = Path(path)
    data = json.loads(path.read_text())
    clusters = {
        cid: [ChainRef(str((path.parent / m["file"]).resolve()), m["chain"]) for m in members]
        for cid, members in data.items()
    }
    clusters = {cid: members for cid, members in clusters.items() if members}
    if not clusters:
        raise DataError(f"cluster file {path} is empty")
    return clusters
