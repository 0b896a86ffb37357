"""Rigid-body geometry over protein complexes.

Residue local frames, dihedral/torsion angles, ligand-receptor Ca distance
maps, and the rigid randomization that fakes an unbound ligand pose. All
angles are radians in [0, 2pi); all coordinates are Angstroms, float64.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Alphabetical by three-letter code; this index order is used everywhere.
AMINO_ACIDS = (
    "ALA", "ARG", "ASN", "ASP", "CYS", "GLN", "GLU", "GLY", "HIS", "ILE",
    "LEU", "LYS", "MET", "PHE", "PRO", "SER", "THR", "TRP", "TYR", "VAL",
)
AA_INDEX = {aa: i for i, aa in enumerate(AMINO_ACIDS)}
ONE_LETTER = {
    "ALA": "A", "ARG": "R", "ASN": "N", "ASP": "D", "CYS": "C",
    "GLN": "Q", "GLU": "E", "GLY": "G", "HIS": "H", "ILE": "I",
    "LEU": "L", "LYS": "K", "MET": "M", "PHE": "F", "PRO": "P",
    "SER": "S", "THR": "T", "TRP": "W", "TYR": "Y", "VAL": "V",
}
THREE_LETTER = {v: k for k, v in ONE_LETTER.items()}

# Four-atom definitions of chi1..chi4 per residue type (standard tables).
CHI_ATOMS: dict[str, tuple[tuple[str, str, str, str], ...]] = {
    "ALA": (),
    "GLY": (),
    "ARG": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD"),
            ("CB", "CG", "CD", "NE"), ("CG", "CD", "NE", "CZ")),
    "ASN": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "OD1")),
    "ASP": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "OD1")),
    "CYS": (("N", "CA", "CB", "SG"),),
    "GLN": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD"),
            ("CB", "CG", "CD", "OE1")),
    "GLU": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD"),
            ("CB", "CG", "CD", "OE1")),
    "HIS": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "ND1")),
    "ILE": (("N", "CA", "CB", "CG1"), ("CA", "CB", "CG1", "CD1")),
    "LEU": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD1")),
    "LYS": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD"),
            ("CB", "CG", "CD", "CE"), ("CG", "CD", "CE", "NZ")),
    "MET": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "SD"),
            ("CB", "CG", "SD", "CE")),
    "PHE": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD1")),
    "PRO": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD")),
    "SER": (("N", "CA", "CB", "OG"),),
    "THR": (("N", "CA", "CB", "OG1"),),
    "TRP": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD1")),
    "TYR": (("N", "CA", "CB", "CG"), ("CA", "CB", "CG", "CD1")),
    "VAL": (("N", "CA", "CB", "CG1"),),
}
CHI_COUNTS = {aa: len(defs) for aa, defs in CHI_ATOMS.items()}


class GeometryError(ValueError):
    """Degenerate geometry or missing atoms."""


@dataclass
class RigidTransform:
    """Proper rigid motion x -> R x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64)
        self.translation = np.asarray(self.translation, dtype=np.float64)
        if self.rotation.shape != (3, 3) or self.translation.shape != (3,):
            raise GeometryError("rigid transform needs a 3x3 rotation and 3-vector translation")
        if np.abs(self.rotation.T @ self.rotation - np.eye(3)).max() > 1e-9:
            raise GeometryError("rotation is not orthonormal")
        if abs(np.linalg.det(self.rotation) - 1.0) > 1e-9:
            raise GeometryError("rotation determinant is not +1")

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points) @ self.rotation.T + self.translation

    def apply_inverse(self, points: np.ndarray) -> np.ndarray:
        return (np.asarray(points) - self.translation) @ self.rotation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: (self o other)(x) = R_s (R_o x + t_o) + t_s."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)


@dataclass
class Residue:
    """One residue: type, atoms, local frame, backbone dihedrals, torsions."""

    three: str
    chain_id: str
    seq_num: int
    atoms: dict[str, np.ndarray]
    frame: RigidTransform
    phi: float | None = None
    psi: float | None = None
    omega: float | None = None
    chi: tuple[float, ...] = ()
    chi_complete: bool = True

    @property
    def type_idx(self) -> int:
        return AA_INDEX[self.three]

    @property
    def position(self) -> np.ndarray:
        return self.atoms["CA"]

    @property
    def torsion_count(self) -> int:
        return CHI_COUNTS[self.three]

    def label(self) -> str:
        return f"{self.three} {self.chain_id}{self.seq_num}"


@dataclass
class Complex:
    """A two-binder structure: ordered residues split into receptor and ligand index sets."""

    residues: list[Residue]
    receptor_idx: tuple[int, ...]
    ligand_idx: tuple[int, ...]
    structure_id: str = ""

    def __post_init__(self):
        self.receptor_idx = tuple(self.receptor_idx)
        self.ligand_idx = tuple(self.ligand_idx)
        rec, lig = set(self.receptor_idx), set(self.ligand_idx)
        if not rec or not lig:
            raise GeometryError(f"complex '{self.structure_id}': both binders must be non-empty")
        if rec & lig:
            raise GeometryError(f"complex '{self.structure_id}': binder index sets overlap")
        if rec | lig != set(range(len(self.residues))):
            raise GeometryError(f"complex '{self.structure_id}': binder sets must cover all residues")

    @property
    def n(self) -> int:
        return len(self.residues)

    def swapped_roles(self) -> "Complex":
        return Complex(self.residues, self.ligand_idx, self.receptor_idx, self.structure_id)


# ---------------------------------------------------------------------------
# angles and frames


def dihedral(p1, p2, p3, p4) -> float:
    """Signed dihedral of four points, mapped into [0, 2pi).

    atan2 form: x = n1.n2, y = (n1 x n2).b2_hat with n1, n2 the plane
    normals. Collinear consecutive triples have no defined plane.
    """
    p1, p2, p3, p4 = (np.asarray(p, dtype=np.float64) for p in (p1, p2, p3, p4))
    b1, b2, b3 = p2 - p1, p3 - p2, p4 - p3
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    scale = max(np.linalg.norm(b1), np.linalg.norm(b2), np.linalg.norm(b3))
    if np.linalg.norm(n1) < 1e-9 * scale * scale or np.linalg.norm(n2) < 1e-9 * scale * scale:
        raise GeometryError("dihedral undefined: three consecutive points are collinear")
    b2n = b2 / np.linalg.norm(b2)
    angle = math.atan2(float(np.dot(np.cross(n1, n2), b2n)), float(np.dot(n1, n2)))
    return angle % TWO_PI


def build_frame(n_atom, ca_atom, c_atom) -> RigidTransform:
    """Local residue frame: x-axis along Ca->C, y from Gram-Schmidt of Ca->N,
    z completing the right-handed triad; origin at Ca."""
    n_atom, ca_atom, c_atom = (np.asarray(p, dtype=np.float64) for p in (n_atom, ca_atom, c_atom))
    e1 = c_atom - ca_atom
    norm1 = np.linalg.norm(e1)
    if norm1 < 1e-9:
        raise GeometryError("degenerate backbone: Ca and C coincide")
    e1 = e1 / norm1
    u = n_atom - ca_atom
    e2 = u - np.dot(u, e1) * e1
    norm2 = np.linalg.norm(e2)
    if norm2 < 1e-9 * max(np.linalg.norm(u), 1.0):
        raise GeometryError("degenerate backbone: N, Ca, C are collinear")
    e2 = e2 / norm2
    e3 = np.cross(e1, e2)
    return RigidTransform(np.stack([e1, e2, e3], axis=1), ca_atom)


def sidechain_torsions(atoms: Mapping[str, np.ndarray], three: str) -> tuple[tuple[float, ...], bool]:
    """Canonical chi angles available from ``atoms``.

    Returns the torsions that could be computed plus a completeness flag;
    a missing atom truncates the list (the residue is then excluded from
    rotamer-density training rather than imputed).
    """
    defs = CHI_ATOMS[three]
    chi: list[float] = []
    for four in defs:
        if any(a not in atoms for a in four):
            return tuple(chi), False
        chi.append(dihedral(*(atoms[a] for a in four)))
    return tuple(chi), True


# ---------------------------------------------------------------------------
# complex-level operations


def transform_residue(res: Residue, rotation: np.ndarray, offset: np.ndarray) -> Residue:
    """Apply x -> R x + offset to every atom; compose the frame; dihedrals are rigid-invariant."""
    atoms = {name: rotation @ xyz + offset for name, xyz in res.atoms.items()}
    frame = RigidTransform(rotation @ res.frame.rotation,
                           rotation @ res.frame.translation + offset)
    return replace(res, atoms=atoms, frame=frame)


def transform_complex(cplx: Complex, rotation: np.ndarray, offset: np.ndarray) -> Complex:
    residues = [transform_residue(r, rotation, offset) for r in cplx.residues]
    return Complex(residues, cplx.receptor_idx, cplx.ligand_idx, cplx.structure_id)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform rotation on SO(3) from a normalized random quaternion."""
    q = rng.normal(size=4)
    q = q / np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_ball(rng: np.random.Generator, radius: float) -> np.ndarray:
    """Uniform point in a ball, by rejection from the bounding cube."""
    while True:
        u = rng.uniform(-radius, radius, size=3)
        if np.linalg.norm(u) <= radius:
            return u


def apply_ligand_transform(cplx: Complex, rotation: np.ndarray, offset: np.ndarray) -> Complex:
    """Rotate the ligand about its Ca centroid, then shift it by ``offset``.

    The motion is folded into a single affine map so that an injected
    identity (rotation=I, offset=0) leaves coordinates bit-identical.
    Receptor residue objects are shared untouched.
    """
    rotation = np.asarray(rotation, dtype=np.float64)
    offset = np.asarray(offset, dtype=np.float64)
    center = np.mean([cplx.residues[i].position for i in cplx.ligand_idx], axis=0)
    shift = center - rotation @ center + offset
    lig = set(cplx.ligand_idx)
    residues = [transform_residue(r, rotation, shift) if i in lig else r
                for i, r in enumerate(cplx.residues)]
    return Complex(residues, cplx.receptor_idx, cplx.ligand_idx, cplx.structure_id)


def random_unbound_transform(cplx: Complex, rng: np.random.Generator,
                             max_translation: float = 10.0) -> Complex:
    """Simulate an unbound state: receptor stays put, the ligand gets one
    shared random rotation plus a random offset within ``max_translation``."""
    return apply_ligand_transform(cplx, random_rotation(rng), random_ball(rng, max_translation))


def annotate_chain(entries: Sequence[tuple[str, str, int, dict[str, np.ndarray]]]) -> list[Residue]:
    """Turn raw per-residue atom maps (one chain, in order) into Residues.

    Every entry must carry a complete N/CA/C backbone. Backbone dihedrals
    use neighbors only when sequence numbers are consecutive, so chain
    breaks leave phi/psi/omega undefined rather than spanning the gap.
    """
    residues: list[Residue] = []
    for three, chain_id, seq, atoms in entries:
        frame = build_frame(atoms["N"], atoms["CA"], atoms["C"])
        chi, complete = sidechain_torsions(atoms, three)
        residues.append(Residue(three, chain_id, seq, dict(atoms), frame,
                                chi=chi, chi_complete=complete))
    for i, res in enumerate(residues):
        prev = residues[i - 1] if i > 0 and residues[i - 1].seq_num == res.seq_num - 1 else None
        nxt = residues[i + 1] if i + 1 < len(residues) and residues[i + 1].seq_num == res.seq_num + 1 else None
        if prev is not None:
            res.phi = dihedral(prev.atoms["C"], res.atoms["N"], res.atoms["CA"], res.atoms["C"])
            res.omega = dihedral(prev.atoms["CA"], prev.atoms["C"], res.atoms["N"], res.atoms["CA"])
        if nxt is not None:
            res.psi = dihedral(res.atoms["N"], res.atoms["CA"], res.atoms["C"], nxt.atoms["N"])
    return residues


def ca_distance_map(cplx: Complex) -> np.ndarray:
    """|ligand| x |receptor| matrix of Ca-Ca Euclidean distances."""
    for idx in (*cplx.ligand_idx, *cplx.receptor_idx):
        if "CA" not in cplx.residues[idx].atoms:
            raise GeometryError(f"residue {cplx.residues[idx].label()} has no CA atom")
    lig = np.stack([cplx.residues[i].position for i in cplx.ligand_idx])
    rec = np.stack([cplx.residues[j].position for j in cplx.receptor_idx])
    diff = lig[:, None, :] - rec[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))
