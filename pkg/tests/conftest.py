"""Synthetic structure builders shared across the test suite."""
import numpy as np
import pytest

from mutflow import geometry as geo
from mutflow.tensorcore import make_rng


def _sidechain_atom_names(three: str) -> list[str]:
    defs = geo.CHI_ATOMS[three]
    names = [] if three == "GLY" else ["CB"]
    for four in defs:
        if four[3] not in names:
            names.append(four[3])
    return names


def build_atoms(rng, three: str, ca: np.ndarray) -> dict:
    """Backbone plus enough sidechain atoms for every canonical torsion.

    Geometry is synthetic (random per-residue orientation, ~1.5 A bonds)
    but guaranteed non-degenerate for frame and dihedral construction.
    """
    rot = geo.random_rotation(rng)
    atoms = {
        "CA": ca.astype(float),
        "N": ca + rot @ np.array([-1.46, 0.0, 0.0]),
        "C": ca + rot @ np.array([0.55, 1.42, 0.0]),
    }
    atoms["O"] = atoms["C"] + rot @ np.array([0.2, 0.6, 1.05])
    prev_dir = rot @ np.array([0.35, -0.8, 0.65])
    pos = ca
    for name in _sidechain_atom_names(three):
        d = prev_dir / np.linalg.norm(prev_dir)
        pos = pos + 1.52 * d
        atoms[name] = pos
        # bend the chain so consecutive bonds are never collinear
        turn = rng.normal(size=3)
        turn -= d * (turn @ d)
        prev_dir = 0.55 * d + 0.85 * turn / max(np.linalg.norm(turn), 1e-9)
    return atoms


def build_chain(rng, types, chain_id: str, origin, direction, start_seq: int = 1):
    """A chain of residues with Ca ~3.8 A apart along ``direction`` plus jitter."""
    direction = np.asarray(direction, float)
    direction = direction / np.linalg.norm(direction)
    entries = []
    for i, three in enumerate(types):
        ca = np.asarray(origin, float) + 3.8 * i * direction + rng.normal(scale=0.35, size=3)
        entries.append((three, chain_id, start_seq + i, build_atoms(rng, three, ca)))
    return geo.annotate_chain(entries)


def build_complex(seed: int, receptor_types=None, ligand_types=None,
                  structure_id: str = "TOY1", separation: float = 9.0) -> geo.Complex:
    """Two short chains facing each other across ``separation`` Angstroms."""
    rng = make_rng(seed)
    receptor_types = receptor_types or ["ALA", "SER", "LEU", "GLY"]
    ligand_types = ligand_types or ["ARG", "VAL", "THR", "LYS"]
    rec = build_chain(rng, receptor_types, "A", origin=[0.0, 0.0, 0.0], direction=[1.0, 0.15, 0.0])
    lig = build_chain(rng, ligand_types, "B", origin=[0.0, separation, 1.0], direction=[1.0, -0.1, 0.1])
    residues = rec + lig
    return geo.Complex(residues,
                       receptor_idx=tuple(range(len(rec))),
                       ligand_idx=tuple(range(len(rec), len(residues))),
                       structure_id=structure_id)


@pytest.fixture
def toy_complex():
    return build_complex(seed=11)


@pytest.fixture
def rng():
    return make_rng(0)
