"""Structure parsing, mutation tables, folds, and cropping."""
import numpy as np
import pytest

from mutflow import dataio, geometry as geo
from mutflow.tensorcore import make_rng

from conftest import build_complex


TWO_RES_PDB = """\
ATOM      1  N   ALA A   1       0.000   1.000   0.000  1.00  0.00
ATOM      2  CA  ALA A   1       0.000   0.000   0.000  1.00  0.00
ATOM      3  C   ALA A   1       1.500   0.000   0.000  1.00  0.00
ATOM      4  O   ALA A   1       2.100   1.000   0.200  1.00  0.00
ATOM      5  N   GLY B   5       0.000   9.000   0.000  1.00  0.00
ATOM      6  CA  GLY B   5       0.300   8.100   0.850  1.00  0.00
ATOM      7  C   GLY B   5       1.700   8.300   1.400  1.00  0.00
HETATM    8  O   HOH B   9       5.000   5.000   5.000  1.00  0.00
END
"""


class TestParseStructure:
    def test_two_residue_two_chain_fixture(self):
        cplx = dataio.parse_structure(TWO_RES_PDB, receptor_chains=["A"], ligand_chains=["B"], structure_id="TOY")
        assert cplx.n == 2
        assert len(cplx.receptor_idx) == 1 and len(cplx.ligand_idx) == 1
        assert cplx.residues[0].three == "ALA" and cplx.residues[1].three == "GLY"
        assert np.allclose(cplx.residues[0].position, [0, 0, 0])

    def test_hetatm_ignored(self):
        chains = dataio.parse_chains(TWO_RES_PDB)
        assert sum(len(v) for v in chains.values()) == 2

    def test_empty_structure_rejected(self):
        with pytest.raises(dataio.DataError, match="no parseable"):
            dataio.parse_structure("REMARK nothing here\nEND\n", ["A"], ["B"])

    def test_bad_coordinate_names_line(self):
        bad = TWO_RES_PDB.replace("   0.000   0.000   0.000", "   0.000   xx.000   0.000")
        with pytest.raises(dataio.DataError, match="line 2"):
            dataio.parse_chains(bad)

    def test_unknown_residue_skipped(self, caplog):
        text = TWO_RES_PDB.replace("ALA A", "XXX A")
        chains = dataio.parse_chains(text)
        assert "A" not in chains and len(chains["B"]) == 1

    def test_missing_backbone_skipped(self):
        text = "\n".join(line for line in TWO_RES_PDB.splitlines() if " C   ALA" not in line)
        chains = dataio.parse_chains(text)
        assert "A" not in chains

    def test_missing_chain_in_partition(self):
        with pytest.raises(dataio.DataError, match="chain 'Z'"):
            dataio.parse_structure(TWO_RES_PDB, ["A"], ["Z"])

    def test_roundtrip_through_writer(self, toy_complex):
        text = dataio.write_pdb(toy_complex.residues)
        chains = dataio.parse_chains(text)
        flat = [r for cid in sorted(chains) for r in chains[cid]]
        assert len(flat) == toy_complex.n
        for orig, back in zip(toy_complex.residues, flat):
            assert orig.three == back.three
            assert orig.seq_num == back.seq_num
            assert set(orig.atoms) == set(back.atoms)
            for name in orig.atoms:
                assert np.abs(orig.atoms[name] - back.atoms[name]).max() < 1e-3 + 1e-12


class TestMutationTable:
    def test_single_point_row(self):
        recs = dataio.parse_mutation_table("complex_id,mutations,ddg\n1ABC,TH31W,1.2\n")
        assert len(recs) == 1
        rec = recs[0]
        assert rec.complex_id == "1ABC" and rec.ddg == 1.2 and rec.is_single
        m = rec.mutations[0]
        assert (m.wild, m.chain_id, m.seq_num, m.mutant) == ("T", "H", 31, "W")

    def test_multi_point_row(self):
        recs = dataio.parse_mutation_table("complex_id,mutations,ddg\n1ABC,TH31W;AH53F,0.0\n")
        assert len(recs[0].mutations) == 2 and not recs[0].is_single
        assert recs[0].mutations[1].token() == "AH53F"

    def test_empty_ddg_means_unlabeled(self):
        recs = dataio.parse_mutation_table("complex_id,mutations,ddg\n1ABC,TH31W,\n")
        assert recs[0].ddg is None

    def test_malformed_token_rejects_row(self, caplog):
        # 'B' is not an amino acid letter; 'TH31' misses the mutant type
        text = "complex_id,mutations,ddg\n1ABC,BH31W,1.0\n1ABC,TH31,1.5\n1ABC,TH31W,2.0\n"
        recs = dataio.parse_mutation_table(text)
        assert len(recs) == 1 and recs[0].ddg == 2.0

    def test_bad_header_rejected(self):
        with pytest.raises(dataio.DataError):
            dataio.parse_mutation_table("id,mut\n1,2\n")

    def test_predictions_roundtrip(self):
        recs = dataio.parse_mutation_table(
            "complex_id,mutations,ddg\n1ABC,TH31W,1.25\n2XYZ,AH53F;NH57L,\n")
        text = dataio.format_predictions(recs, [0.5, -1.75])
        back_recs, preds = dataio.parse_predictions(text)
        assert preds == [0.5, -1.75]
        assert back_recs[0].ddg == 1.25 and back_recs[1].ddg is None
        assert back_recs[1].mutations[1].token() == "NH57L"


class TestFolds:
    def test_three_complexes_one_per_fold(self):
        split = dataio.split_three_folds(["a", "b", "c"], make_rng(0))
        assert sorted(len(f) for f in split.folds) == [1, 1, 1]

    def test_ten_complexes_sizes_433(self):
        split = dataio.split_three_folds([f"c{i}" for i in range(10)], make_rng(0))
        assert sorted(len(f) for f in split.folds) == [3, 3, 4]
        assert split.all_ids() == {f"c{i}" for i in range(10)}

    def test_deterministic_under_seed(self):
        ids = [f"c{i}" for i in range(10)]
        a = dataio.split_three_folds(ids, make_rng(42))
        b = dataio.split_three_folds(ids, make_rng(42))
        assert a.folds == b.folds

    def test_too_few_rejected(self):
        with pytest.raises(dataio.DataError):
            dataio.split_three_folds(["a", "b"], make_rng(0))

    def test_json_roundtrip_and_duplicate_rejected(self):
        split = dataio.split_three_folds([f"c{i}" for i in range(7)], make_rng(1))
        back = dataio.FoldSplit.from_json(split.to_json())
        assert {tuple(sorted(f)) for f in back.folds} == {tuple(sorted(f)) for f in split.folds}
        with pytest.raises(dataio.DataError):
            dataio.FoldSplit((["a"], ["a"], ["b"]))


class TestCropping:
    def test_small_binders_pass_through(self, toy_complex):
        out = dataio.crop_interface(toy_complex, make_rng(0))
        assert out.n == toy_complex.n

    def test_large_binders_crop_to_64_each(self):
        types = ["ALA", "GLY", "SER", "VAL"] * 25
        cplx = build_complex(seed=3, receptor_types=types, ligand_types=types)
        out = dataio.crop_interface(cplx, make_rng(0))
        assert out.n == 128
        assert len(out.receptor_idx) == 64 and len(out.ligand_idx) == 64

    def test_interface_mode_prefers_near_partner(self):
        types = ["ALA"] * 80
        cplx = build_complex(seed=4, receptor_types=types, ligand_types=types)
        out = dataio.crop_interface(cplx, make_rng(0), per_binder=16)
        partner_centroid = np.mean([cplx.residues[i].position for i in cplx.ligand_idx], axis=0)
        kept = [np.linalg.norm(r.position - partner_centroid) for i, r in enumerate(out.residues)
                if i in set(out.receptor_idx)]
        all_d = sorted(np.linalg.norm(cplx.residues[i].position - partner_centroid)
                       for i in cplx.receptor_idx)
        assert max(kept) <= all_d[16] + 1e-6

    def test_binder_labels_never_mix(self):
        types = ["ALA", "GLY"] * 40
        cplx = build_complex(seed=5, receptor_types=types, ligand_types=types)
        for mode in ("interface", "uniform"):
            out = dataio.crop_interface(cplx, make_rng(1), mode=mode)
            rec_chains = {out.residues[i].chain_id for i in out.receptor_idx}
            lig_chains = {out.residues[i].chain_id for i in out.ligand_idx}
            assert rec_chains == {"A"} and lig_chains == {"B"}

    def test_crop_patch_window(self):
        cplx = build_complex(seed=6, receptor_types=["ALA"] * 50, ligand_types=["GLY"] * 4)
        chain = [cplx.residues[i] for i in cplx.receptor_idx]
        assert len(dataio.crop_patch(chain, make_rng(0), size=128)) == 50
        long_chain = chain * 6
        window = dataio.crop_patch(long_chain, make_rng(0), size=128)
        assert len(window) == 128
        again = dataio.crop_patch(long_chain, make_rng(0), size=128)
        assert [r.seq_num for r in window] == [r.seq_num for r in again]
