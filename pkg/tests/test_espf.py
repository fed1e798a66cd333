"""SMILES tokenization, merge vocabulary and feature encoding."""

import numpy as np
import pytest

from hinddi.espf import (
    FINGERPRINT_BITS,
    RelationParseError,
    SmilesError,
    Vocabulary,
    build_feature_matrix,
    build_vocab,
    encode_drug,
    load_fingerprints,
    load_vocab,
    save_vocab,
    tokenize_smiles,
)
from hinddi.hin import EntityKind, EntityRegistry
from hinddi.metapath import builtin_specs, commuting_matrix
from tests.conftest import make_registry


class TestTokenize:
    def test_single_char_atoms(self):
        assert tokenize_smiles("CCO") == ["C", "C", "O"]

    def test_two_letter_and_bonds(self):
        assert tokenize_smiles("C(Br)=O") == ["C", "(", "Br", ")", "=", "O"]

    def test_bracket_atoms_are_single_tokens(self):
        assert tokenize_smiles("[nH]1cc1") == ["[nH]", "1", "c", "c", "1"]

    def test_unbalanced_bracket_reports_position(self):
        with pytest.raises(SmilesError, match="position 2"):
            tokenize_smiles("CC[nH")

    def test_round_trip(self):
        for s in ("CCO", "C(Br)=O", "[nH]1cc1", "ClC(Cl)Cl", "C%12CC%12",
                  "O=C(O)c1ccccc1"):
            assert "".join(tokenize_smiles(s)) == s

    def test_empty_rejected(self):
        with pytest.raises(SmilesError):
            tokenize_smiles("")


class TestBuildVocab:
    def test_hand_traced_merge(self):
        # {"CCO", "CCN"}, threshold 2: only (C, C) reaches frequency 2, so
        # the single merge is CC; base units are the sorted letters.
        corpus = [tokenize_smiles("CCO"), tokenize_smiles("CCN")]
        vocab = build_vocab(corpus, threshold=2, max_size=10)
        assert vocab.units == ("C", "N", "O", "CC")
        assert vocab.merges == (("C", "C"),)

    def test_threshold_above_all_frequencies(self):
        corpus = [tokenize_smiles("CCO"), tokenize_smiles("CCN")]
        vocab = build_vocab(corpus, threshold=3, max_size=10)
        assert vocab.units == ("C", "N", "O")
        assert vocab.merges == ()

    def test_max_size_at_base_units_blocks_merges(self):
        corpus = [tokenize_smiles("CCO"), tokenize_smiles("CCN")]
        vocab = build_vocab(corpus, threshold=2, max_size=3)
        assert vocab.units == ("C", "N", "O")

    def test_non_overlapping_pair_counting(self):
        # "CCC" holds one non-overlapping (C, C) occurrence, so threshold 2
        # is not reached by a single sequence.
        vocab = build_vocab([tokenize_smiles("CCC")], threshold=2, max_size=10)
        assert vocab.merges == ()

    def test_deterministic_across_runs(self):
        corpus = [tokenize_smiles(s) for s in
                  ("CCOCC", "CCNCC", "OCCO", "NCCN", "CCCC")]
        a = build_vocab(corpus, threshold=2, max_size=16)
        b = build_vocab([list(seq) for seq in corpus], threshold=2, max_size=16)
        assert a == b

    def test_merges_shrink_corpus_by_pair_frequency(self):
        corpus = [tokenize_smiles(s) for s in ("CCOCC", "CCNCC", "CCCC")]
        from hinddi.espf import _count_pairs, _merge_sequence
        sequences = [list(s) for s in corpus]
        for _ in range(4):
            counts = _count_pairs(sequences)
            if not counts:
                break
            pair = max(counts, key=lambda p: (counts[p],))
            before = sum(len(s) for s in sequences)
            sequences = [_merge_sequence(s, pair) for s in sequences]
            after = sum(len(s) for s in sequences)
            assert before - after == counts[pair]

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            build_vocab([["C"]], threshold=0)


class TestEncode:
    def test_merge_trace_bits(self):
        vocab = build_vocab([tokenize_smiles("CCO"), tokenize_smiles("CCN")],
                            threshold=2, max_size=10)
        row = encode_drug(tokenize_smiles("CCO"), vocab)
        bits = {vocab.units[k] for k in np.flatnonzero(row)}
        assert bits == {"CC", "O"}

    def test_no_merges_gives_raw_token_set(self):
        vocab = Vocabulary(("C", "N", "O"), 3, (), 5, 512)
        row = encode_drug(tokenize_smiles("CON"), vocab)
        assert row.tolist() == [1, 1, 1]

    def test_encoding_is_deterministic(self):
        vocab = build_vocab([tokenize_smiles("CCOCC")], threshold=2, max_size=10)
        tokens = tokenize_smiles("CCOCC")
        np.testing.assert_array_equal(encode_drug(tokens, vocab),
                                      encode_drug(tokens, vocab))

    def test_unknown_unit_falls_back_to_base_chars(self):
        vocab = Vocabulary(("C", "O"), 2, (), 5, 512)
        row = encode_drug(tokenize_smiles("CSO"), vocab)  # S unseen
        bits = {vocab.units[k] for k in np.flatnonzero(row)}
        assert bits == {"C", "O"}

    def test_registry_alignment_and_missing_smiles(self):
        reg = make_registry(2)
        vocab = build_vocab([tokenize_smiles("CC")], threshold=5, max_size=8)
        with pytest.raises(SmilesError, match="d1"):
            build_feature_matrix({"d0": "CC"}, vocab, reg)
        fm = build_feature_matrix({"d0": "CC", "d1": "C"}, vocab, reg)
        assert fm.values.shape == (2, vocab.size)
        assert fm.drug_ids == ("d0", "d1")


class TestVocabRoundTrip:
    def test_save_load_identical(self, tmp_path):
        corpus = [tokenize_smiles(s) for s in
                  ("CCOCC", "CCNCC", "OCCO", "NCCN", "CCCC", "ClCCCl")]
        vocab = build_vocab(corpus, threshold=2, max_size=32)
        save_vocab(vocab, tmp_path / "vocab.tsv")
        assert load_vocab(tmp_path / "vocab.tsv") == vocab

    def test_reload_encodes_identically(self, tmp_path):
        corpus = [tokenize_smiles(s) for s in ("CCOCC", "CCNCC", "CCCC")]
        vocab = build_vocab(corpus, threshold=2, max_size=32)
        save_vocab(vocab, tmp_path / "vocab.tsv")
        back = load_vocab(tmp_path / "vocab.tsv")
        for seq in corpus:
            np.testing.assert_array_equal(encode_drug(seq, vocab),
                                          encode_drug(seq, back))


class TestFingerprints:
    def bitstring(self, bits):
        s = ["0"] * FINGERPRINT_BITS
        for b in bits:
            s[b] = "1"
        return "".join(s)

    def test_three_set_bits_three_nonzeros(self, tmp_path):
        f = tmp_path / "fp.tsv"
        f.write_text(f"d0\t{self.bitstring([1, 42, 100])}\n", encoding="utf-8")
        reg = EntityRegistry()
        h, fm = load_fingerprints(f, reg)
        assert h.nnz == 3
        assert reg.count(EntityKind.SUBSTRUCTURE) == FINGERPRINT_BITS
        assert fm.d0 == FINGERPRINT_BITS
        assert fm.values.sum() == 3

    def test_all_zero_bitstring_keeps_drug(self, tmp_path):
        f = tmp_path / "fp.tsv"
        f.write_text(f"d0\t{self.bitstring([])}\n", encoding="utf-8")
        reg = EntityRegistry()
        h, fm = load_fingerprints(f, reg)
        assert reg.count(EntityKind.DRUG) == 1
        assert h.nnz == 0

    def test_shared_bit_creates_substructure_path(self, tmp_path):
        f = tmp_path / "fp.tsv"
        f.write_text(f"d0\t{self.bitstring([42])}\nd1\t{self.bitstring([42, 7])}\n",
                     encoding="utf-8")
        reg = EntityRegistry()
        h, _ = load_fingerprints(f, reg)
        from tests.conftest import make_hin
        from hinddi.hin import RelationMatrix, build_hin
        empty = lambda s, t, shape: RelationMatrix.from_pairs(s, t, shape, [])
        hin = build_hin(reg,
                        empty(EntityKind.DRUG, EntityKind.PROTEIN, (2, 0)),
                        empty(EntityKind.DRUG, EntityKind.SIDE_EFFECT, (2, 0)),
                        h,
                        empty(EntityKind.PROTEIN, EntityKind.PROTEIN, (0, 0)))
        spec = [s for s in builtin_specs() if s.name == "DID-3"][0]
        counts = commuting_matrix(hin, spec).counts
        assert counts[0, 1] >= 1

    def test_wrong_length_names_drug(self, tmp_path):
        f = tmp_path / "fp.tsv"
        f.write_text("dX\t0101\n", encoding="utf-8")
        with pytest.raises(RelationParseError, match="dX"):
            load_fingerprints(f, EntityRegistry())
