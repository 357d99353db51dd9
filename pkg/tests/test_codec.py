import pytest
from ethereum_rlp import rlp

from chaincoord import codec
from chaincoord.chain import Account, WorldState
from chaincoord.codec import DecodeError


class TestEncoding:
    def test_mapping_order_does_not_change_bytes(self):
        assert codec.encode({1: "a", 2: "b"}) == codec.encode({2: "b", 1: "a"})

    def test_set_order_does_not_change_bytes(self):
        assert codec.encode({b"x", b"y", b"z"}) == codec.encode({b"z", b"x", b"y"})

    def test_integers_are_minimal(self):
        assert codec.to_tree(0) == [codec.INT, b"", b""]
        assert codec.to_tree(255) == [codec.INT, b"", b"\xff"]
        assert codec.to_tree(-1) == [codec.INT, b"\x01", b"\x01"]
        assert codec.encode(256) == rlp.encode([codec.INT, b"", b"\x01\x00"])

    def test_bool_is_not_an_integer(self):
        assert codec.encode(True) != codec.encode(1)

    def test_registered_record_decodes_to_equal_value(self):
        account = Account(b"\x01" * 20, nonce=3, balance=10**20)
        assert codec.decode_canonical(codec.encode(account)) == account

    def test_nested_values(self):
        value = (None, False, -7, "x", {b"k": frozenset({1, 2})})
        assert codec.decode_canonical(codec.encode(value)) == value

    def test_unsupported_type(self):
        with pytest.raises(TypeError):
            codec.encode(1.5)


class TestStrictDecoding:
    def test_trailing_bytes(self):
        with pytest.raises(DecodeError):
            codec.decode(codec.encode(7) + b"\x00")

    def test_truncated_input(self):
        with pytest.raises(DecodeError):
            codec.decode(codec.encode(b"abcdef")[:-1])

    def test_empty_input(self):
        with pytest.raises(DecodeError):
            codec.decode(b"")

    def test_leading_zero_integer(self):
        with pytest.raises(DecodeError):
            codec.decode(rlp.encode([codec.INT, b"", b"\x00\x05"]))

    def test_negative_zero(self):
        with pytest.raises(DecodeError):
            codec.decode(rlp.encode([codec.INT, b"\x01", b""]))

    def test_bad_boolean(self):
        with pytest.raises(DecodeError):
            codec.decode(rlp.encode([codec.BOOL, b"\x02"]))

    def test_wrong_arity(self):
        with pytest.raises(DecodeError):
            codec.decode(rlp.encode([codec.BYTES, b"a", b"b"]))

    def test_bare_string_is_not_a_node(self):
        with pytest.raises(DecodeError):
            codec.decode(rlp.encode(b"abc"))

    def test_unknown_tag(self):
        with pytest.raises(DecodeError):
            codec.decode(rlp.encode([b"\x7f"]))

    def test_unregistered_record(self):
        with pytest.raises(DecodeError):
            codec.decode(rlp.encode([codec.RECORD, b"Ghost", []]))

    def test_unsorted_map_is_not_canonical(self):
        one = [codec.to_tree(1), codec.to_tree(0)]
        two = [codec.to_tree(2), codec.to_tree(0)]
        assert codec.to_tree({2: 0, 1: 0}) == [codec.MAP, [one, two]]
        swapped = rlp.encode([codec.MAP, [two, one]])
        assert codec.decode(swapped) == {1: 0, 2: 0}
        with pytest.raises(DecodeError):
            codec.decode_canonical(swapped)


class TestCommitment:
    def test_independent_of_insertion_order(self):
        assert codec.commitment_for({"a": 1, "b": 2}) == codec.commitment_for({"b": 2, "a": 1})

    def test_matches_incremental_world_state(self):
        state = WorldState()
        state.set(("k", 1), "one")
        state.set(("k", 2), "two")
        state.set(("k", 1), "uno")
        state.delete(("k", 2))
        assert state.commitment == codec.commitment_for({("k", 1): "uno"})

    def test_empty_state(self):
        assert WorldState().commitment == codec.commitment_of(0)

    def test_pairs_sorted_by_encoded_key(self):
        items = codec.pairs({b"\x02": 1, b"\x01": 2})
        assert [k for k, _ in items] == [b"\x01", b"\x02"]
