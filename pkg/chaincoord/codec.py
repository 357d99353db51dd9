"""
Canonical byte encoding shared by hashing, contract payloads and archive blobs.

Values are lowered to an RLP tree in which every node is a list headed by a one-byte
tag. Integers are a sign flag plus minimal big-endian magnitude, sets and dicts are
ordered by the RLP bytes of their members, dataclasses carry their registered name and
their fields in declaration order. `decode` is strict about the tree it reads; callers
that need tamper detection use `decode_canonical`, which also rejects member orderings
that `encode` would never produce.
"""

import hashlib
from dataclasses import fields, is_dataclass
from enum import Enum
from typing import Any, Dict, Sequence, Tuple, Type

from ethereum_rlp import rlp
from ethereum_rlp.exceptions import RLPException

DIGEST_SIZE = 32
COMMITMENT_MODULUS = 1 << 256

NONE = b"\x00"
BOOL = b"\x01"
INT = b"\x02"
BYTES = b"\x03"
STR = b"\x04"
SEQ = b"\x05"
MAP = b"\x06"
SET = b"\x07"
RECORD = b"\x08"
ENUM = b"\x09"

_FLAG = (b"", b"\x01")

_TYPES: Dict[str, Type] = {}


class DecodeError(ValueError):
    pass


def register(cls):
    """Class decorator making a dataclass or Enum decodable by name"""
    _TYPES[cls.__name__] = cls
    return cls


def digest(data: bytes) -> bytes:
    return hashlib.sha3_256(data).digest()


def _minimal(n: int) -> bytes:
    return n.to_bytes((n.bit_length() + 7) // 8, "big")


def _ordered(nodes) -> list:
    return sorted(nodes, key=rlp.encode)


def to_tree(value: Any) -> list:
    """Lower a value to the tagged RLP tree that `encode` serializes"""
    if value is None:
        return [NONE]
    if isinstance(value, bool):
        return [BOOL, _FLAG[value]]
    if isinstance(value, Enum):
        return [ENUM, type(value).__name__.encode("utf-8"), to_tree(value.value)]
    if isinstance(value, int):
        return [INT, _FLAG[value < 0], _minimal(abs(value))]
    if isinstance(value, (bytes, bytearray)):
        return [BYTES, bytes(value)]
    if isinstance(value, str):
        return [STR, value.encode("utf-8")]
    if is_dataclass(value) and not isinstance(value, type):
        members = [to_tree(getattr(value, f.name)) for f in fields(value) if f.compare]
        return [RECORD, type(value).__name__.encode("utf-8"), members]
    if isinstance(value, (tuple, list)):
        return [SEQ, [to_tree(v) for v in value]]
    if isinstance(value, (set, frozenset)):
        return [SET, _ordered(to_tree(v) for v in value)]
    if isinstance(value, dict):
        return [MAP, _ordered([to_tree(k), to_tree(v)] for k, v in value.items())]
    raise TypeError(f"cannot encode {type(value).__name__}")


def encode(value: Any) -> bytes:
    return rlp.encode(to_tree(value))


def _leaf(node) -> bytes:
    if not isinstance(node, bytes):
        raise DecodeError("expected a byte string")
    return node


def _branch(node, size: int = -1) -> Sequence:
    if isinstance(node, bytes) or (size >= 0 and len(node) != size):
        raise DecodeError("malformed node")
    return node


def _flag(node) -> bool:
    raw = _leaf(node)
    if raw not in _FLAG:
        raise DecodeError("bad flag")
    return raw == _FLAG[1]


def _text(node) -> str:
    try:
        return _leaf(node).decode("utf-8")
    except UnicodeDecodeError as e:
        raise DecodeError(str(e)) from e


def _registered(node) -> Type:
    name = _text(node)
    cls = _TYPES.get(name)
    if cls is None:
        raise DecodeError(f"unregistered type {name}")
    return cls


def from_tree(node) -> Any:
    node = _branch(node)
    if not node:
        raise DecodeError("empty node")
    tag = _leaf(node[0])
    if tag == NONE:
        _branch(node, 1)
        return None
    if tag == BOOL:
        return _flag(_branch(node, 2)[1])
    if tag == INT:
        _, sign, raw = _branch(node, 3)
        negative, raw = _flag(sign), _leaf(raw)
        if raw[:1] == b"\x00" or (negative and not raw):
            raise DecodeError("non-canonical integer")
        magnitude = int.from_bytes(raw, "big")
        return -magnitude if negative else magnitude
    if tag == BYTES:
        return _leaf(_branch(node, 2)[1])
    if tag == STR:
        return _text(_branch(node, 2)[1])
    if tag == SEQ:
        return tuple(from_tree(child) for child in _branch(_branch(node, 2)[1]))
    if tag == SET:
        return frozenset(from_tree(child) for child in _branch(_branch(node, 2)[1]))
    if tag == MAP:
        items = {}
        for pair in _branch(_branch(node, 2)[1]):
            key, value = _branch(pair, 2)
            items[from_tree(key)] = from_tree(value)
        return items
    if tag == ENUM:
        _, name, value = _branch(node, 3)
        try:
            return _registered(name)(from_tree(value))
        except ValueError as e:
            raise DecodeError(str(e)) from e
    if tag == RECORD:
        _, name, members = _branch(node, 3)
        cls = _registered(name)
        values = [from_tree(child) for child in _branch(members)]
        try:
            return cls(*values)
        except (TypeError, ValueError) as e:
            raise DecodeError(str(e)) from e
    raise DecodeError(f"unknown tag {tag.hex()}")


def decode(data: bytes) -> Any:
    data = bytes(data)
    try:
        tree = rlp.decode(data)
        # rlp.decode tolerates trailing input and long-form lengths; re-encoding catches both
        if rlp.encode(tree) != data:
            raise DecodeError("trailing bytes or non-minimal length prefix")
        return from_tree(tree)
    except DecodeError:
        raise
    except (RLPException, ValueError, IndexError, RecursionError, TypeError) as e:
        raise DecodeError(str(e) or type(e).__name__) from e


def decode_canonical(data: bytes) -> Any:
    """Decode and reject any input that is not the unique encoding of its value"""
    value = decode(data)
    if encode(value) != bytes(data):
        raise DecodeError("non-canonical encoding")
    return value


def entry_hash(key: Any, value: Any) -> int:
    return int.from_bytes(digest(encode((key, value))), "big")


def commitment_of(accumulator: int) -> bytes:
    return digest(accumulator.to_bytes(DIGEST_SIZE, "big"))


def commitment_for(entries: Dict[Any, Any]) -> bytes:
    acc = 0
    for key, value in entries.items():
        acc = (acc + entry_hash(key, value)) % COMMITMENT_MODULUS
    return commitment_of(acc)


def short(value: bytes, n: int = 8) -> str:
    """Hex prefix for log lines"""
    return value.hex()[:n]


def pairs(items: Dict[Any, Any]) -> Tuple[Tuple[Any, Any], ...]:
    return tuple(sorted(items.items(), key=lambda kv: encode(kv[0])))
