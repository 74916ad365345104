"""Self-describing binary checkpoints.

Layout (all integers little-endian)::

    b"ADNERCK1"
    u32 metadata length, UTF-8 metadata (model config, vocab, tag index)
    u32 tensor count
    per tensor: u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
                float32 data
    u32 CRC32 of every preceding byte
"""

from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .corpus import Vocab
from .errors import BadMagic, CheckpointError, ChecksumMismatch, InvalidConfig, ShapeMismatch
from .model import ModelConfig, ModelParams, init_model

MAGIC = b"ADNERCK1"


@dataclass
class Checkpoint:
    params: ModelParams
    model_config: ModelConfig
    vocab: Vocab
    tag_index: dict


def _metadata(model_config, vocab, tag_index):
    lines = ["[model]"]
    lines += [f"{k} = {v}" for k, v in model_config.to_dict().items()]
    lines += ["[vocab]", f"min_freq = {vocab.min_freq}"]
    lines += [f"{tok}\t{i}" for tok, i in sorted(vocab.token_to_id.items(), key=lambda kv: kv[1])]
    lines += ["[tags]"]
    lines += [f"{tag}\t{i}" for tag, i in sorted(tag_index.items(), key=lambda kv: kv[1])]
    return "\n".join(lines) + "\n"


def _parse_metadata(text):
    section = None
    model, tokens, tags, min_freq = {}, {}, {}, 1
    for line in text.split("\n"):
        if line in ("[model]", "[vocab]", "[tags]"):
            section = line
        elif not line:
            continue
        elif section == "[model]":
            k, v = line.split(" = ")
            model[k] = v
        elif section == "[vocab]" and "\t" not in line:
            min_freq = int(line.split(" = ")[1])
        elif section == "[vocab]":
            tok, i = line.rsplit("\t", 1)
            tokens[tok] = int(i)
        elif section == "[tags]":
            tag, i = line.split("\t")
            tags[tag] = int(i)
        else:
            raise ValueError(f"unexpected metadata line {line!r}")
    return ModelConfig.from_dict(model), Vocab(tokens, min_freq), tags


def dumps(params: ModelParams, model_config, vocab, tag_index) -> bytes:
    meta = _metadata(model_config, vocab, tag_index).encode("utf-8")
    out = [MAGIC, struct.pack("<I", len(meta)), meta]
    named = list(params.named())
    out.append(struct.pack("<I", len(named)))
    for name, t in named:
        raw = name.encode("utf-8")
        out.append(struct.pack("<H", len(raw)) + raw)
        out.append(struct.pack("<B", t.data.ndim) + struct.pack(f"<{t.data.ndim}I", *t.shape))
        out.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


def loads(blob: bytes) -> Checkpoint:
    if len(blob) < len(MAGIC) or blob[:len(MAGIC)] != MAGIC:
        raise BadMagic("not a checkpoint (bad magic)")
    if len(blob) < len(MAGIC) + 4 or zlib.crc32(blob[:-4]) != struct.unpack("<I", blob[-4:])[0]:
        raise ChecksumMismatch("checkpoint CRC32 mismatch (truncated or corrupted)")
    body = memoryview(blob)[:-4]
    pos = len(MAGIC)

    def take(n):
        nonlocal pos
        if pos + n > len(body):
            raise CheckpointError("checkpoint ends early")
        chunk = body[pos:pos + n]
        pos += n
        return chunk

    try:
        (meta_len,) = struct.unpack("<I", take(4))
        model_config, vocab, tag_index = _parse_metadata(bytes(take(meta_len)).decode("utf-8"))
        (count,) = struct.unpack("<I", take(4))
        tensors = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", take(2))
            name = bytes(take(name_len)).decode("utf-8")
            (rank,) = struct.unpack("<B", take(1))
            dims = struct.unpack(f"<{rank}I", take(4 * rank))
            n = int(np.prod(dims, dtype=np.int64))
            tensors[name] = np.frombuffer(take(4 * n), dtype="<f4").reshape(dims).astype(np.float32)
    except (struct.error, UnicodeDecodeError, ValueError, TypeError) as e:
        raise CheckpointError(f"malformed checkpoint: {e}") from e
    if pos != len(body):
        raise CheckpointError("trailing bytes after last tensor")

    try:
        params = init_model(model_config, 0)
    except InvalidConfig as e:
        raise CheckpointError(f"embedded model config is invalid: {e}") from e
    expected = dict(params.named())
    if set(expected) != set(tensors):
        raise ShapeMismatch("tensor names do not match the embedded model config")
    for name, t in expected.items():
        if t.shape != tensors[name].shape:
            raise ShapeMismatch(f"{name}: expected {t.shape}, found {tensors[name].shape}")
        t.data = tensors[name]
    return Checkpoint(params, model_config, vocab, tag_index)


def save_checkpoint(params, model_config, vocab, tag_index, path):
    blob = dumps(params, model_config, vocab, tag_index)
    try:
        with open(path, "wb") as f:
            f.write(blob)
    except OSError as e:
        raise CheckpointError(f"cannot write {path}: {e}") from e


def load_checkpoint(path) -> Checkpoint:
    try:
        with open(path, "rb") as f:
            blob = f.read()
    except OSError as e:
        raise CheckpointError(f"cannot read {path}: {e}") from e
    return loads(blob)

