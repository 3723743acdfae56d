import struct

import numpy as np
import pytest

from rnnqe import gradcheck
from rnnqe.corpus import TaggedSentence
from rnnqe.numeric import Rng
from rnnqe.serialize import (MAGIC, ModelDimensionError, ModelFormatError, ModelTruncatedError, ModelVersionError,
                             load_model, read_model, save_model, write_model)
from rnnqe.tagger import predict

# offset of the u32 hidden size: magic, version, four u8 flags, window, embed_dim
HIDDEN_OFFSET = 4 + 2 + 4 + 4 + 4


def random_sentences(n, seed, bilingual):
    rng = Rng(seed)
    tgt = ["a", "b", "c", "d", "unseen"]
    src = ["w", "x", "y", "z", "NULL", "other"]
    out = []
    for _ in range(n):
        length = 1 + int(rng.uniform(1)[0] * 12)
        t = [tgt[int(u * len(tgt))] for u in rng.uniform(length)]
        s = [src[int(u * len(src))] for u in rng.uniform(length)] if bilingual else None
        out.append(TaggedSentence(t, s))
    return out


@pytest.mark.parametrize("cell", ["lstm", "deep-lstm", "gru"])
@pytest.mark.parametrize("bilingual,sublabels", [(False, False), (True, True)])
def test_round_trip_bytes_and_predictions(cell, bilingual, sublabels):
    m = gradcheck.toy_model(cell, bilingual, sublabels, seed=9, gain=3.0)
    blob = save_model(m)
    again = load_model(blob)
    assert save_model(again) == blob
    assert again.config == m.config and again.target_vocab == m.target_vocab
    for s in random_sentences(100, 4, bilingual):
        assert predict(again, s) == predict(m, s)


def test_file_helpers(tmp_path):
    m = gradcheck.toy_model("gru")
    write_model(m, tmp_path / "m.qetm")
    assert (tmp_path / "m.qetm").read_bytes()[:4] == MAGIC
    assert np.array_equal(read_model(tmp_path / "m.qetm").flat(), m.flat())


def test_hidden2_survives():
    m = gradcheck.toy_model("deep-lstm")
    m.config.hidden2 = None
    again = load_model(save_model(m))
    assert again.config.hidden2 is None


def test_bad_magic():
    blob = save_model(gradcheck.toy_model("lstm"))
    with pytest.raises(ModelVersionError):
        load_model(b"XXXX" + blob[4:])


def test_unknown_version():
    blob = save_model(gradcheck.toy_model("lstm"))
    with pytest.raises(ModelVersionError, match="version 7"):
        load_model(blob[:4] + struct.pack("<H", 7) + blob[6:])


@pytest.mark.parametrize("cut", [3, 20, 100, -1])
def test_truncated(cut):
    blob = save_model(gradcheck.toy_model("lstm"))
    with pytest.raises(ModelTruncatedError):
        load_model(blob[:cut])


def test_dimension_mismatch():
    blob = save_model(gradcheck.toy_model("lstm", hidden=3))
    patched = blob[:HIDDEN_OFFSET] + struct.pack("<I", 4) + blob[HIDDEN_OFFSET + 4:]
    with pytest.raises(ModelDimensionError, match="shape"):
        load_model(patched)


def test_trailing_bytes():
    blob = save_model(gradcheck.toy_model("gru"))
    with pytest.raises(ModelFormatError, match="trailing"):
        load_model(blob + b"\0")
