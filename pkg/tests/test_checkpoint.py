import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import make_set
from fedfuse import checkpoint
from fedfuse.errors import CheckpointFormatError


@given(st.dictionaries(st.text("abcxyz._", min_size=1, max_size=6),
                       hnp.arrays(np.float32, hnp.array_shapes(max_dims=3, max_side=4),
                                  elements=st.floats(width=32, allow_nan=False)),
                       min_size=1, max_size=4),
       st.text(max_size=10))
def test_roundtrip_is_exact(arrays, base_id):
    s = make_set(arrays, base_id=base_id)
    blob = checkpoint.dumps(s)
    assert checkpoint.loads(blob).equals(s)
    assert checkpoint.dumps(checkpoint.loads(blob)) == blob


def test_layout(tmp_path):
    s = make_set({"b": [1.0, 2.0], "a": [[0.5]]}, base_id="P", arch_hash="h")
    blob = checkpoint.dumps(s)
    assert blob[:4] == b"FEDF"
    assert int.from_bytes(blob[4:6], "little") == 1
    n = int.from_bytes(blob[6:10], "little")
    assert blob[10:10 + n] == (b'{"arch_hash":"h","base_id":"P","tensors":'
                               b'[{"name":"a","shape":[1,1]},{"name":"b","shape":[2]}]}')
    assert np.frombuffer(blob[10 + n:], "<f4").tolist() == [0.5, 1.0, 2.0]
    path = checkpoint.save(s, tmp_path / "x" / "m.ckpt")
    assert path.read_bytes() == blob and checkpoint.load(path).equals(s)


@pytest.mark.parametrize("mutate", [
    lambda b: b"XXXX" + b[4:],
    lambda b: b[:4] + (2).to_bytes(2, "little") + b[6:],
    lambda b: b[:-1],
    lambda b: b + b"\0",
    lambda b: b[:12],
])
def test_corruption_detected(mutate):
    blob = checkpoint.dumps(make_set({"w": [1.0, 2.0, 3.0]}))
    with pytest.raises(CheckpointFormatError):
        checkpoint.loads(mutate(blob))
