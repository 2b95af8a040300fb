import numpy as np
import pytest

from fedfuse.data.corpus import NOT, OFF, CanonicalDataset, LabeledInstance
from fedfuse.model import ModelArchitecture
from fedfuse.tensor import ParameterSet

TINY = ModelArchitecture(vocab_size=64, embed_dim=8, num_heads=2, num_encoder_layers=1, max_seq_len=12, ffn_dim=16)


def make_set(arrays, base_id="P", arch_hash="h"):
    return ParameterSet(arrays, base_id, arch_hash)


def toy_dataset(name="toy", n_train=80, n_test=20, seed=0):
    """Separable toy corpus: OFF rows contain 'bad', NOT rows contain 'good'."""
    rng = np.random.default_rng(seed)
    filler = ["the", "a", "day", "cat", "went", "home", "now", "very"]

    def rows(n, split):
        out = []
        for i in range(n):
            label = OFF if i % 3 == 0 else NOT
            words = list(rng.choice(filler, size=4)) + ["bad" if label == OFF else "good"]
            rng.shuffle(words)
            out.append(LabeledInstance(f"{name}-{split}-{i}", " ".join(words), label, name))
        return tuple(out)

    return CanonicalDataset(name, rows(n_train, "train"), rows(n_test, "test"))


@pytest.fixture
def tiny_arch():
    return TINY


# -- acceptance summary ---------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record_criterion(number: int, passed: bool, detail: str) -> None:
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}")
