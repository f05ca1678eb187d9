import json
from pathlib import Path

import pytest

from promptweight.tokenizer import Vocabulary, default_vocabulary

DATA_DIR = Path(__file__).parent / "data"
POEM_DIR = DATA_DIR / "poems"


def load_poem(name: str) -> str:
    return (POEM_DIR / name).read_text(encoding="utf-8").rstrip("\n")


@pytest.fixture(scope="session")
def vocab() -> Vocabulary:
    return default_vocabulary()


@pytest.fixture(scope="session")
def tokenizer_oracle() -> list[dict]:
    return json.loads((DATA_DIR / "tokenizer_oracle.json").read_text(encoding="utf-8"))["entries"]


@pytest.fixture()
def tiny_vocab() -> Vocabulary:
    # enough structure for chunking: markers plus room for arbitrary ids
    return Vocabulary(
        token_to_id={"<|startoftext|>": 0, "<|endoftext|>": 1},
        merge_ranks={},
        bos_id=0,
        eos_id=1,
    )
