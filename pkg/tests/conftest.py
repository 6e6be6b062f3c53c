import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from poisonlab.attack import bundled_lexicon

DATA_DIR = Path(__file__).parent.parent / "src" / "poisonlab" / "data"


@pytest.fixture(scope="session")
def lexicon():
    return bundled_lexicon()


@pytest.fixture(scope="session")
def demo_corpus_path() -> Path:
    return DATA_DIR / "demo_corpus.csv"


@pytest.fixture(scope="session")
def demo_config_path() -> Path:
    return DATA_DIR / "demo_config.json"
