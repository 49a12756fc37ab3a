import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from podrank.toydata import write_toy_dataset


@pytest.fixture(scope="session")
def toy_dataset(tmp_path_factory):
    """Paths to the bundled 50-episode toy corpus, generated once."""
    out = tmp_path_factory.mktemp("toy")
    return write_toy_dataset(str(out))
