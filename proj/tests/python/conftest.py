import os
import pathlib

import pytest


@pytest.fixture(scope="session")
def cora_dir():
    root = os.environ.get("FEDGRAPH_DATA_DIR", str(pathlib.Path(__file__).resolve().parents[2] / "data"))
    path = pathlib.Path(root) / "cora"
    if not (path / "cora.content").exists():
        pytest.skip("Cora files not available")
    return str(path)
