import os
from pathlib import Path

import numpy as np
import pytest

from anovqc.data import BANKNOTE_FILE, MNIST_IMAGES_FILE, MNIST_LABELS_FILE

# acceptance criterion id -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def _data_root() -> Path | None:
    root = os.environ.get("ANO_DATA_DIR")
    return Path(root) if root else None


def _find(root: Path | None, name: str) -> Path | None:
    if root is None:
        return None
    for candidate in (root / name, root / (name + ".gz")):
        if candidate.exists():
            return candidate
    return None


@pytest.fixture(scope="session")
def banknote_dir() -> Path | None:
    """Directory holding the banknote CSV, or None when it is not available."""
    root = _data_root()
    return root if _find(root, BANKNOTE_FILE) else None


@pytest.fixture(scope="session")
def mnist_dir(tmp_path_factory) -> Path:
    """MNIST IDX files: from ANO_DATA_DIR if present, else built from the sample bundled with mlxtend."""
    root = _data_root()
    if _find(root, MNIST_IMAGES_FILE) and _find(root, MNIST_LABELS_FILE):
        return root
    import importlib.util
    import sys

    script = Path(__file__).resolve().parents[1] / "scripts" / "prepare_mnist_from_mlxtend.py"
    spec = importlib.util.spec_from_file_location("prepare_mnist", script)
    module = importlib.util.module_from_spec(spec)
    sys.modules["prepare_mnist"] = module
    spec.loader.exec_module(module)
    out = tmp_path_factory.mktemp("mnist")
    module.build(out)
    return out


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
