import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from helpers import make_corpus  # noqa: E402

from anemiascreen.modeling import build_model, save_checkpoint  # noqa: E402


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory) -> Path:
    return make_corpus(tmp_path_factory.mktemp("corpus"), per_class=8)


@pytest.fixture(scope="session")
def b0_checkpoint(tmp_path_factory) -> Path:
    """A small untrained checkpoint; enough for service/report plumbing tests."""
    torch.manual_seed(0)
    bundle = build_model("b0")
    path = tmp_path_factory.mktemp("ckpt") / "model.pt"
    save_checkpoint(bundle, path, val_acc=0.5, epoch=0)
    return path
