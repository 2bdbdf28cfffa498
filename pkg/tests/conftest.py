import sys
from pathlib import Path

import pytest
import torch

sys.path.insert(0, str(Path(__file__).parent))

from pihot import config, synthdata  # noqa: E402

torch.set_num_threads(1)


@pytest.fixture
def small_cfg():
    return config.load_config(overrides={
        "model.channels": 8, "model.downsample": 4, "model.num_classes": 5,
        "synth.num_classes": 5, "synth.height": 32, "synth.width": 32,
        "train.batch_size": 2, "train.lr": 1e-3, "train.steps": 3,
    })


@pytest.fixture
def small_dataset(tmp_path, small_cfg):
    root = tmp_path / "data"
    synthdata.generate(root, seed=3, count=4, **synthdata.synth_params(small_cfg))
    return root


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n): acceptance criterion number")
    config._criteria = {}


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for the acceptance criterion under test."""
    marker = request.node.get_closest_marker("acceptance")
    number = marker.args[0]
    store = request.config._criteria

    def record(ok, detail):
        store[number] = (bool(ok), request.node.name, detail)
        assert ok, detail

    yield record
    if number not in store:
        store[number] = (False, request.node.name, "did not complete")


def pytest_terminal_summary(terminalreporter, config):
    results = getattr(config, "_criteria", {})
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        ok, name, detail = results[number]
        terminalreporter.write_line(f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {name}: {detail}")
