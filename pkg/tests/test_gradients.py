"""Analytic gradients against central differences, module by module."""

import pytest

from breaknet import backend
from breaknet.checks import REGISTRY, run_all


@pytest.fixture
def restore_backend():
    before = backend.active_backend()
    yield
    backend.use(before)


NAMES = [name for name, _ in REGISTRY]


class TestRegistry:
    def test_covers_every_stage(self):
        assert len(REGISTRY) >= 10
        joined = " ".join(NAMES)
        for stage in ("affinity", "edge", "gcn", "kl", "classifier", "model"):
            assert stage in joined

    @pytest.mark.parametrize("name", NAMES)
    def test_passes(self, name):
        builder = dict(REGISTRY)[name]
        report = builder()
        assert report.passed, report.summary()
        assert report.max_rel_error < 1e-4

    def test_run_all_shape(self):
        results = run_all()
        assert [n for n, _ in results] == NAMES
        assert all(r.passed for _, r in results)


class TestBackendIndependence:
    @pytest.mark.parametrize("name", ["denoise-composition", "model-full"])
    def test_plain_numpy_kernels_agree(self, name, restore_backend):
        backend.use("numpy")
        report = dict(REGISTRY)[name]()
        assert report.passed, report.summary()
