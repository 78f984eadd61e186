# -*- coding: utf-8 -*-
"""
不变量校验套件测试
"""

import pytest

from pipelines.emgttl.evaluation import verify


def _failures(results):
    return [f"{r.suite}/{r.name}: {r.detail}" for r in results if not r.passed]


class TestSuites:
    def test_gradcheck_suite(self):
        results = verify.run_gradcheck_suite(trials=2)
        assert {r.name for r in results} >= {"tiny_model"}
        assert not _failures(results)

    def test_tiny_model_every_tensor(self):
        checks = verify.model_gradcheck()
        assert len(checks) == len(verify.EMGTTLModel.initialize(verify.TINY_CONFIG).parameters())
        assert all(c.passed for c in checks), [(c.name, c.max_rel_error) for c in checks if not c.passed]

    def test_mulaw_suite(self):
        assert not _failures(verify.run_mulaw_suite())

    def test_segmentation_suite(self):
        results = verify.run_segmentation_suite(cases=200)
        assert [r.name for r in results] == ["count_formula", "reference_geometries", "coverage"]
        assert not _failures(results)

    @pytest.mark.slow
    def test_dsp_suite(self):
        assert not _failures(verify.run_dsp_suite())

    def test_naive_count_agrees_on_edges(self):
        assert verify.naive_segment_count(10, 10, 3) == 1
        assert verify.naive_segment_count(9, 10, 3) == 0

    def test_unknown_suite(self):
        with pytest.raises(ValueError, match="Unknown verify suite"):
            verify.run_suites(["fuzz"])

    def test_exception_counts_as_failure(self):
        def boom():
            raise RuntimeError("kaput")

        result = verify._check("unit", "boom", boom)
        assert not result.passed
        assert "kaput" in result.detail
