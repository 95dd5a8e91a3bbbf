"""Multiplier tables, quantization, error metrics, and file formats."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axnas import multipliers as M
from conftest import oracle_trunc_metrics

# Frozen from the exhaustive pure-python oracle (see conftest).
TRUNC2_ORACLE = (7.00483599041577, 93.1640625, 0.5802243076218815, 2.320897230487526)


class TestBuiltins:
    def test_exact_spot_values(self):
        m = M.build_builtin_multiplier("exact")
        assert M.approx_multiply(3, 5, m) == 15
        assert M.approx_multiply(255, 255, m) == 65025
        assert M.approx_multiply(200, 100, m) == 20000

    def test_exact_exhaustive(self):
        m = M.build_builtin_multiplier("exact")
        a = np.arange(256)
        grid_a, grid_b = np.meshgrid(a, a, indexing="ij")
        assert np.array_equal(
            M.approx_multiply(grid_a, grid_b, m), grid_a * grid_b)

    def test_trunc_masks_low_bits(self):
        t2 = M.build_builtin_multiplier("trunc_2")
        assert M.approx_multiply(7, 7, t2) == 16  # 7 -> 4 masked, 4*4
        assert M.approx_multiply(3, 3, t2) == 0

    @pytest.mark.parametrize("k", [1, 2, 3, 4])
    def test_trunc_table_matches_mask_definition(self, k):
        m = M.build_builtin_multiplier(f"trunc_{k}")
        mask = ~((1 << k) - 1) & 0xFF
        a = np.arange(256)
        expected = np.multiply.outer(a & mask, a & mask).reshape(-1)
        assert np.array_equal(m.table, expected)

    def test_builtin_energies(self):
        assert M.build_builtin_multiplier("exact").energy_per_op == 0.391
        for k in range(1, 5):
            m = M.build_builtin_multiplier(f"trunc_{k}")
            assert m.energy_per_op == pytest.approx(0.391 * (1 - 0.05 * k))

    def test_unknown_kind_rejected(self):
        with pytest.raises(M.MultiplierError):
            M.build_builtin_multiplier("trunc_9")
        with pytest.raises(M.MultiplierError):
            M.build_builtin_multiplier("nonsense")

    def test_address_formation(self):
        # a=1, b=2 must read index 258
        table = M.exact_table().copy()
        table[258] = 4242
        m = M.MultiplierSpec("probe", table, 1.0)
        assert M.approx_multiply(1, 2, m) == 4242

    def test_spec_validation(self):
        with pytest.raises(M.MultiplierError):
            M.MultiplierSpec("short", np.zeros(100, dtype=np.uint16), 1.0)
        with pytest.raises(M.MultiplierError):
            M.MultiplierSpec("bad-energy", M.exact_table(), 0.0)


class TestErrorMetrics:
    def test_exact_all_zero(self):
        em = M.compute_error_metrics(M.build_builtin_multiplier("exact"))
        assert em == M.ErrorMetrics(0.0, 0.0, 0.0, 0.0)

    def test_trunc2_matches_exhaustive_oracle(self):
        em = M.compute_error_metrics(M.build_builtin_multiplier("trunc_2"))
        mre, ep, mae, wce = oracle_trunc_metrics(2)
        assert em.mre_pct == pytest.approx(mre, abs=1e-9)
        assert em.ep_pct == pytest.approx(ep, abs=1e-9)
        assert em.mae_pct == pytest.approx(mae, abs=1e-9)
        assert em.wce_pct == pytest.approx(wce, abs=1e-9)

    def test_trunc2_frozen_values(self):
        em = M.compute_error_metrics(M.build_builtin_multiplier("trunc_2"))
        for got, want in zip(
                (em.mre_pct, em.ep_pct, em.mae_pct, em.wce_pct), TRUNC2_ORACLE):
            assert got == pytest.approx(want, abs=1e-9)

    def test_single_entry_perturbation(self):
        table = M.exact_table().copy()
        table[(10 << 8) | 20] += 1
        em = M.compute_error_metrics(M.MultiplierSpec("perturbed", table, 1.0))
        assert em.ep_pct == pytest.approx(100.0 / 65536)
        assert em.wce_pct == pytest.approx(100.0 / 65535)
        assert em.mae_pct <= em.wce_pct

    def test_deterministic(self):
        m = M.build_builtin_multiplier("trunc_3")
        assert M.compute_error_metrics(m) == M.compute_error_metrics(m)

    @pytest.mark.parametrize("k", [1, 3, 4])
    def test_other_truncations_match_oracle(self, k):
        em = M.compute_error_metrics(M.build_builtin_multiplier(f"trunc_{k}"))
        mre, ep, mae, wce = oracle_trunc_metrics(k)
        assert (em.mre_pct, em.ep_pct, em.mae_pct, em.wce_pct) == pytest.approx(
            (mre, ep, mae, wce), abs=1e-9)


class TestFileFormats:
    def test_binary_round_trip_byte_identical(self, tmp_path):
        m = M.build_builtin_multiplier("trunc_2")
        p1 = tmp_path / "t2.axm"
        M.save_multiplier(m, p1)
        loaded = M.load_multiplier(p1, energy_per_op=0.5)
        assert np.array_equal(loaded.table, m.table)
        assert loaded.source is M.MultiplierSource.imported
        p2 = tmp_path / "t2b.axm"
        M.save_multiplier(loaded, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_exact_binary_has_zero_metrics(self, tmp_path):
        p = tmp_path / "exact.axm"
        M.save_multiplier(M.build_builtin_multiplier("exact"), p)
        em = M.compute_error_metrics(M.load_multiplier(p, 0.391))
        assert em == M.ErrorMetrics(0.0, 0.0, 0.0, 0.0)

    def test_truncated_binary_rejected(self, tmp_path):
        p = tmp_path / "short.axm"
        p.write_bytes(M.MAGIC + b"\x00\x00" * 65535)
        with pytest.raises(M.MultiplierError, match="bytes"):
            M.load_multiplier(p, 1.0)

    def test_text_equals_binary(self, tmp_path):
        m = M.build_builtin_multiplier("trunc_1")
        lines = ["# product table"]
        for a in range(256):
            for b in range(256):
                lines.append(f"{a} {b} {int(m.table[(a << 8) | b])}")
        p = tmp_path / "t1.txt"
        p.write_text("\n".join(lines) + "\n")
        loaded = M.load_multiplier(p, 1.0)
        assert np.array_equal(loaded.table, m.table)

    def test_text_errors_report_position(self, tmp_path):
        p = tmp_path / "bad.txt"
        p.write_text("0 0 0\n1 0 70000\n")
        with pytest.raises(M.MultiplierError, match=r"bad.txt:2"):
            M.load_multiplier(p, 1.0)
        p.write_text("0 0 0\n0 0 1\n")
        with pytest.raises(M.MultiplierError, match="duplicate"):
            M.load_multiplier(p, 1.0)
        p.write_text("0 0 0\n")
        with pytest.raises(M.MultiplierError, match="missing pair"):
            M.load_multiplier(p, 1.0)

    def test_published_table_if_available(self, tmp_path):
        # Optional import check for an externally supplied mul8u_NGR table
        # (binary or text), pointed to by AXNAS_EVOAPPROX_NGR.
        import os
        path = os.environ.get("AXNAS_EVOAPPROX_NGR")
        if not path:
            pytest.skip("no external mul8u_NGR table supplied")
        em = M.compute_error_metrics(M.load_multiplier(path, 0.276))
        ref = M.PUBLISHED_MULTIPLIERS["mul8u_NGR"]
        assert em.mre_pct == pytest.approx(ref["mre"], abs=0.01)
        assert em.ep_pct == pytest.approx(ref["ep"], abs=0.01)
        assert em.mae_pct == pytest.approx(ref["mae"], abs=0.01)
        assert em.wce_pct == pytest.approx(ref["wce"], abs=0.01)


class TestQuantization:
    def test_calibrate_unit_scale(self):
        q = M.calibrate([0.0, 255.0])
        assert q.scale == pytest.approx(1.0)
        assert q.zero_point == 0

    def test_calibrate_symmetric_range(self):
        q = M.calibrate([-1.0, 1.0])
        assert q.scale == pytest.approx(2 / 255)
        assert q.zero_point == 128  # round(127.5) half-away-from-zero

    def test_calibrate_symmetric_unsigned(self):
        q = M.calibrate([0.0, 0.5], M.QuantScheme.symmetric_unsigned)
        assert q.scale == pytest.approx(0.5 / 255)
        assert q.zero_point == 0
        with pytest.raises(ValueError):
            M.calibrate([-0.1, 0.5], M.QuantScheme.symmetric_unsigned)

    def test_calibrate_errors(self):
        with pytest.raises(ValueError):
            M.calibrate([])
        with pytest.raises(ValueError):
            M.calibrate([np.nan, 1.0])

    def test_calibrate_constant_round_trips(self):
        for c in (5.0, -3.0, 0.0):
            q = M.calibrate([c, c])
            assert M.dequantize(M.quantize(c, q), q) == pytest.approx(c, abs=1e-9)

    def test_quantize_basics(self):
        q = M.QuantParams(1.0, 0)
        assert M.quantize(1.0, q) == 1
        assert M.quantize(300.0, q) == 255  # clamp
        assert M.quantize(0.5, q) == 1      # half away from zero
        assert M.dequantize(255, q) == pytest.approx(255.0)
        assert M.dequantize(q.zero_point, q) == 0.0

    def test_quantize_min_hits_zero_code(self, rng):
        vals = rng.normal(size=100)
        q = M.calibrate(vals)
        assert M.quantize(float(vals.min()), q) == 0
        assert M.quantize(float(vals.max()), q) == 255

    def test_params_validation(self):
        with pytest.raises(ValueError):
            M.QuantParams(0.0, 0)
        with pytest.raises(ValueError):
            M.QuantParams(1.0, 300)
        with pytest.raises(ValueError):
            M.QuantParams(1.0, 5, M.QuantScheme.symmetric_unsigned)

    @settings(max_examples=80, deadline=None)
    @given(st.lists(st.floats(-1e4, 1e4), min_size=1, max_size=40),
           st.floats(0.0, 1.0))
    def test_round_trip_within_half_step(self, values, frac):
        q = M.calibrate(values)
        lo, hi = min(values), max(values)
        x = lo + frac * (hi - lo)
        err = abs(M.dequantize(M.quantize(x, q), q) - x)
        assert err <= q.scale / 2 + 1e-12

    def test_calibration_range_extended_to_zero(self):
        # all-positive tensors must not saturate: zero stays representable
        q = M.calibrate([10.0, 11.0])
        assert q.zero_point == 0
        assert q.scale == pytest.approx(11.0 / 255)
        assert M.dequantize(M.quantize(10.0, q), q) == pytest.approx(10.0, abs=q.scale / 2)
        q = M.calibrate([-11.0, -10.0])
        assert q.zero_point == 255
        assert M.dequantize(M.quantize(-10.5, q), q) == pytest.approx(-10.5, abs=q.scale / 2)
