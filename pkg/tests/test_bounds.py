"""Bound calculators: frozen values, a high-precision independent oracle,
delegation identities, catalog entries, and monotonicity properties."""

import csv
import io
import json
import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

from algotune.bounds import (
    HIDDEN_CONSTANT_NOTE,
    BoundReport,
    PfaffianParams,
    bound_report,
    family_params,
    generalization_gap,
    pdim_comparison,
    pdim_for_family,
    pdim_partition,
    pdim_pfaffian_gj,
    pdim_piecewise,
    sample_complexity,
)
from algotune.instances import ValidationError

getcontext().prec = 60


def dlog2(x):
    return Decimal(x).ln() / Decimal(2).ln()


def gj_oracle(d, q, M, delta, K):
    """Same formula, evaluated entirely in 60-digit decimal arithmetic."""
    total = Decimal(d * d * q * q)
    if d * q > 0:
        total += 2 * d * q * dlog2(delta + M) + 4 * d * q * dlog2(d)
    if d > 0:
        total += 2 * d * dlog2(delta * K) + 16 * d
    return float(total)


def partition_oracle(d, q, M, delta, n_regions):
    total = Decimal(q * q * d * d)
    if q * d > 0:
        total += q * d * dlog2(delta + M) + q * d * dlog2(d)
    total += dlog2(n_regions)
    return float(total)


def comparison_oracle(d, q, M, delta, k_g):
    B = Decimal(d * d * q * q) + d
    if d * q > 0:
        B += d * q * dlog2(delta + M) + d * q * dlog2(d)
    return float(B * (B.ln() / Decimal(2).ln() + dlog2(k_g)))


class TestPfaffianGJ:
    def test_frozen_values(self):
        assert pdim_pfaffian_gj(1, 0, 0, 1, 2) == 18.0
        assert pdim_pfaffian_gj(1, 0, 0, 1, 1) == 16.0
        v = pdim_pfaffian_gj(2, 1, 1, 2, 3)
        assert v == pytest.approx(4 + 4 * math.log2(3) + 8 + 4 * math.log2(6) + 32)
        assert v == pytest.approx(60.68, abs=0.01)
        assert v == pytest.approx(gj_oracle(2, 1, 1, 2, 3), rel=1e-12)

    def test_log_d_term_vanishes_at_d1(self):
        # only the (delta + M) log should remain in the dq block
        v = pdim_pfaffian_gj(1, 3, 1, 1, 1)
        assert v == pytest.approx(9 + 6 * math.log2(2) + 0 + 0 + 16)

    def test_matches_decimal_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(400):
            d = int(rng.integers(0, 7))
            q = int(rng.integers(0, 7))
            M = int(rng.integers(0, 9))
            delta = int(rng.integers(1, 9))
            K = int(rng.integers(1, 10))
            assert pdim_pfaffian_gj(d, q, M, delta, K) == pytest.approx(
                gj_oracle(d, q, M, delta, K), rel=1e-12, abs=1e-12
            )

    def test_rejects_log_of_nonpositive(self):
        with pytest.raises(ValidationError):
            pdim_pfaffian_gj(1, 1, 0, 0, 2)  # delta + M = 0
        with pytest.raises(ValidationError):
            pdim_pfaffian_gj(1, 1, 1, 0, 5)  # delta * K = 0
        with pytest.raises(ValidationError):
            pdim_pfaffian_gj(1, 1, 1, 1, 0)  # delta * K = 0 via K

    def test_rejects_bad_types_and_negatives(self):
        with pytest.raises(ValidationError):
            pdim_pfaffian_gj(-1, 1, 1, 1, 1)
        with pytest.raises(ValidationError):
            pdim_pfaffian_gj(1.5, 1, 1, 1, 1)
        with pytest.raises(ValidationError):
            pdim_pfaffian_gj(True, 1, 1, 1, 1)

    def test_monotone_in_every_argument(self):
        rng = np.random.default_rng(11)
        for _ in range(300):
            base = [
                int(rng.integers(0, 6)),  # d
                int(rng.integers(0, 6)),  # q
                int(rng.integers(0, 8)),  # M
                int(rng.integers(1, 8)),  # delta
                int(rng.integers(1, 9)),  # K
            ]
            v0 = pdim_pfaffian_gj(*base)
            for i in range(5):
                bumped = list(base)
                bumped[i] += int(rng.integers(1, 5))
                assert pdim_pfaffian_gj(*bumped) >= v0 - 1e-12


class TestPiecewise:
    def test_delegates_exactly(self):
        assert pdim_piecewise(3, 2, 1, 1, 1, 1) == pdim_pfaffian_gj(3, 2, 1, 1, 2)

    def test_identity_over_random_tuples(self):
        rng = np.random.default_rng(3)
        for _ in range(2000):
            d = int(rng.integers(0, 8))
            q = int(rng.integers(0, 8))
            M = int(rng.integers(0, 10))
            delta = int(rng.integers(1, 10))
            k_f = int(rng.integers(0, 40))
            k_g = int(rng.integers(1, 40))
            assert pdim_piecewise(d, q, M, delta, k_f, k_g) == pdim_pfaffian_gj(
                d, q, M, delta, k_f + k_g
            )

    def test_monotone_in_boundary_count(self):
        lo = pdim_piecewise(2, 3, 1, 1, 4, 10)
        hi = pdim_piecewise(2, 3, 1, 1, 4, 11)
        assert hi > lo

    def test_big_integer_counts(self):
        v = pdim_piecewise(2, 4, 1, 1, 3, 2**400)
        # 2d log2(delta*(k_f + k_g)) with k_g = 2^400 dominates the log term
        assert v == pytest.approx(gj_oracle(2, 4, 1, 1, 3 + 2**400), rel=1e-9)
        assert v > 4 * 400  # the log alone contributes 2*d*400
        assert pdim_piecewise(2, 4, 1, 1, 3, 2**401) > v


class TestPartition:
    def test_zero_case(self):
        assert pdim_partition(1, 0, 0, 1, 1) == 0.0

    def test_doubling_regions_adds_one(self):
        for k in (1, 3, 17, 2**50):
            lo = pdim_partition(2, 3, 2, 1, k)
            hi = pdim_partition(2, 3, 2, 1, 2 * k)
            assert hi - lo == pytest.approx(1.0, rel=1e-12)

    def test_surrogate_grid_identification(self):
        # m = 10 samples, unit parameter range split into 1/eps = 10 cells
        m = 10
        v = pdim_partition(1, m, m, m, 10)
        assert v == pytest.approx(100 + 10 * math.log2(20) + math.log2(10), rel=1e-12)
        assert v == pytest.approx(146.5, abs=0.1)
        assert v == pytest.approx(partition_oracle(1, m, m, m, 10), rel=1e-12)

    def test_rejects_empty_partition(self):
        with pytest.raises(ValidationError):
            pdim_partition(1, 1, 1, 1, 0)
        with pytest.raises(ValidationError):
            pdim_partition(1, 1, 1, 1, -3)

    def test_monotone_in_every_argument(self):
        rng = np.random.default_rng(13)
        for _ in range(300):
            base = [
                int(rng.integers(0, 6)),
                int(rng.integers(0, 6)),
                int(rng.integers(0, 8)),
                int(rng.integers(1, 8)),
                int(rng.integers(1, 50)),
            ]
            v0 = pdim_partition(*base)
            for i in range(5):
                bumped = list(base)
                bumped[i] += int(rng.integers(1, 5))
                assert pdim_partition(*bumped) >= v0 - 1e-12


class TestComparison:
    def test_matches_decimal_oracle(self):
        rng = np.random.default_rng(19)
        for _ in range(200):
            d = int(rng.integers(1, 6))
            q = int(rng.integers(0, 6))
            M = int(rng.integers(0, 8))
            delta = int(rng.integers(1, 8))
            k_g = int(rng.integers(1, 100))
            assert pdim_comparison(d, q, M, delta, k_g) == pytest.approx(
                comparison_oracle(d, q, M, delta, k_g), rel=1e-12
            )

    def test_gj_route_is_sharper_at_family_scales(self):
        for fam, n, L in [("H1", 6, 1), ("H2", 6, 1), ("H3", 6, 3), ("G", 8, 1)]:
            p = family_params(fam, n, L)
            gj = pdim_piecewise(p.d, p.q, p.M, p.delta, p.k_f, p.k_g)
            alt = pdim_comparison(p.d, p.q, p.M, p.delta, p.k_g)
            assert 0 < gj < alt

    def test_rejects_degenerate_inputs(self):
        with pytest.raises(ValidationError):
            pdim_comparison(0, 1, 1, 1, 1)  # B would lose positivity
        with pytest.raises(ValidationError):
            pdim_comparison(1, 1, 1, 1, 0)


class TestFamilyCatalog:
    def test_h1_tuple(self):
        p = family_params("H1", 3, 1)
        assert p.as_tuple() == (4, 6561, 27, 2, 1, 2)
        assert p.flags == ()
        assert p.K == 4 + 6561

    def test_h2_tuple_and_flag(self):
        p = family_params("H2", 3, 1)
        assert p.as_tuple() == (4, 2**12, 27, 2, 1, 2)
        assert any("2^(4n)" in f for f in p.flags)

    def test_h3_tuple(self):
        p = family_params("H3", 2, 2)
        assert p.as_tuple() == (3, 256, 4, 1, 1, 2)
        assert p.flags == ()

    def test_g_tuple_default_split_and_flag(self):
        p = family_params("G", 4)
        assert p.as_tuple() == (3, 3, 17, 5, 2, 2)
        assert any("inferred" in f for f in p.flags)

    def test_g_explicit_unlabeled_count(self):
        p = family_params("G", 10, L=2, n_unlabeled=7)
        assert p.as_tuple() == (8, 8, 101, 5, 7, 3)
        with pytest.raises(ValidationError):
            family_params("G", 10, n_unlabeled=10)

    def test_k_is_piece_plus_boundary(self):
        for fam in ("H1", "H2", "H3", "G"):
            p = family_params(fam, 5, 2)
            assert p.K == p.k_f + p.k_g

    def test_rejects_bad_arguments(self):
        with pytest.raises(ValidationError):
            family_params("H4", 3, 1)
        with pytest.raises(ValidationError):
            family_params("H1", 1, 1)
        with pytest.raises(ValidationError):
            family_params("H1", 3, 0)

    def test_params_validate_fields(self):
        with pytest.raises(ValidationError):
            PfaffianParams(d=-1, q=1, M=1, delta=1, k_f=1, k_g=1)


class TestGapAndSampleComplexity:
    def test_frozen_gap_value(self):
        v = generalization_gap(20, 1.0, 10**4, 0.05)
        want = (Decimal(20) + (1 / Decimal("0.05")).ln()) / Decimal(10**4)
        assert v == pytest.approx(float(want.sqrt()), rel=1e-12)
        assert v == pytest.approx(0.0480, abs=5e-4)

    def test_quadrupling_halves(self):
        for N in (1, 10, 400):
            g1 = generalization_gap(12.5, 2.0, N, 0.1)
            g4 = generalization_gap(12.5, 2.0, 4 * N, 0.1)
            assert g1 / g4 == pytest.approx(2.0, rel=1e-12)

    def test_round_trip(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            pdim = float(rng.uniform(0, 300))
            H = float(rng.uniform(0.1, 5))
            eps = float(rng.uniform(0.01, 1))
            delta = float(rng.uniform(0.001, 0.999))
            N = sample_complexity(pdim, H, eps, delta)
            assert isinstance(N, int) and N >= 1
            assert generalization_gap(pdim, H, N, delta) <= eps * (1 + 1e-12)
            if N >= 2:
                assert generalization_gap(pdim, H, N - 1, delta) > eps * (1 - 1e-9)

    def test_rejects_bad_confidence_and_scales(self):
        for bad in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(ValidationError):
                generalization_gap(10, 1.0, 100, bad)
            with pytest.raises(ValidationError):
                sample_complexity(10, 1.0, 0.1, bad)
        with pytest.raises(ValidationError):
            generalization_gap(10, 0.0, 100, 0.05)
        with pytest.raises(ValidationError):
            generalization_gap(10, 1.0, 0, 0.05)
        with pytest.raises(ValidationError):
            generalization_gap(-1, 1.0, 100, 0.05)
        with pytest.raises(ValidationError):
            sample_complexity(10, 1.0, 0.0, 0.05)


class TestReports:
    def test_json_round_trip(self):
        rep = bound_report("pfaffian_gj", d=1, q=0, M=0, delta=1, K=2)
        data = json.loads(rep.to_json())
        assert data["formula_name"] == "pfaffian_gj"
        assert data["pdim_bound"] == 18.0
        assert data["log_base"] == 2
        assert data["note"] == ""
        assert data["input_K"] == 2

    def test_csv_round_trip(self):
        rep = bound_report("partition", d=1, q=10, M=10, delta=10, n_regions=10)
        rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
        assert len(rows) == 1
        assert rows[0]["formula_name"] == "partition"
        assert float(rows[0]["pdim_bound"]) == pytest.approx(rep.pdim_bound)
        assert rows[0]["note"] == HIDDEN_CONSTANT_NOTE

    def test_hidden_constant_note_only_where_applicable(self):
        assert bound_report("pfaffian_gj", d=1, q=0, M=0, delta=1, K=1).note == ""
        assert bound_report("piecewise", d=1, q=0, M=0, delta=1, k_f=1, k_g=1).note == ""
        assert bound_report("comparison", d=1, q=1, M=1, delta=1, k_g=2).note == HIDDEN_CONSTANT_NOTE

    def test_rejects_unknown_formula_and_wrong_args(self):
        with pytest.raises(ValidationError):
            bound_report("warren", d=1)
        with pytest.raises(ValidationError):
            bound_report("pfaffian_gj", d=1, q=0, M=0, delta=1)  # missing K
        with pytest.raises(ValidationError):
            bound_report("pfaffian_gj", d=1, q=0, M=0, delta=1, K=1, extra=3)

    def test_negative_bound_rejected(self):
        with pytest.raises(ValidationError):
            BoundReport(formula_name="x", pdim_bound=-0.5)

    def test_family_report(self):
        rep = pdim_for_family("H1", 3, 1)
        assert rep.formula_name == "pdim_piecewise"
        assert rep.inputs["k_g"] == 6561
        assert rep.pdim_bound == pytest.approx(
            pdim_piecewise(2, 27, 2, 1, 4, 6561), rel=1e-15
        )
        assert rep.note == ""
        rep2 = pdim_for_family("H2", 3, 1)
        assert "2^(4n)" in rep2.note
        rep3 = pdim_for_family("G", 4)
        assert rep3.inputs["n_unlabeled"] == 2
        json.loads(rep3.to_json())  # big ints serialize
