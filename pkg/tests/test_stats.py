import numpy as np
import pytest

from bronchograph import build_reference, flag_significant, rank_top_k, welch_t_test
from bronchograph.errors import TooFewCases
from bronchograph.signatures import COMPONENTS, DESCRIPTORS, MISSING, SignatureMatrix
from bronchograph.stats import (
    betainc_regularized,
    ranked_features_to_csv,
    signature_feature_table,
)

# Expected values computed with an independent arbitrary-precision
# evaluation of the textbook Welch formulas (40-digit arithmetic).
WELCH_CASES = [
    ([1, 2, 3, 4, 5], [2, 3, 4, 5, 6], -1.0, 8.0, 0.3465935070873343),
    ([-3.1162, -2.0798, 0.2042], [-0.0475, 0.745, -1.4681, 3.1168, 2.8479, 0.9642, 3.7727, 2.0267, -1.4846], -2.4103225365106358, 3.91189751558272, 0.07497105956021273),
    ([-0.1219, -0.4491, 0.8063], [0.1297, -0.5737, -0.378, 1.8942, 1.4655, 1.587, 1.6335], -1.3579978268155208, 6.34944623530511, 0.22073880151027),
    ([1.7979, 3.2952, -0.3326, -2.4522, -2.4065, 1.8989, 2.1694, 1.5853, -1.9425, 0.6776, 0.3406], [-0.2307, 0.6274, -0.2242, 0.3743, -0.4293, -0.1381, 0.3117, -2.4337, -0.9384], 1.1385512279977783, 14.644793272378703, 0.27317349904427696),
    ([-1.664, 1.8609, -3.2342, -0.6436, 0.3128, 1.1266, 1.3669, 1.5247], [-1.8381, -1.9346, -0.813, -1.7044, -2.6256, -2.5046, -2.3229], 3.021783779826466, 8.813215642008782, 0.014782017395864844),
    ([0.1956, 0.772, -0.3817, 0.5637, -0.8168, -0.448, -0.4711, -1.4756, 0.6009, -0.5792], [0.2551, 1.264, 1.1903, 1.6619, 0.0159], -2.780978935261157, 8.236270797229109, 0.02322856760840822),
    ([-2.7455, -2.07, 0.8298, -1.8795, -0.785], [0.1754, -2.1498, -0.6135, -2.9607, -1.9379], 0.19881354289954326, 7.914128718567482, 0.8474210322089384),
    ([1.1975, 0.6553, -1.6378], [-3.5613, -1.0723, -2.0586], 2.036059641751363, 3.873167214181141, 0.11373565000223126),
    ([-2.1169, 0.3708, 0.455, 2.8112, 1.7272, 0.7381, 3.0265, -2.4587], [-0.6547, -1.2169, -0.1647, -2.0993, 1.8444, 0.1638], 1.0224854381092179, 11.88570010633955, 0.32691237889753066),
    ([3.4059, 4.9703, 0.7069, -1.6879], [-6.9072, -1.0114, -3.6663, -2.6895, -3.1729, -2.015, 0.9499, -1.2832, -2.0588, -4.2135, -5.7835], 2.934903331593502, 4.3150420503718205, 0.03881699540451434),
    ([0.1567, 1.1823, -0.6007, -1.4256, -1.1611, -0.8725, 2.5607, -0.9882], [2.7095, -1.032, 2.9095, 1.7351, 0.5714, 0.8204, -0.4989, 1.8664, -0.0696], -1.6991389483759387, 14.811843667434111, 0.11019176045251693),
    ([0.4769, -0.3537, 0.852, 3.8931, 0.654], [-0.1271, 4.0137, 2.1646, 5.1858, 1.4945, -2.3474], -0.46972171215671804, 8.273151550233486, 0.6506864006637441),
    ([-0.3092, 1.1792, -0.8933, -0.722, 0.5191, -0.3184, -0.0041, -0.1319, 0.2724, 1.1357, 0.0731], [0.2731, -6.6718, -1.5124, -3.5605, -4.5287], 2.6867100614105377, 4.228904374073379, 0.05171866193827994),
    ([0.0769, -1.2154, -0.8226, 2.5172, 1.3508, 3.3573], [0.6023, -0.6367, 0.4436, 1.5109], 0.45589506265339397, 7.5382127004476445, 0.6613102897540453),
    ([1.9252, 1.4353, -0.6525, -0.2198], [-1.5687, -0.8261, -0.055, 0.7025, -0.9439, -0.8801, -2.1506, -0.4619], 1.9993372358186103, 4.532996482963607, 0.10788586448212877),
    ([-2.3406, -0.2516, -4.692, -3.9161, 5.6837, -3.4366, -2.9277, 4.9034, 7.7546], [-2.7019, -1.0891, 0.3361, 3.1211, -2.3311, -0.8422, 1.211, 0.5232], 0.17908868775223355, 10.808572999442525, 0.8611809288108014),
    ([-0.2355, 0.2052, -0.4909, 0.4169], [-1.1167, -1.7928, -1.638, -1.8735, -1.9153], 6.504692612241497, 5.679955423510049, 0.0007827323607307425),
    ([1.2741, 0.9577, 0.2349, -0.4645, -0.6771, 0.725, 0.1599, 0.2923, -1.0619, 0.5645], [-0.6196, -2.1121, -1.5027, -0.8015, -1.003, -1.3317, -1.1517, -1.2933, -0.9075, 0.3504], 3.989827037884866, 17.638522020741846, 0.0008893935962854544),
    ([-0.544, -2.5696, 0.4798, 2.5266, -2.2436, 1.2635, -0.4805, -0.0897, -1.5401, -0.4892], [1.7945, 0.2888, 2.7018, 1.5371, -0.0125, 2.7262, -0.0127], -2.473580833320585, 14.74216383016905, 0.026055596366980783),
    ([1.8127, -2.1584, 1.4331, -0.3492], [1.5915, 0.7162, 2.9437, 0.6743, -4.1208, -0.9868, -3.2878, -1.9266, 2.2994, 0.4802], 0.29403756384179514, 7.256349989233673, 0.7769626636114741),
]


def matrix_with(values: dict[tuple[str, str], float], default=MISSING) -> SignatureMatrix:
    m = np.full((len(COMPONENTS), len(DESCRIPTORS)), default)
    for (comp, desc), v in values.items():
        m[COMPONENTS.index(comp), DESCRIPTORS.index(desc)] = v
    return SignatureMatrix(m)


def constant_matrix(value: float) -> SignatureMatrix:
    return SignatureMatrix(np.full((len(COMPONENTS), len(DESCRIPTORS)), value))


class TestReference:
    def test_two_case_mean_std(self):
        a = constant_matrix(0.2)
        b = constant_matrix(0.4)
        ref = build_reference([a, b])
        assert ref.mean[0, 0] == pytest.approx(0.3)
        assert ref.std[0, 0] == pytest.approx(np.std([0.2, 0.4], ddof=1))
        assert ref.std[0, 0] == pytest.approx(0.1414, abs=1e-4)

    def test_missing_cells_undefined(self):
        a = constant_matrix(MISSING)
        b = constant_matrix(MISSING)
        ref = build_reference([a, b])
        assert np.isnan(ref.mean).all()
        assert np.isnan(ref.std).all()
        assert (ref.count == 0).all()

    def test_constant_cohort_zero_std(self):
        ref = build_reference([constant_matrix(0.5)] * 3)
        assert (ref.std == 0).all()

    def test_single_valid_sample_has_mean_but_no_std(self):
        a = matrix_with({("LUB", "stenosis"): 0.7})
        b = constant_matrix(MISSING)
        ref = build_reference([a, b])
        i, j = COMPONENTS.index("LUB"), DESCRIPTORS.index("stenosis")
        assert ref.mean[i, j] == pytest.approx(0.7)
        assert np.isnan(ref.std[i, j])

    def test_too_few_cases(self):
        with pytest.raises(TooFewCases):
            build_reference([constant_matrix(0.5)])

    def test_mean_permutation_invariant(self):
        rng = np.random.default_rng(0)
        cases = [
            SignatureMatrix(rng.random((len(COMPONENTS), len(DESCRIPTORS))))
            for _ in range(5)
        ]
        r1 = build_reference(cases)
        r2 = build_reference(cases[::-1])
        assert np.allclose(r1.mean, r2.mean, equal_nan=True)
        assert np.allclose(r1.std, r2.std, equal_nan=True)


class TestFlagging:
    def make_reference(self):
        rng = np.random.default_rng(1)
        cases = [
            SignatureMatrix(0.5 + 0.05 * rng.standard_normal((23, 6))) for _ in range(20)
        ]
        return build_reference(cases)

    def test_case_at_mean_no_flags(self):
        ref = self.make_reference()
        case = SignatureMatrix(ref.mean.copy())
        assert not flag_significant(case, ref).any()

    def test_three_extreme_descriptors_flag_only_that_component(self):
        ref = self.make_reference()
        values = ref.mean.copy()
        comp = COMPONENTS.index("RB4")
        for j in range(3):
            values[comp, j] = ref.mean[comp, j] + 3.0 * ref.std[comp, j]
        flags = flag_significant(SignatureMatrix(values), ref)
        assert flags[comp]
        assert flags.sum() == 1

    def test_two_extremes_not_flagged(self):
        ref = self.make_reference()
        values = ref.mean.copy()
        comp = COMPONENTS.index("RB4")
        for j in range(2):
            values[comp, j] = ref.mean[comp, j] + 3.0 * ref.std[comp, j]
        assert not flag_significant(SignatureMatrix(values), ref).any()

    def test_missing_descriptors_do_not_count(self):
        ref = self.make_reference()
        values = np.full((23, 6), MISSING)
        comp = COMPONENTS.index("RB4")
        values[comp, 0] = ref.mean[comp, 0] + 5 * ref.std[comp, 0]
        values[comp, 1] = ref.mean[comp, 1] + 5 * ref.std[comp, 1]
        assert not flag_significant(SignatureMatrix(values), ref).any()

    def test_affine_rescaling_invariance(self):
        """Rescaling a descriptor column of case and cohort together leaves
        the flags unchanged."""
        rng = np.random.default_rng(2)
        raw = [0.5 + 0.05 * rng.standard_normal((23, 6)) for _ in range(12)]
        case_raw = raw[0] + 0.4  # everything extreme
        scale, shift = 7.3, -2.1

        ref1 = build_reference([SignatureMatrix(m) for m in raw])
        f1 = flag_significant(SignatureMatrix(case_raw), ref1)

        scaled = [m.copy() for m in raw]
        case_scaled = case_raw.copy()
        for m in scaled:
            m[:, 2] = m[:, 2] * scale + shift
        case_scaled[:, 2] = case_scaled[:, 2] * scale + shift
        ref2 = build_reference([SignatureMatrix(m) for m in scaled])
        f2 = flag_significant(SignatureMatrix(case_scaled), ref2)
        assert np.array_equal(f1, f2)


class TestWelch:
    @pytest.mark.parametrize("a,b,t_exp,dof_exp,p_exp", WELCH_CASES)
    def test_matches_independent_oracle(self, a, b, t_exp, dof_exp, p_exp):
        t, dof, p = welch_t_test(a, b)
        assert t == pytest.approx(t_exp, abs=1e-8)
        assert dof == pytest.approx(dof_exp, abs=1e-8)
        assert p == pytest.approx(p_exp, abs=1e-6)

    def test_identical_samples(self):
        t, dof, p = welch_t_test([1.5, 2.5, 3.5], [1.5, 2.5, 3.5])
        assert t == 0.0
        assert p == 1.0

    def test_antisymmetry(self):
        a = [1.0, 2.0, 4.0, 4.5]
        b = [2.0, 3.0, 5.0]
        ta, _, pa = welch_t_test(a, b)
        tb, _, pb = welch_t_test(b, a)
        assert ta == pytest.approx(-tb)
        assert pa == pytest.approx(pb)

    def test_constant_equal_samples(self):
        t, _, p = welch_t_test([2.0, 2.0, 2.0], [2.0, 2.0])
        assert t == 0.0 and p == 1.0

    def test_constant_different_samples_warns(self):
        with pytest.warns(UserWarning):
            t, _, p = welch_t_test([0.0, 0.0, 0.0], [1.0, 1.0, 1.0])
        assert p == 0.0

    def test_rejects_tiny_samples(self):
        with pytest.raises(ValueError):
            welch_t_test([1.0], [1.0, 2.0])

    def test_betainc_against_known_values(self):
        # I_x(a, b) spot checks: symmetric case and complement identity.
        assert betainc_regularized(0.5, 0.5, 0.5) == pytest.approx(0.5, abs=1e-12)
        for a, b, x in [(2.0, 3.0, 0.4), (5.5, 1.25, 0.8), (0.5, 9.0, 0.05)]:
            lhs = betainc_regularized(a, b, x)
            rhs = 1.0 - betainc_regularized(b, a, 1.0 - x)
            assert lhs == pytest.approx(rhs, abs=1e-12)


class TestRanking:
    def test_k_zero_empty(self):
        table = {"f": {"c1": 1.0, "c2": 2.0, "e1": 5.0, "e2": 6.0}}
        groups = {"c1": "control", "c2": "control", "e1": "experimental", "e2": "experimental"}
        assert rank_top_k(table, groups, 0) == []

    def test_single_separating_feature_first(self):
        rng = np.random.default_rng(3)
        groups = {f"c{i}": "control" for i in range(8)}
        groups.update({f"e{i}": "experimental" for i in range(8)})
        table = {
            "flat": {c: float(rng.normal(0, 1)) for c in groups},
            "separator": {
                c: float(rng.normal(0 if g == "control" else 8, 1))
                for c, g in groups.items()
            },
        }
        ranked = rank_top_k(table, groups, 5)
        assert ranked and ranked[0]["feature"] == "separator"
        assert all(r["p"] < 0.05 for r in ranked)

    def test_planted_effect_sizes_recover_order(self):
        rng = np.random.default_rng(4)
        groups = {f"c{i}": "control" for i in range(12)}
        groups.update({f"e{i}": "experimental" for i in range(12)})
        effects = {"weak": 1.5, "medium": 3.0, "strong": 6.0}
        table = {}
        for name, shift in effects.items():
            table[name] = {
                c: float(rng.normal(shift if g == "experimental" else 0, 1.0))
                for c, g in groups.items()
            }
        ranked = rank_top_k(table, groups, 3)
        assert [r["feature"] for r in ranked] == ["strong", "medium", "weak"]

    def test_insignificant_table_filters(self):
        rng = np.random.default_rng(5)
        groups = {f"c{i}": "control" for i in range(10)}
        groups.update({f"e{i}": "experimental" for i in range(10)})
        table = {
            "good": {c: float(rng.normal(5 if g == "experimental" else 0, 1)) for c, g in groups.items()},
            "bad": {c: float(rng.normal(5 if g == "experimental" else 0, 1)) for c, g in groups.items()},
        }
        # The 'bad' feature also differs in regions that should not differ.
        insig = {
            "good": {f"e{i}": float(rng.normal(0, 1)) for i in range(10)},
            "bad": {f"e{i}": float(rng.normal(5, 1)) for i in range(10)},
        }
        ranked = rank_top_k(table, groups, 5, insignificant_table=insig)
        assert [r["feature"] for r in ranked] == ["good"]

    def test_csv_output(self):
        rows = [{"feature": "LUB/stenosis", "t": 2.5, "dof": 9.2, "p": 0.01}]
        csv = ranked_features_to_csv(rows)
        assert csv.splitlines()[0] == "feature,t,dof,p"
        assert "LUB/stenosis" in csv


def test_signature_feature_table_skips_missing():
    a = constant_matrix(0.5)
    b = constant_matrix(MISSING)
    table = signature_feature_table({"a": a, "b": b})
    assert all(set(v) == {"a"} for v in table.values())
    assert len(table) == 23 * 6
