"""
测试用例 - 冲击函数、传播核、可容许性与执行成本
"""
import math
import tempfile
from pathlib import Path

import numpy as np
import pytest

from core.cost import construct_manipulation, continuous_cost, execution_cost, peak_impact
from core.errors import ManipulationNotFound
from core.kernels import (
    ImpactFunction, ImpactPair, KernelTensor, ParametricKernel, admissibility_check, eval_parametric,
    impact_h, sample_to_tensor,
)
from core.scheduler import TaskScheduler, chunked
from core.types import KernelFamily, ModelKind, TradeSchedule


class TestImpactFunction:
    """测试凹冲击函数 h_c"""

    def test_values(self):
        """c=1 恒等，c=0.5 开方且为奇函数"""
        assert ImpactFunction(1.0)(-3.0) == -3.0
        assert ImpactFunction(0.5)(4.0) == pytest.approx(2.0)
        assert ImpactFunction(0.5)(-4.0) == pytest.approx(-2.0)
        assert ImpactFunction(0.5)(0.0) == 0.0

    def test_vectorised(self):
        """数组输入逐元素计算"""
        out = ImpactFunction(0.5).apply([-9.0, 0.0, 16.0])
        np.testing.assert_allclose(out, [-3.0, 0.0, 4.0])

    def test_invalid_exponent(self):
        """c 必须在 (0, 1] 内"""
        for c in (0.0, 1.5, -0.2):
            with pytest.raises(ValueError):
                ImpactFunction(c)
        with pytest.raises(ValueError):
            impact_h(1.2, 1.0)

    def test_pair(self):
        """对角用 c_S，非对角用 c_X"""
        pair = ImpactPair(0.5, 0.8)
        assert pair.exponent(1, 1) == 0.5
        assert pair.exponent(0, 1) == 0.8
        assert ImpactPair.coerce(0.3) == ImpactPair(0.3, 0.3)


class TestParametricKernel:
    """测试参数化核"""

    def test_half_life(self):
        """ONE_EXP 半衰期处取 0.5"""
        k = ParametricKernel(KernelFamily.ONE_EXP, Y=1.0, rho=math.log(2) / 60)
        assert k(60.0) == pytest.approx(0.5)
        assert ParametricKernel.from_half_life(60.0)(120.0) == pytest.approx(0.25)

    def test_power_beta_zero(self):
        """β=0 时为常数"""
        k = ParametricKernel(KernelFamily.POWER, Y=1.0, beta=0.0, tau=5.0)
        np.testing.assert_allclose(eval_parametric(k, np.array([0.0, 10.0, 1e5])), 1.0)

    def test_two_exp_degenerate(self):
        """w₁=1 时退化为 ONE_EXP"""
        lags = np.linspace(0, 600, 7)
        two = ParametricKernel(KernelFamily.TWO_EXP, Y=2.0, w1=1.0, rho1=0.01, rho2=0.5)
        one = ParametricKernel(KernelFamily.ONE_EXP, Y=2.0, rho=0.01)
        np.testing.assert_allclose(two(lags), one(lags))

    def test_negative_lag(self):
        """负滞后报错"""
        with pytest.raises(ValueError):
            ParametricKernel.from_half_life(10.0)(-1.0)

    def test_dict_round_trip(self):
        """to_dict / from_dict"""
        k = ParametricKernel(KernelFamily.POWER, Y=0.7, beta=0.4, tau=30.0)
        assert ParametricKernel.from_dict(k.to_dict()) == k

    def test_sample_to_tensor(self):
        """G_i = kernel(i·bin_seconds)"""
        k = ParametricKernel(KernelFamily.ONE_EXP, Y=3.0, rho=math.log(2) / 60)
        K = sample_to_tensor(k, bin_seconds=60, M=3)
        np.testing.assert_allclose(K.values[:, 0, 0], [3.0, 1.5, 0.75])
        assert K.metadata["parametric"][0][0]["family"] == "1exp"

    def test_sample_block_diagonal(self):
        """交叉项 Y=0 → 分块对角"""
        self_k = ParametricKernel.from_half_life(60.0)
        zero = ParametricKernel.from_half_life(60.0, Y=0.0)
        K = sample_to_tensor([[self_k, zero], [zero, self_k]], bin_seconds=60, M=4)
        assert np.all(K.values[:, 0, 1] == 0) and np.all(K.values[:, 1, 0] == 0)
        assert K.M == 4 and K.d == 2


class TestKernelTensor:
    """测试核张量与序列化"""

    def setup_method(self):
        rng = np.random.default_rng(0)
        self.K = KernelTensor(rng.normal(size=(4, 2, 2)), bin_seconds=60, assets=("A", "B"))

    def test_vec_order(self):
        """vec：ℓ 最慢，其次滞后，k 最快"""
        v = self.K.vec()
        assert v[0] == self.K.values[0, 0, 0]
        assert v[1] == self.K.values[0, 0, 1]
        assert v[2] == self.K.values[1, 0, 0]
        assert v[8] == self.K.values[0, 1, 0]
        back = KernelTensor.from_vec(v, 4, 2)
        np.testing.assert_array_equal(back.values, self.K.values)

    def test_json_and_csv(self):
        """JSON 与 CSV 读回一致"""
        with tempfile.TemporaryDirectory() as tmpdir:
            self.K.to_json(Path(tmpdir) / "k.json")
            self.K.to_csv(Path(tmpdir) / "k.csv")
            from_json = KernelTensor.load(Path(tmpdir) / "k.json")
            from_csv = KernelTensor.load(Path(tmpdir) / "k.csv")
        np.testing.assert_array_equal(from_json.values, self.K.values)
        np.testing.assert_array_equal(from_csv.values, self.K.values)
        assert from_json.assets == ("A", "B") and from_json.bin_seconds == 60

    def test_rejects_bad_shape(self):
        """形状必须为 (M, d, d)"""
        with pytest.raises(ValueError):
            KernelTensor(np.zeros((3, 2, 1)))


class TestAdmissibility:
    """测试可容许性检查"""

    def test_convex_decreasing(self):
        """[3, 2, 1.5] 三项都满足"""
        report = admissibility_check(KernelTensor(np.array([3.0, 2.0, 1.5])))
        assert report.nonneg and report.nonincreasing and report.convex
        assert report.admissible

    def test_increasing(self):
        """[1, 2, 1] 不是非增"""
        report = admissibility_check(KernelTensor(np.array([1.0, 2.0, 1.0])))
        assert not report.nonincreasing
        assert report.worst["nonincreasing"] == pytest.approx(-1.0)
        assert report.worst_lag["nonincreasing"] == 0

    def test_identity_exponential(self):
        """G_i = I·e^{−i}"""
        values = np.exp(-np.arange(5))[:, None, None] * np.eye(2)[None]
        assert admissibility_check(KernelTensor(values), tol=1e-12)

    def test_tolerance(self):
        """tol 吸收微小违反"""
        K = KernelTensor(np.array([1.0, 1.0 + 1e-10, 0.5]))
        assert not admissibility_check(K).nonincreasing
        assert admissibility_check(K, tol=1e-8).nonincreasing

    def test_symmetry_flag(self):
        """可选对称性检查"""
        values = np.zeros((2, 2, 2))
        values[0] = [[1.0, 0.2], [0.0, 1.0]]
        report = admissibility_check(KernelTensor(values), symmetric=True)
        assert report.symmetric is False


class TestExecutionCost:
    """测试执行成本与操纵构造"""

    def test_single_trade(self):
        """单笔成交：½·G₀·x·h(x)"""
        K = KernelTensor(np.array([2.0, 1.0]))
        s = TradeSchedule(times=[0.0], volumes=[4.0])
        assert execution_cost(K, 0.5, s).total_cost == pytest.approx(0.5 * 2.0 * 4.0 * 2.0)

    def test_round_trip_permanent(self):
        """线性 h，永久核，(+1, −1) 往返成本为 0"""
        K = KernelTensor(np.array([1.0, 1.0]))
        s = TradeSchedule(times=[0.0, 1.0], volumes=[1.0, -1.0])
        assert execution_cost(K, 1.0, s).total_cost == pytest.approx(0.0)

    def test_linear_in_kernel(self):
        """成本对核线性"""
        rng = np.random.default_rng(4)
        K = KernelTensor(rng.random((5, 2, 2)))
        s = TradeSchedule(times=np.arange(4.0), volumes=rng.normal(size=(4, 2)))
        base = execution_cost(K, ImpactPair(0.5, 0.7), s)
        scaled = execution_cost(K.scale(3.0), ImpactPair(0.5, 0.7), s)
        assert scaled.total_cost == pytest.approx(3.0 * base.total_cost)
        assert base.per_pair.sum() == pytest.approx(base.total_cost)

    def test_too_long(self):
        """计划长度超过 M 报错"""
        K = KernelTensor(np.array([1.0, 0.5]))
        with pytest.raises(ValueError):
            execution_cost(K, 1.0, TradeSchedule(times=np.arange(3.0), volumes=[1.0, 1.0, 1.0]))

    def test_linear_no_manipulation(self):
        """线性 h 与可容许核：1000 个随机计划成本非负"""
        K = sample_to_tensor(ParametricKernel.from_half_life(120.0), bin_seconds=60, M=8)
        rng = np.random.default_rng(5)
        for _ in range(1000):
            L = int(rng.integers(1, 9))
            s = TradeSchedule(times=np.arange(float(L)), volumes=rng.normal(size=L) + 1e-3)
            assert execution_cost(K, 1.0, s).total_cost >= -1e-10

    def test_construct_manipulation(self):
        """凹 h 下构造出负成本计划"""
        k = ParametricKernel.from_half_life(60.0)
        schedule = construct_manipulation(k, ImpactFunction(0.5), bin_seconds=60.0)
        assert schedule.metadata["s"] == pytest.approx(-(2.0 - math.sqrt(2.0)))
        cost = continuous_cost(k, 0.5, schedule.times, schedule.volumes[:, 0])
        assert cost < 0
        assert cost == pytest.approx(schedule.metadata["cost"])

    @pytest.mark.parametrize("c", [0.3, 0.5, 0.7])
    def test_manipulation_random_exponentials(self, c):
        """随机 (Y, ρ) 的 1-EXP 核：每个凹 h 都能构造负成本计划"""
        rng = np.random.default_rng(int(c * 10))
        for _ in range(5):
            half_life, Y = rng.uniform(30.0, 1800.0), rng.uniform(0.1, 5.0)
            k = ParametricKernel.from_half_life(float(half_life), Y=float(Y))
            schedule = construct_manipulation(k, c, bin_seconds=60.0)
            assert continuous_cost(k, c, schedule.times, schedule.volumes[:, 0]) < 0

    def test_manipulation_from_tensor(self):
        """离散核按滞后插值后同样可行"""
        K = sample_to_tensor(ParametricKernel.from_half_life(300.0), bin_seconds=60, M=10)
        schedule = construct_manipulation(K, 0.6)
        assert schedule.metadata["cost"] < 0

    def test_linear_has_no_manipulation(self):
        """c=1 时找不到操纵"""
        with pytest.raises(ManipulationNotFound, match="no manipulation found"):
            construct_manipulation(ParametricKernel.from_half_life(60.0), 1.0)

    def test_peak_impact(self):
        """I = Y σ_D sgn(Q)|Q/V_D|^δ"""
        assert peak_impact(1.0, 1.0, 100.0, 25.0, 0.5) == pytest.approx(0.5)
        assert peak_impact(1.0, 1.0, 100.0, 0.0, 0.5) == 0.0
        assert peak_impact(1.2, 2.0, 50.0, -8.0, 0.6) == pytest.approx(-peak_impact(1.2, 2.0, 50.0, 8.0, 0.6))
        with pytest.raises(ValueError):
            peak_impact(1.0, 1.0, 0.0, 1.0, 0.5)


class TestTypes:
    """测试枚举与调度器"""

    def test_model_kind_parse(self):
        """别名与大小写"""
        assert ModelKind.parse("1EXP") is ModelKind.ONE_EXP
        assert ModelKind.parse("two-exp") is ModelKind.TWO_EXP
        assert ModelKind.parse("cross_proj") is ModelKind.CROSS_PROJ
        assert ModelKind.POWER.family is KernelFamily.POWER
        with pytest.raises(ValueError):
            ModelKind.parse("lstm")

    def test_schedule_validation(self):
        """时间必须严格递增，至少一笔非零"""
        with pytest.raises(ValueError):
            TradeSchedule(times=[0.0, 0.0], volumes=[1.0, 1.0])
        with pytest.raises(ValueError):
            TradeSchedule(times=[0.0], volumes=[0.0])

    def test_scheduler_order(self):
        """结果按提交顺序返回，与线程数无关"""
        items = list(range(20))
        serial = TaskScheduler(1).map(lambda x: x * x, items)
        parallel = TaskScheduler(4).map(lambda x: x * x, items)
        assert serial == parallel == [x * x for x in items]
        assert [len(c) for c in chunked(items, 8)] == [8, 8, 4]
