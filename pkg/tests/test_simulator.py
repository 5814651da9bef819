"""
测试用例 - 合成数据生成
"""
import numpy as np
import pytest

from core.scheduler import TaskScheduler
from core.types import FlowKind
from estimator.design import DesignOperator
from market.transforms import NS_PER_DAY, NS_PER_SECOND
from simulator import SimConfig, TickSimConfig, simulate_dataset, simulate_ticks, truth_tensor


class TestSimConfig:
    """测试模拟配置"""

    def test_defaults(self):
        cfg = SimConfig()
        assert (cfg.M, cfg.d, cfg.N) == (20, 1, 1000)
        assert cfg.flow is FlowKind.AUTOCORRELATED_FLOW
        assert cfg.asset_ids() == ["A0"]

    def test_from_dict(self):
        """字符串 flow 转为枚举，未知键报错"""
        cfg = SimConfig.from_dict({"flow": "impulse", "d": 2, "assets": ["X", "Y"]})
        assert cfg.flow is FlowKind.IMPULSE and cfg.asset_ids() == ["X", "Y"]
        with pytest.raises(ValueError):
            SimConfig.from_dict({"episodes": 3})

    @pytest.mark.parametrize("field,value", [("c_S", 0.0), ("c_X", 1.5), ("flip_prob", 1.0), ("M", 0)])
    def test_invalid_values(self, field, value):
        with pytest.raises(ValueError):
            SimConfig(**{field: value})

    def test_cross_ratio_and_liquidity(self):
        """交叉核为自冲击核的 cross_ratio 倍，ℓ<k 方向再乘流动性比"""
        truth = truth_tensor(SimConfig(M=5, d=2, cross_ratio=0.3, liquidity_ratio=2.0))
        np.testing.assert_allclose(truth.values[:, 0, 1], 0.6 * truth.values[:, 0, 0])
        np.testing.assert_allclose(truth.values[:, 1, 0], 0.3 * truth.values[:, 1, 1])


class TestSimulateDataset:
    """测试 episode 模拟"""

    def test_deterministic(self):
        """相同种子输出完全相同"""
        cfg = SimConfig(M=6, d=2, N=10, seed=4)
        a = simulate_dataset(cfg)
        b = simulate_dataset(cfg)
        for x, y in zip(a.normalized, b.normalized):
            np.testing.assert_array_equal(x.returns, y.returns)
            np.testing.assert_array_equal(x.volumes, y.volumes)
        c = simulate_dataset(cfg, seed=5)
        assert not np.array_equal(a.normalized[0].volumes, c.normalized[0].volumes)

    def test_threads_do_not_change_output(self):
        cfg = SimConfig(M=5, d=1, N=40, seed=2)
        serial = simulate_dataset(cfg, scheduler=TaskScheduler(1))
        parallel = simulate_dataset(cfg, scheduler=TaskScheduler(4))
        np.testing.assert_array_equal(serial.noise, parallel.noise)

    def test_impulse_reproduces_kernel_columns(self):
        """零噪声脉冲：收益等于真实核的一列"""
        cfg = SimConfig(M=8, d=2, N=12, flow="impulse", noise_R=0.0, c_S=0.6, c_X=0.4)
        result = simulate_dataset(cfg)
        for ep in result.normalized:
            (k,) = np.flatnonzero(ep.volumes[0])
            assert np.count_nonzero(ep.volumes) == 1
            expected = ep.volumes[0, k] * result.truth.values[:, :, k]
            np.testing.assert_allclose(ep.returns, expected, atol=1e-12)

    def test_forward_model(self):
        """y = U·vec(G*) + ε"""
        cfg = SimConfig(M=6, d=2, N=15, c_S=0.5, c_X=0.7, seed=3)
        result = simulate_dataset(cfg)
        for n, ep in enumerate(result.normalized):
            clean = DesignOperator(ep.volumes, cfg.c_S, cfg.c_X).apply(result.truth)
            np.testing.assert_allclose(ep.returns, clean + result.noise[n], atol=1e-12)

    def test_price_view(self):
        """价格视图 σ≡1：last − P0 = 归一化收益"""
        result = simulate_dataset(SimConfig(M=5, d=1, N=5, noise_R=2.0))
        for ep, norm in zip(result.dataset, result.normalized):
            np.testing.assert_allclose(ep.last - ep.first[0], norm.returns, atol=1e-9)
            assert np.all(ep.low > 0)
            np.testing.assert_array_equal(ep.signed_volume, norm.volumes)

    def test_sparse_metaorders_keep_sign(self):
        """稀疏母单流：每列非零项同号"""
        result = simulate_dataset(SimConfig(M=10, d=2, N=30, flow="sparse_metaorder", seed=7))
        for ep in result.normalized:
            for k in range(2):
                col = ep.volumes[:, k]
                nonzero = col[col != 0]
                assert len(np.unique(np.sign(nonzero))) <= 1

    def test_ar1_modulation(self):
        """ar1 ≠ 0 时成交量规模随 episode 变化，ar1 = 0 时不变"""
        base = simulate_dataset(SimConfig(M=4, N=20, seed=1))
        modulated = simulate_dataset(SimConfig(M=4, N=20, seed=1, ar1=0.8))
        ratios = [np.abs(m.volumes).sum() / np.abs(b.volumes).sum()
                  for m, b in zip(modulated.normalized, base.normalized)]
        assert np.std(ratios) > 0
        np.testing.assert_allclose(
            np.sign(modulated.normalized[0].volumes), np.sign(base.normalized[0].volumes)
        )


class TestSimulateTicks:
    """测试逐笔成交模拟"""

    def setup_method(self):
        self.cfg = TickSimConfig(n_days=20, trades_per_day=2000, flip_prob=0.1, seed=0)
        self.ticks = simulate_ticks(self.cfg)

    def test_layout(self):
        """列、行数与交易时段"""
        assert list(self.ticks.columns) == ["timestamp_ns", "asset_id", "signed_volume", "price"]
        assert len(self.ticks) == 20 * 2000
        assert self.ticks["timestamp_ns"].is_monotonic_increasing
        seconds = (self.ticks["timestamp_ns"] % NS_PER_DAY) / NS_PER_SECOND
        assert seconds.min() >= 34_200 and seconds.max() < 34_200 + 23_400

    def test_sign_autocorrelation(self):
        """一阶符号自相关 ≈ 1 − 2p"""
        values = []
        for _, day in self.ticks.groupby(self.ticks["timestamp_ns"] // NS_PER_DAY):
            s = np.sign(day["signed_volume"].to_numpy())
            values.append(s[1:] * s[:-1])
        assert np.mean(np.concatenate(values)) == pytest.approx(1 - 2 * 0.1, abs=0.02)

    def test_daily_sigma(self):
        """每日区间波动率等于 σ_D"""
        for _, day in self.ticks.groupby(self.ticks["timestamp_ns"] // NS_PER_DAY):
            p = day["price"].to_numpy()
            sigma = (p.max() - p.min()) / 3 + 2 * abs(p[-1] - p[0]) / 3
            assert sigma == pytest.approx(self.cfg.sigma_D, rel=1e-9)

    def test_deterministic(self):
        again = simulate_ticks(self.cfg)
        np.testing.assert_array_equal(again["price"].to_numpy(), self.ticks["price"].to_numpy())

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            TickSimConfig(flip_prob=0.0)
        with pytest.raises(ValueError):
            TickSimConfig.from_dict({"days": 3})
