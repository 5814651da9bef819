"""
测试用例 - 行情数据读取、归一化与变换
"""
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from core.errors import DataError
from market import (
    BinBar, Episode, Dataset, NormalizationSettings, bars_from_ticks, interval_sigma, load_episodes,
    load_normalized, load_ticks, market_portfolio, market_weights, normalize_dataset, normalize_volumes,
    normalized_returns, rebin, select_assets, write_episodes, write_normalized, write_ticks,
)
from market.transforms import NS_PER_DAY, NS_PER_SECOND

HEADER = "episode_id,bin_index,asset_id,first,high,low,last,signed_volume\n"


def _write(tmpdir: str, body: str, name: str = "episodes.csv") -> Path:
    path = Path(tmpdir) / name
    path.write_text(HEADER + body)
    return path


def _episode(last, first=None, volume=None, episode_id="e0", assets=("A",)) -> Episode:
    last = np.asarray(last, dtype=float).reshape(len(last), -1)
    if first is None:
        first = np.vstack([last[:1], last[:-1]])
    first = np.asarray(first, float).reshape(last.shape)
    high = np.maximum(first, last)
    low = np.minimum(first, last)
    signed = np.ones_like(last) if volume is None else np.asarray(volume, float).reshape(last.shape)
    return Episode(episode_id, tuple(assets), first, high, low, last, signed)


class TestLoadEpisodes:
    """测试规范 CSV 读取"""

    def test_counts(self):
        """2 个 episode × 3 个分箱 × 1 个资产"""
        rows = "".join(
            f"{e},{i},A,100,101,99,100.5,{i + 1}\n" for e in ("e1", "e2") for i in range(3)
        )
        with tempfile.TemporaryDirectory() as tmpdir:
            dataset = load_episodes(_write(tmpdir, rows))
        assert (dataset.N, dataset.M, dataset.d) == (2, 3, 1)

    def test_gap_is_filled(self):
        """缺失分箱成交量为 0，价格沿用前一分箱收盘"""
        rows = "e1,0,A,100,101,99,100.5,3\ne1,2,A,100.5,102,100,101,2\n"
        with tempfile.TemporaryDirectory() as tmpdir:
            ep = load_episodes(_write(tmpdir, rows))[0]
        assert ep.M == 3
        assert ep.signed_volume[1, 0] == 0.0
        assert ep.first[1, 0] == ep.last[1, 0] == ep.high[1, 0] == ep.low[1, 0] == 100.5

    def test_inconsistent_M(self):
        """episode 长度不同时报错"""
        rows = "".join(f"a,{i},A,100,101,99,100,1\n" for i in range(3))
        rows += "".join(f"b,{i},A,100,101,99,100,1\n" for i in range(4))
        with tempfile.TemporaryDirectory() as tmpdir:
            with pytest.raises(DataError, match="inconsistent M"):
                load_episodes(_write(tmpdir, rows))

    def test_missing_column(self):
        """缺列时报错并指出列名"""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "bad.csv"
            path.write_text("episode_id,bin_index,asset_id,first,high,low,last\ne,0,A,1,1,1,1\n")
            with pytest.raises(DataError, match="signed_volume"):
                load_episodes(path)

    def test_non_positive_price(self):
        """价格必须为正"""
        with tempfile.TemporaryDirectory() as tmpdir:
            with pytest.raises(DataError, match="non-positive price"):
                load_episodes(_write(tmpdir, "e,0,A,0,1,0,1,1\n"))

    def test_schema_map(self):
        """列名映射"""
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "mapped.csv"
            path.write_text(
                "ep,bin,sym,open,high,low,close,q\ne,0,A,100,101,99,100,1\ne,1,A,100,101,99,101,-1\n"
            )
            schema = {"episode_id": "ep", "bin_index": "bin", "asset_id": "sym", "first": "open",
                      "last": "close", "signed_volume": "q"}
            dataset = load_episodes(path, schema)
        assert dataset.assets == ("A",)
        assert dataset[0].last[1, 0] == 101.0

    def test_round_trip(self):
        """读 → 写 → 读 逐位一致"""
        rows = "".join(
            f"{e},{i},{a},100.1,101.25,99.5,100.7,{i - 1.5}\n"
            for e in ("e1", "e2") for i in range(4) for a in ("A", "B")
        )
        with tempfile.TemporaryDirectory() as tmpdir:
            first = load_episodes(_write(tmpdir, rows))
            out = Path(tmpdir) / "out.csv"
            write_episodes(first, out)
            second = load_episodes(out)
        assert second.assets == first.assets
        for a, b in zip(first, second):
            assert a.episode_id == b.episode_id
            for name in ("first", "high", "low", "last", "signed_volume"):
                np.testing.assert_array_equal(getattr(a, name), getattr(b, name))


class TestIntervalSigma:
    """测试区间波动率"""

    def test_formula(self):
        """(1/3)·2 + (2/3)·0.5 = 1"""
        bars = [BinBar(first=100.5, high=101.0, low=100.0, last=100.5, signed_volume=1),
                BinBar(first=100.5, high=102.0, low=100.2, last=101.0, signed_volume=1)]
        assert interval_sigma(bars) == pytest.approx(1.0)

    def test_flat_floor(self):
        """全平区间返回 ε_σ"""
        bars = [BinBar(100, 100, 100, 100, 0)] * 3
        assert interval_sigma(bars, eps_sigma=1e-6) == 1e-6

    def test_empty(self):
        """空区间报错"""
        with pytest.raises(DataError):
            interval_sigma([])


class TestNormalization:
    """测试收益与成交量归一化"""

    def test_constant_price(self):
        """价格不变 → 归一化收益全 0"""
        ep = _episode([100.0] * 4)
        np.testing.assert_array_equal(normalized_returns(ep), np.zeros((4, 1)))

    def test_single_step(self):
        """100 → 101，σ=1 时收益为 1"""
        ep = Episode("e", ("A",), np.array([[100.0]]), np.array([[101.0]]), np.array([[99.5]]),
                     np.array([[101.0]]), np.array([[1.0]]))
        # σ = (101 − 99.5)/3 + 2·1/3 = 1.1667
        assert normalized_returns(ep)[0, 0] == pytest.approx(1.0 / (1.5 / 3 + 2 / 3))
        ep = Episode("e", ("A",), np.array([[100.0]]), np.array([[101.0]]), np.array([[100.0]]),
                     np.array([[101.0]]), np.array([[1.0]]))
        assert normalized_returns(ep)[0, 0] == pytest.approx(1.0)

    def test_per_asset_sigma(self):
        """d=2 时每个资产用自己的 σ"""
        last = np.array([[101.0, 50.0], [102.0, 51.0]])
        first = np.array([[100.0, 49.0], [101.0, 50.0]])
        ep = _episode(last, first=first, assets=("A", "B"), volume=np.ones((2, 2)))
        r = normalized_returns(ep)
        assert r[1, 0] == pytest.approx(2.0 / (2 / 3 + 4 / 3))
        assert r[1, 1] == pytest.approx(2.0 / (2 / 3 + 4 / 3))

    def test_price_scale_equivariance(self):
        """价格乘以常数不改变归一化收益"""
        rng = np.random.default_rng(1)
        last = 100 + np.cumsum(rng.normal(size=(6, 1)), axis=0)
        ep = _episode(last)
        scaled = _episode(3.0 * last)
        np.testing.assert_allclose(normalized_returns(ep), normalized_returns(scaled), rtol=1e-12)

    def test_uniform_volume(self):
        """单个 episode、均匀成交 → Q̃ = Q/V_D · M"""
        ep = _episode([100.0] * 5, volume=[2.0] * 5)
        dataset = Dataset((ep,), ("A",), 5)
        volumes, excluded = normalize_volumes(dataset)
        assert excluded == []
        np.testing.assert_allclose(volumes[0], np.full((5, 1), 2.0 / 10.0 * 5))

    def test_zero_bin(self):
        """零成交分箱 → Q̃ = 0"""
        ep = _episode([100.0] * 3, volume=[1.0, 0.0, 1.0])
        volumes, _ = normalize_volumes(Dataset((ep,), ("A",), 3))
        assert volumes[0][1, 0] == 0.0

    def test_volume_scale_free(self):
        """成交量整体乘以常数不改变 Q̃"""
        rng = np.random.default_rng(2)
        eps = [_episode([100.0] * 4, volume=rng.normal(size=4), episode_id=f"e{n}") for n in range(3)]
        scaled = [_episode([100.0] * 4, volume=7.0 * e.signed_volume, episode_id=e.episode_id) for e in eps]
        a, _ = normalize_volumes(Dataset(tuple(eps), ("A",), 4))
        b, _ = normalize_volumes(Dataset(tuple(scaled), ("A",), 4))
        for x, y in zip(a, b):
            np.testing.assert_allclose(x, y, rtol=1e-12)

    def test_window_clamp(self):
        """滚动窗口 w = min(n, max_window)：更早的 episode 不再影响"""
        settings = NormalizationSettings(max_window=2)
        eps = [_episode([100.0] * 2, volume=v, episode_id=f"e{n}")
               for n, v in enumerate([[1.0, 9.0], [1.0, 1.0], [1.0, 1.0]])]
        volumes, _ = normalize_volumes(Dataset(tuple(eps), ("A",), 2), settings)
        # 第 3 个 episode 只看 e1、e2，比值均为 2
        np.testing.assert_allclose(volumes[2], np.full((2, 1), 0.5 * 2.0))

    def test_zero_daily_volume_excluded(self):
        """V_D = 0 的 episode 被剔除"""
        eps = (_episode([100.0] * 2, volume=[0.0, 0.0], episode_id="dead"),
               _episode([100.0] * 2, volume=[1.0, 1.0], episode_id="live"))
        normalized = normalize_dataset(Dataset(eps, ("A",), 2))
        assert [e.episode_id for e in normalized] == ["live"]

    def test_idle_asset_keeps_episode(self):
        """单个资产无成交：episode 保留，该列 Q̃ = 0，另一列不受影响"""
        volume = np.array([[1.0, 0.0], [2.0, 0.0], [1.0, 0.0]])
        ep = _episode(np.full((3, 2), 100.0), volume=volume, assets=("A", "B"))
        volumes, excluded = normalize_volumes(Dataset((ep,), ("A", "B"), 3))
        assert excluded == []
        assert not volumes[0][:, 1].any()
        alone, _ = normalize_volumes(Dataset((ep.select([0]),), ("A",), 3))
        np.testing.assert_allclose(volumes[0][:, 0], alone[0][:, 0])

    def test_idle_asset_skipped_in_profile(self):
        """空闲日不进入该资产的滚动曲线"""
        flat = np.full((2, 2), 100.0)
        idle = _episode(flat, volume=[[1.0, 0.0], [1.0, 0.0]], assets=("A", "B"), episode_id="e0")
        busy = _episode(flat, volume=[[1.0, 1.0], [1.0, 3.0]], assets=("A", "B"), episode_id="e1")
        volumes, _ = normalize_volumes(Dataset((idle, busy), ("A", "B"), 2))
        alone, _ = normalize_volumes(Dataset((busy.select([1]),), ("B",), 2))
        np.testing.assert_allclose(volumes[1][:, 1], alone[0][:, 0])

    def test_daily_volume_overrides_window(self):
        """episode 自带全日 V_D 时以它为分母"""
        ep = _episode([100.0] * 2, volume=[1.0, 1.0])
        full = replace(ep, daily_volume=np.array([8.0]))
        volumes, _ = normalize_volumes(Dataset((full,), ("A",), 2))
        # 分母 8，曲线 V_D/V = 8
        np.testing.assert_allclose(volumes[0], np.full((2, 1), 1.0 / 8.0 * 8.0))
        with pytest.raises(DataError):
            replace(ep, daily_volume=np.array([1.0, 2.0]))

    def test_normalized_round_trip(self):
        """归一化 CSV 读写"""
        ep = _episode([100.0, 101.0, 100.5], volume=[1.0, -2.0, 1.0])
        eps = normalize_dataset(Dataset((ep,), ("A",), 3))
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "norm.csv"
            write_normalized(eps, path)
            loaded = load_normalized(path)
        np.testing.assert_allclose(loaded[0].returns, eps[0].returns, rtol=1e-14)
        np.testing.assert_allclose(loaded[0].volumes, eps[0].volumes, rtol=1e-14)


class TestTransforms:
    """测试数据集变换"""

    def setup_method(self):
        rng = np.random.default_rng(3)
        episodes = []
        for n in range(2):
            last = 100 + np.cumsum(rng.normal(size=(6, 2)), axis=0)
            volume = rng.normal(size=(6, 2))
            episodes.append(_episode(last, volume=volume, episode_id=f"e{n}", assets=("A", "B")))
        self.dataset = Dataset(tuple(episodes), ("A", "B"), 6)

    def test_select_assets(self):
        """取资产子集"""
        sub = select_assets(self.dataset, ["B"])
        assert sub.assets == ("B",)
        np.testing.assert_array_equal(sub[0].last[:, 0], self.dataset[0].last[:, 1])
        with pytest.raises(DataError):
            select_assets(self.dataset, ["C"])

    def test_rebin(self):
        """合并相邻分箱"""
        coarse = rebin(self.dataset, 3)
        ep, src = coarse[0], self.dataset[0]
        assert coarse.M == 2 and coarse.bin_seconds == 900
        np.testing.assert_array_equal(ep.first[1], src.first[3])
        np.testing.assert_array_equal(ep.last[0], src.last[2])
        np.testing.assert_allclose(ep.signed_volume[0], src.signed_volume[:3].sum(axis=0))
        np.testing.assert_array_equal(ep.high[0], src.high[:3].max(axis=0))

    def test_market_portfolio(self):
        """追加 MKT 资产，首价为 100"""
        mkt = market_portfolio(self.dataset)
        assert mkt.assets == ("A", "B", "MKT")
        assert mkt[0].first[0, 2] == pytest.approx(100.0)
        assert np.all(mkt[0].low[:, 2] <= mkt[0].high[:, 2])

    def test_market_weights_follow_each_bin(self):
        """成交金额逐分箱从 B 转到 A：MKT 价格跟随当箱权重，零成交箱沿用上一箱"""
        last = np.array([[10.0, 50.0], [11.0, 50.0], [11.0, 50.0], [12.0, 50.0]])
        first = np.array([[10.0, 50.0], [10.0, 50.0], [11.0, 50.0], [11.0, 50.0]])
        volume = np.array([[0.0, 2.0], [5.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        ep = _episode(last, first=first, volume=volume, assets=("A", "B"))
        weights = market_weights(ep)
        np.testing.assert_allclose(weights, [[0.0, 1.0], [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]])
        mkt = market_portfolio(Dataset((ep,), ("A", "B"), 4))[0]
        np.testing.assert_allclose(mkt.last[:, 2], [100.0, 110.0, 110.0, 120.0])

    def test_market_weights_equal_before_first_trade(self):
        """首个分箱无成交时为等权"""
        ep = _episode(np.full((2, 2), 100.0), volume=[[0.0, 0.0], [1.0, 3.0]], assets=("A", "B"))
        np.testing.assert_allclose(market_weights(ep), [[0.5, 0.5], [0.25, 0.75]])


class TestTicks:
    """测试逐笔成交读取与分箱"""

    def _ticks(self) -> pd.DataFrame:
        open_ns = 34_200 * NS_PER_SECOND
        stamps = [open_ns + s * NS_PER_SECOND for s in (10, 20, 400)]
        stamps.append(NS_PER_DAY + open_ns + 5 * NS_PER_SECOND)
        return pd.DataFrame({
            "timestamp_ns": np.array(stamps, dtype=np.int64),
            "asset_id": ["A"] * 4,
            "signed_volume": [1.0, -2.0, 3.0, 1.0],
            "price": [100.0, 101.0, 99.0, 100.0],
        })

    def test_round_trip(self):
        """逐笔 CSV 读写"""
        ticks = self._ticks()
        with tempfile.TemporaryDirectory() as tmpdir:
            path = Path(tmpdir) / "ticks.csv"
            write_ticks(ticks, path)
            loaded = load_ticks(path)
        pd.testing.assert_frame_equal(loaded, ticks)

    def test_bars(self):
        """每个交易日一个 episode"""
        bars = bars_from_ticks(self._ticks(), bin_seconds=300, session_seconds=1800)
        assert bars.N == 2 and bars.M == 6
        first_day = bars[0]
        assert first_day.first[0, 0] == 100.0 and first_day.last[0, 0] == 101.0
        assert first_day.signed_volume[0, 0] == -1.0
        assert first_day.signed_volume[1, 0] == 3.0
        assert first_day.volume[0, 0] == 3.0
