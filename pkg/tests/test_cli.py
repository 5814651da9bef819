"""
测试用例 - 命令行入口与退出码
"""
import json
import shutil
import tempfile
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
import yaml

from core.kernels import KernelTensor, ParametricKernel, sample_to_tensor
from core.types import KernelFamily
from main import build_parser, main
from market.transforms import NS_PER_DAY, NS_PER_SECOND


class TestCli:
    """测试各子命令的输出文件与退出码"""

    def setup_method(self):
        self.tmp = Path(tempfile.mkdtemp())

    def teardown_method(self):
        shutil.rmtree(self.tmp, ignore_errors=True)

    def _config(self, payload, name="config.yaml") -> str:
        path = self.tmp / name
        path.write_text(yaml.safe_dump(payload), encoding="utf-8")
        return str(path)

    def _simulate(self, name="sim", **simulate) -> Path:
        out = self.tmp / name
        cfg = self._config({"simulate": {"M": 5, "N": 12, **simulate}}, f"{name}.yaml")
        assert main(["-c", cfg, "-o", str(out), "simulate"]) == 0
        return out

    def test_parser_requires_command(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args([])

    def test_simulate_outputs(self):
        """模拟输出文件齐全，且同一种子结果逐字节一致"""
        first = self._simulate("a")
        second = self._simulate("b")
        for name in ("episodes.csv", "normalized.csv", "truth.json", "truth.csv"):
            assert (first / name).exists()
        assert (first / "normalized.csv").read_bytes() == (second / "normalized.csv").read_bytes()
        truth = KernelTensor.load(first / "truth.json")
        assert truth.M == 5 and truth.d == 1

    def test_simulate_ticks(self):
        out = self.tmp / "ticks"
        cfg = self._config({"simulate": {"M": 5, "N": 3, "ticks": {"n_days": 2, "trades_per_day": 50}}})
        assert main(["-c", cfg, "-o", str(out), "simulate"]) == 0
        assert len(pd.read_csv(out / "ticks.csv")) == 100

    def test_invalid_config(self):
        """越界的凹性参数与未知字段 → 退出码 2"""
        cfg = self._config({"simulate": {"c_S": 1.5}})
        assert main(["-c", cfg, "-o", str(self.tmp / "x"), "simulate"]) == 2
        cfg = self._config({"simulate": {"episodes": 3}}, "unknown.yaml")
        assert main(["-c", cfg, "-o", str(self.tmp / "x"), "simulate"]) == 2

    def test_env_override(self, monkeypatch):
        """PROPLAB_SECTION__KEY 覆盖配置文件"""
        monkeypatch.setenv("PROPLAB_SIMULATE__C_S", "0")
        cfg = self._config({"simulate": {"M": 5, "N": 3}})
        assert main(["-c", cfg, "-o", str(self.tmp / "x"), "simulate"]) == 2

    def test_missing_config_file(self):
        assert main(["-c", str(self.tmp / "nope.yaml"), "simulate"]) == 2

    def test_estimate_with_truth(self):
        """sidecar 带 W-范数误差与投影报告"""
        sim = self._simulate(N=60)
        out = self.tmp / "est"
        code = main(["-o", str(out), "estimate", "--normalized", str(sim / "normalized.csv"),
                     "--truth", str(sim / "truth.json")])
        assert code == 0
        for name in ("raw.json", "raw.csv", "proj.json", "proj.csv"):
            assert (out / name).exists()
        sidecar = json.loads((out / "sidecar.json").read_text(encoding="utf-8"))
        assert set(sidecar["w_norm_error"]) == {"raw", "proj"}
        assert sidecar["projection"]["converged"] is True

    def test_estimate_no_project(self):
        sim = self._simulate()
        out = self.tmp / "est"
        args = ["-o", str(out), "estimate", "--normalized", str(sim / "normalized.csv"), "--no-project"]
        assert main(args) == 0
        assert (out / "raw.json").exists() and not (out / "proj.json").exists()
        assert "projection" not in json.loads((out / "sidecar.json").read_text(encoding="utf-8"))

    def test_estimate_lambda_grid(self):
        """每个 λ 一个子目录"""
        sim = self._simulate()
        out = self.tmp / "est"
        code = main(["-o", str(out), "estimate", "--normalized", str(sim / "normalized.csv"),
                     "--no-project", "--lambda-grid", "0.1,10"])
        assert code == 0
        small = KernelTensor.load(out / "lambda_0" / "raw.json")
        large = KernelTensor.load(out / "lambda_1" / "raw.json")
        assert np.linalg.norm(large.values) < np.linalg.norm(small.values)

    def test_estimate_from_price_episodes(self):
        sim = self._simulate()
        out = self.tmp / "est"
        assert main(["-o", str(out), "estimate", "--data", str(sim / "episodes.csv"), "--no-project"]) == 0

    def test_estimate_missing_input(self):
        """缺少输入 → 配置错误"""
        assert main(["-o", str(self.tmp / "est"), "estimate"]) == 2
        missing = str(self.tmp / "nope.csv")
        assert main(["-o", str(self.tmp / "est"), "estimate", "--normalized", missing]) == 2

    def test_manifest(self):
        sim = self._simulate()
        out = self.tmp / "est"
        code = main(["-o", str(out), "--manifest", "estimate", "--normalized", str(sim / "normalized.csv"),
                     "--no-project"])
        assert code == 0
        manifest = yaml.safe_load((out / "manifest.yaml").read_text(encoding="utf-8"))
        assert manifest["command"] == "estimate"
        (digest,) = manifest["inputs"].values()
        assert len(digest) == 64

    def test_fit(self):
        sim = self._simulate()
        out = self.tmp / "fit"
        cfg = self._config({"fit": {"grid": {"half_lives": [300.0, 1200.0]}}})
        assert main(["-c", cfg, "-o", str(out), "fit", "--normalized", str(sim / "normalized.csv")]) == 0
        params = json.loads((out / "fit_1exp_params.json").read_text(encoding="utf-8"))
        assert params["family"] == "1exp"
        assert (out / "fit_1exp.csv").exists()

    def test_fit_rejects_nonparametric(self):
        sim = self._simulate()
        code = main(["-o", str(self.tmp / "fit"), "fit", "--normalized", str(sim / "normalized.csv"),
                     "--family", "raw"])
        assert code == 2

    def test_evaluate(self):
        """3 个模型 × 2 个步长，每个窗口 6 行"""
        sim = self._simulate()
        out = self.tmp / "eval"
        cfg = self._config({
            "evaluate": {"train_days": 4, "test_days": 4, "grid": {"half_lives": [300.0, 1200.0]}},
        })
        code = main(["-c", cfg, "-o", str(out), "evaluate", "--normalized", str(sim / "normalized.csv"),
                     "--models", "raw,proj,1exp", "--horizons", "1,2"])
        assert code == 0
        report = pd.read_csv(out / "report.csv")
        assert report.groupby("window").size().tolist() == [6, 6, 6]
        summary = json.loads((out / "report_summary.json").read_text(encoding="utf-8"))
        assert len(summary["summary"]) == 6

    def test_evaluate_unknown_model(self):
        sim = self._simulate()
        code = main(["-o", str(self.tmp / "eval"), "evaluate", "--normalized", str(sim / "normalized.csv"),
                     "--models", "bogus"])
        assert code == 2

    def test_sweep(self):
        sim = self._simulate(N=40)
        out = self.tmp / "sweep"
        code = main(["-o", str(out), "sweep", "--normalized", str(sim / "normalized.csv"),
                     "--c-grid", "0.3,0.5,0.8", "--fix", "c_X"])
        assert code == 0
        frame = pd.read_csv(out / "sweep.csv")
        assert frame["c"].tolist() == [0.3, 0.5, 0.8]
        assert frame["r2_normalized"].max() == pytest.approx(1.0)

    def test_proxy_with_ids_file(self):
        """外部编号文件：十笔成交的母单编号"""
        day = pd.Timestamp("2020-01-01").value // NS_PER_DAY
        seconds = 36_300 + np.arange(10)
        ticks = pd.DataFrame({
            "timestamp_ns": day * NS_PER_DAY + seconds * NS_PER_SECOND,
            "asset_id": "A",
            "signed_volume": [-1, -1, -1, -1, 1, 1, -1, -1, -1, 1],
            "price": 100.0 + 0.01 * np.arange(10),
        })
        ticks_path = self.tmp / "ticks.csv"
        ticks.to_csv(ticks_path, index=False)
        ids_path = self.tmp / "ids.csv"
        pd.DataFrame({"trader_id": [0, 1, 2, 0, 2, 3, 1, 3, 0, 1]}).to_csv(ids_path, index=False)
        cfg = self._config({"proxy": {"min_children": 1, "fit": False}})
        out = self.tmp / "proxy"
        code = main(
            ["-c", cfg, "-o", str(out), "proxy", "--ticks", str(ticks_path), "--ids-file", str(ids_path)]
        )
        assert code == 0
        labeled = pd.read_csv(out / "ticks_labeled.csv")
        assert labeled["metaorder_id"].tolist() == [1, 2, 3, 1, 4, 5, 2, 6, 1, 7]
        assert len(pd.read_csv(out / "metaorders.csv")) == 7
        assert (out / "metaorder_episodes.csv").exists()
        for name in ("ticks_labeled.csv", "metaorders.csv", "metaorder_episodes.csv"):
            assert b"\r\n" not in (out / name).read_bytes()

    def test_manipulate(self):
        """凹冲击 + 幂律核 → 负成本往返"""
        kernel = ParametricKernel(KernelFamily.POWER, Y=1.0, beta=0.5, tau=300.0)
        path = self.tmp / "kernel.json"
        sample_to_tensor(kernel, 300, 10).to_json(path)
        out = self.tmp / "man"
        assert main(["-o", str(out), "manipulate", "--kernel", str(path), "--c", "0.5"]) == 0
        schedule = pd.read_csv(out / "schedule.csv")
        assert list(schedule.columns) == ["time", "volume"]
        assert len(schedule) == 3
        meta = json.loads((out / "schedule.json").read_text(encoding="utf-8"))
        assert meta["cost"] < 0

    def test_manipulate_multi_asset(self):
        """多资产核 → 运行时错误"""
        path = self.tmp / "kernel.json"
        KernelTensor(np.ones((3, 2, 2)), bin_seconds=300).to_json(path)
        assert main(["-o", str(self.tmp / "man"), "manipulate", "--kernel", str(path)]) == 3
