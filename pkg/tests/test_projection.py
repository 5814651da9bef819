"""
测试用例 - 可容许锥投影与稠密验证器
"""
import numpy as np
import pytest

from core.errors import EstimationError
from core.kernels import KernelTensor, admissibility_check
from estimator import gram_from_episodes, solve_ridge
from market.data import NormalizedEpisode
from projection import (
    ORACLE_SIZE_CAP, ProjectionSettings, constraint_operator, project, project_blocks,
    project_dense_oracle, psd_clip, w_objective,
)


def _random_W(n: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.normal(size=(n, n))
    return A.T @ A / n + 0.5 * np.eye(n)


def _w_norm(W: np.ndarray, v: np.ndarray) -> float:
    return float(np.sqrt(v @ W @ v))


class TestPsdClip:
    """测试半正定截断"""

    def test_fixed_point(self):
        """半正定输入不变"""
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        np.testing.assert_allclose(psd_clip(A), A, atol=1e-12)

    def test_diagonal(self):
        """diag(1, −2) → diag(1, 0)"""
        np.testing.assert_allclose(psd_clip(np.diag([1.0, -2.0])), np.diag([1.0, 0.0]), atol=1e-12)

    def test_idempotent(self):
        """两次截断等于一次"""
        A = np.random.default_rng(0).normal(size=(3, 3))
        once = psd_clip(A)
        np.testing.assert_allclose(psd_clip(once), once, atol=1e-12)
        assert np.linalg.eigvalsh(once).min() >= -1e-12

    def test_blocks_keep_skew_part(self):
        """非对称块保留反对称部分"""
        Z = np.array([[[1.0, 2.0], [0.0, 1.0]]])
        out = project_blocks(Z)
        np.testing.assert_allclose(out - out.transpose(0, 2, 1), Z - Z.transpose(0, 2, 1))
        np.testing.assert_allclose(project_blocks(np.array([[[-1.0]], [[2.0]]]))[:, 0, 0], [0.0, 2.0])


class TestConstraintOperator:
    """测试约束算子"""

    def test_rows(self):
        """d=1, M=3：G_i, G_i−G_{i+1}, G_0−2G_1+G_2"""
        C = constraint_operator(3, 1).toarray()
        expected = np.array([
            [1, 0, 0], [0, 1, 0], [0, 0, 1],
            [1, -1, 0], [0, 1, -1],
            [1, -2, 1],
        ], dtype=float)
        np.testing.assert_array_equal(C, expected)


class TestDenseOracle:
    """测试稠密验证器"""

    def test_negative_vector(self):
        """[−1, −1, −1] → 0"""
        G = project_dense_oracle(KernelTensor(np.array([-1.0, -1.0, -1.0])), np.eye(3))
        np.testing.assert_allclose(G.values[:, 0, 0], 0.0, atol=1e-10)

    def test_increasing_pair(self):
        """[1, 2] → [1.5, 1.5]"""
        G = project_dense_oracle(KernelTensor(np.array([1.0, 2.0])), np.eye(2))
        np.testing.assert_allclose(G.values[:, 0, 0], [1.5, 1.5], atol=1e-10)
        assert G.metadata["kkt_residual"] <= 1e-9

    def test_size_cap(self):
        """超出规模上限报错"""
        M = ORACLE_SIZE_CAP // 4 + 1
        with pytest.raises(EstimationError):
            project_dense_oracle(KernelTensor.zeros(M, 2), np.eye(M * 4))


class TestProject:
    """测试 ADMM 投影"""

    def test_cone_point_is_fixed(self):
        """G̃ 已可容许 → 原样返回"""
        G_raw = KernelTensor(np.array([3.0, 2.0, 1.5, 1.2]))
        result = project(G_raw, np.eye(4))
        np.testing.assert_allclose(result.G_proj.values, G_raw.values, atol=1e-10)
        assert result.objective < 1e-12
        assert result.iterations == 1 and result.converged

    def test_matches_oracle_identity(self):
        """d=1, W=I, G̃=[1, 2, 0.5]"""
        G_raw = KernelTensor(np.array([1.0, 2.0, 0.5]))
        result = project(G_raw, np.eye(3))
        oracle = project_dense_oracle(G_raw, np.eye(3))
        np.testing.assert_allclose(result.G_proj.values, oracle.values, atol=1e-6)

    def test_random_instances_agree_with_oracle(self):
        """30 个随机 d=1, M≤5 实例：解与目标值一致，结果可容许"""
        rng = np.random.default_rng(1)
        for _ in range(30):
            M = int(rng.integers(2, 6))
            W = _random_W(M, rng)
            G_raw = KernelTensor(rng.normal(size=M))
            result = project(G_raw, W)
            oracle = project_dense_oracle(G_raw, W)
            assert result.converged
            np.testing.assert_allclose(result.G_proj.values, oracle.values, atol=1e-5)
            target = w_objective(oracle, G_raw, W)
            assert result.objective == pytest.approx(target, rel=1e-6, abs=1e-9)
            assert admissibility_check(result.G_proj, tol=1e-8)

    def test_feasible_two_assets(self):
        """d=2 收敛结果通过可容许性检查"""
        rng = np.random.default_rng(2)
        G_raw = KernelTensor(rng.normal(size=(4, 2, 2)))
        result = project(G_raw, _random_W(16, rng))
        assert result.converged
        assert admissibility_check(result.G_proj, tol=1e-8)

    def test_symmetric_flag(self):
        """symmetry_flag 时投影结果对称"""
        rng = np.random.default_rng(3)
        G_raw = KernelTensor(rng.normal(size=(3, 2, 2)))
        result = project(G_raw, np.eye(12), ProjectionSettings(symmetry_flag=True))
        values = result.G_proj.values
        np.testing.assert_allclose(values, values.transpose(0, 2, 1), atol=1e-6)

    def test_positive_homogeneity(self):
        """P(αG̃) = α·P(G̃)"""
        rng = np.random.default_rng(4)
        W = _random_W(4, rng)
        G_raw = KernelTensor(rng.normal(size=4))
        base = project(G_raw, W).G_proj.values
        scaled = project(G_raw.scale(3.0), W).G_proj.values
        np.testing.assert_allclose(scaled, 3.0 * base, atol=1e-5)

    def test_non_expansive(self):
        """W 度量下非扩张"""
        rng = np.random.default_rng(5)
        W = _random_W(4, rng)
        for _ in range(5):
            x = KernelTensor(rng.normal(size=4))
            y = KernelTensor(rng.normal(size=4))
            px = project(x, W).G_proj.vec()
            py = project(y, W).G_proj.vec()
            assert _w_norm(W, px - py) <= _w_norm(W, x.vec() - y.vec()) + 1e-6

    def test_accepts_gram_state(self):
        """直接用累加状态作为 W"""
        rng = np.random.default_rng(6)
        episodes = [NormalizedEpisode(f"e{i}", rng.normal(size=(3, 1)), rng.normal(size=(3, 1)))
                    for i in range(6)]
        state = gram_from_episodes(episodes, 0.5, 0.5, lam=0.1)
        G_raw = solve_ridge(state).G_raw
        from_state = project(G_raw, state)
        from_dense = project(G_raw, state.W)
        np.testing.assert_allclose(from_state.G_proj.values, from_dense.G_proj.values)

    def test_wrong_shape(self):
        """W 尺寸不符报错"""
        with pytest.raises(EstimationError):
            project(KernelTensor(np.ones(3)), np.eye(4))

    def test_not_converged_returns_best(self):
        """迭代上限内未收敛时仍返回最佳迭代"""
        rng = np.random.default_rng(7)
        G_raw = KernelTensor(rng.normal(size=(5, 2, 2)))
        result = project(G_raw, _random_W(20, rng), ProjectionSettings(max_iter=2))
        assert not result.converged
        assert result.iterations == 2
        assert np.all(np.isfinite(result.G_proj.values))
