# SPDX-License-Identifier: Apache-2.0
import json
import subprocess

import numpy as np
import pytest

import text2shape as t2s


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("prims")
    manifest = t2s.generate_primitives(out, resolution=8, samples=2, shapes=[0, 3], colors=[0, 6], sizes=[4, 8])
    return manifest


def test_manifest_and_grids(dataset):
    records = t2s.read_manifest(dataset)
    assert len(records) == 2 * 2 * 2 * 2
    grid = t2s.read_grid(dataset.parent / records[0]["voxel_path"])
    assert grid.shape == (8, 8, 8, 4)
    assert grid.dtype == np.float32
    assert 0.0 <= grid.min() and grid.max() <= 1.0
    assert grid[..., 0].sum() > 0


def test_grid_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    grid = rng.uniform(size=(3, 4, 5, 4)).astype(np.float32)
    t2s.write_grid(grid, tmp_path / "g.t2sv")
    np.testing.assert_array_equal(t2s.read_grid(tmp_path / "g.t2sv"), grid)
    with pytest.raises(t2s.ShapeError):
        t2s.write_grid(grid[..., :3], tmp_path / "bad.t2sv")


def test_iou_and_color_emd():
    grid = np.zeros((4, 4, 4, 4), dtype=np.float32)
    grid[1:3, 1:3, 1:3] = [1.0, 0.9, 0.1, 0.1]
    assert t2s.iou(grid, grid) == 1.0
    assert t2s.color_emd(grid, grid) == 0.0
    assert t2s.color_emd(grid, np.zeros_like(grid)) is None


def test_knn_and_retrieval_metrics():
    index = np.array([[1.0, 0.0], [0.0, 1.0], [0.7, 0.7]])
    assert t2s.knn(np.array([1.0, 0.1]), index, 2) == [0, 2]
    assert t2s.knn(np.array([1.0, 0.1]), index, 2, exclude=0) == [2, 1]
    metrics = t2s.evaluate_retrieval(index, [0, 1, 2], index, [0, 1, 2], ks=[1])
    assert metrics["rr@1"] == 1.0


def test_cli_checkpoint_in_python(dataset, tmp_path, t2s_cli):
    ckpt = tmp_path / "emb.t2ck"
    subprocess.run(
        [t2s_cli, "train-embedding", "--data", str(dataset), "--split", "", "--min-count", "1",
         "--out", str(ckpt), "--steps", "5", "--shapes-per-batch", "4", "--embed-dim", "8",
         "--word-dim", "8", "--mlp-hidden", "8"],
        check=True, capture_output=True, cwd=tmp_path,
    )
    model = t2s.EmbeddingModel.load(ckpt)
    texts = model.embed_texts(["a red box", "a blue cone"])
    assert texts.shape == (2, model.embed_dim)
    records = t2s.read_manifest(dataset)
    grids = [t2s.read_grid(dataset.parent / r["voxel_path"]) for r in records[:3]]
    shapes = model.embed_shapes(grids)
    assert shapes.shape == (3, 8)
    assert np.isfinite(shapes).all()
