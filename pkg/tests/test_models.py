import numpy as np
import pytest

from gradcases import REDUCED, model_case
from letterdec import nn
from letterdec.models import (ARCHITECTURES, DepthAttention, ModelBuildError, ModelConfig, build_model,
                              forward_logits)
from letterdec.nn import Tensor

BLOCKS = {
    "DeepConvNet": ["temporal", "spatial", "block1", "block2"],
    "EEGNet": ["temporal", "spatial", "separable"],
    "EEGInception": ["inception1", "inception2", "block1", "block2"],
    "LMDA": ["channel_attention", "temporal", "depth_attention", "spatial"],
}


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_default_forward_shape(arch):
    m = build_model(ModelConfig.for_arch(arch), seed=0)
    x = np.random.default_rng(0).standard_normal((3, 1, 24, 400)).astype(np.float32)
    m.eval()
    out = forward_logits(m, x)
    assert out.shape == (3, 26) and out.dtype == np.float32
    assert m.block_names == BLOCKS[arch]


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_summary(arch):
    m = build_model(ModelConfig.for_arch(arch), seed=0)
    s = m.summary()
    assert [l.name for l in s.layers] == BLOCKS[arch] + ["head"]
    assert s.output_shape == (1, 26)
    assert s.total_params == sum(l.n_params for l in s.layers) == m.n_parameters()
    d = s.to_dict()
    assert d["arch"] == arch and d["layers"][-1]["output_shape"] == [1, 26]


def test_inception_kernels_reported():
    s = build_model(ModelConfig.for_arch("EEGInception")).summary().to_dict()
    assert s["layers"][0]["detail"]["kernels"] == [25, 12, 6]


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_same_seed_same_weights(arch):
    cfg = ModelConfig.for_arch(arch)
    a, b, c = build_model(cfg, 3), build_model(cfg, 3), build_model(cfg, 4)
    wa = b"".join(p.data.tobytes() for p in a.parameters())
    assert wa == b"".join(p.data.tobytes() for p in b.parameters())
    assert wa != b"".join(p.data.tobytes() for p in c.parameters())


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_dropout_reseed_deterministic(arch):
    cfg = ModelConfig.for_arch(arch, n_channels=6, n_timepoints=128, **REDUCED[arch])
    m = build_model(cfg, 0)
    x = Tensor(np.random.default_rng(1).standard_normal((4, 1, 6, 128)).astype(np.float32))
    m.train()
    m.reseed_dropout(5)
    y1 = m(x).data
    m.reseed_dropout(5)
    y2 = m(x).data
    np.testing.assert_array_equal(y1, y2)


@pytest.mark.parametrize("arch", ARCHITECTURES)
def test_small_model_gradient(arch):
    fn, params = model_case(arch, C=6, T=128, batch=3)
    assert nn.gradient_check(fn, params, n_coords=60) < 1e-3


def test_forward_logits_shape_check():
    m = build_model(ModelConfig.for_arch("EEGNet"))
    with pytest.raises(ValueError, match="expected input"):
        forward_logits(m, np.zeros((1, 1, 23, 400), np.float32))


def test_config_validation():
    with pytest.raises(ModelBuildError, match="unknown architecture"):
        ModelConfig.for_arch("ResNet")
    with pytest.raises(ModelBuildError, match="n_classes"):
        ModelConfig.for_arch("EEGNet", n_classes=10)
    with pytest.raises(ModelBuildError, match="kernel length"):
        ModelConfig.for_arch("EEGNet", n_timepoints=10)
    with pytest.raises(ModelBuildError):
        build_model(ModelConfig.for_arch("DeepConvNet", block_filters=(8,)))


def test_collapsed_feature_map():
    with pytest.raises(ModelBuildError):
        build_model(ModelConfig.for_arch("DeepConvNet", n_timepoints=40, temporal_kernels=(4,),
                                         block_kernels=(4, 4)))


def test_depth_attention_weights_sum_to_one():
    rng = np.random.default_rng(0)
    da = DepthAttention(5, 3, rng)
    da(Tensor(rng.standard_normal((2, 5, 3, 7)).astype(np.float32)))
    np.testing.assert_allclose(da.last_weights.sum(axis=1), 1.0, rtol=1e-5)


def test_config_dict_round_trip():
    cfg = ModelConfig.for_arch("LMDA", ca_depth=4)
    d = cfg.to_dict()
    assert ModelConfig.for_arch(d.pop("arch"), **d) == cfg
