import copy

import pytest
import torch

from anemiascreen.errors import ConfigurationError, PretrainedWeightsUnavailable
from anemiascreen.modeling import (
    HeadConfig, build_model, head_parameter_count, load_checkpoint, parameter_groups,
    save_checkpoint, set_backbone_trainable,
)
from anemiascreen.training import LossConfig, smoothed_weighted_ce


@pytest.fixture(scope="module")
def b0():
    torch.manual_seed(0)
    return build_model("b0")


def test_head_parameter_count_b3_closed_form():
    # oracle: layer-by-layer arithmetic from the head dims
    # Linear(1536,512)+bias, BN(512) weight+bias, Linear(512,256)+bias,
    # BN(256) weight+bias, Linear(256,2)+bias
    expected = (1536 * 512 + 512) + 2 * 512 + (512 * 256 + 256) + 2 * 256 + (256 * 2 + 2)
    assert expected == 920_322
    assert head_parameter_count(1536, HeadConfig()) == expected

    torch.manual_seed(0)
    bundle = build_model("b3")
    actual = sum(p.numel() for p in bundle.head.parameters())
    assert actual == expected


def test_head_parameter_count_b0(b0):
    expected = (1280 * 512 + 512) + 2 * 512 + (512 * 256 + 256) + 2 * 256 + (256 * 2 + 2)
    assert sum(p.numel() for p in b0.head.parameters()) == expected
    assert b0.head_config.in_dim == 1280


def test_logits_shape(b0):
    b0.network.eval()
    with torch.no_grad():
        out = b0.network(torch.randn(4, 3, 300, 300))
    assert out.shape == (4, 2)


def test_eval_mode_deterministic(b0):
    b0.network.eval()
    x = torch.randn(2, 3, 128, 128, generator=torch.Generator().manual_seed(1))
    with torch.no_grad():
        assert torch.equal(b0.network(x), b0.network(x))


def test_softmax_sums_to_one(b0):
    b0.network.eval()
    with torch.no_grad():
        probs = torch.softmax(b0.network(torch.randn(8, 3, 96, 96)), dim=1)
    assert torch.allclose(probs.sum(dim=1), torch.ones(8), atol=1e-6)


def test_unknown_variant_rejected():
    with pytest.raises(ConfigurationError):
        build_model("b7")


def test_pretrained_unavailable_raises():
    # no weight cache and no network in this environment: must fail loudly,
    # never fall back to random init
    with pytest.raises(PretrainedWeightsUnavailable):
        build_model("b0", pretrained=True)


def _train_step(bundle, x, y):
    groups = parameter_groups(bundle, base_lr=1e-2)
    opt = torch.optim.SGD(groups)
    loss = smoothed_weighted_ce(bundle.network(x), y, LossConfig())
    opt.zero_grad()
    loss.backward()
    opt.step()


def test_frozen_backbone_unchanged_by_step():
    torch.manual_seed(1)
    bundle = build_model("b0")
    set_backbone_trainable(bundle, False)
    before = copy.deepcopy({n: p.detach().clone() for n, p in bundle.backbone.named_parameters()})
    head_before = {n: p.detach().clone() for n, p in bundle.head.named_parameters()}
    bundle.network.train()
    _train_step(bundle, torch.randn(4, 3, 96, 96), torch.tensor([0, 1, 0, 1]))
    for n, p in bundle.backbone.named_parameters():
        assert torch.equal(p, before[n]), f"frozen backbone parameter {n} changed"
    assert any(not torch.equal(p, head_before[n]) for n, p in bundle.head.named_parameters())


def test_unfreeze_enables_backbone_updates():
    torch.manual_seed(2)
    bundle = build_model("b0")
    set_backbone_trainable(bundle, False)
    set_backbone_trainable(bundle, True)
    before = {n: p.detach().clone() for n, p in bundle.backbone.named_parameters()}
    bundle.network.train()
    _train_step(bundle, torch.randn(4, 3, 96, 96), torch.tensor([0, 1, 1, 0]))
    assert any(not torch.equal(p, before[n]) for n, p in bundle.backbone.named_parameters())


def test_toggle_twice_restores_flags(b0):
    original = [p.requires_grad for p in b0.network.parameters()]
    set_backbone_trainable(b0, False)
    set_backbone_trainable(b0, True)
    assert [p.requires_grad for p in b0.network.parameters()] == original


def test_parameter_groups_partition(b0):
    groups = parameter_groups(b0, base_lr=1e-3)
    assert groups[0]["lr"] == pytest.approx(1e-3)
    assert groups[1]["lr"] == pytest.approx(1e-4)
    head_ids = {id(p) for p in groups[0]["params"]}
    backbone_ids = {id(p) for p in groups[1]["params"]}
    all_ids = {id(p) for p in b0.network.parameters()}
    assert head_ids | backbone_ids == all_ids
    assert not (head_ids & backbone_ids)


def test_parameter_groups_unit_factor(b0):
    groups = parameter_groups(b0, base_lr=5e-4, backbone_factor=1.0)
    assert groups[0]["lr"] == groups[1]["lr"] == pytest.approx(5e-4)


def test_parameter_groups_bad_factor(b0):
    with pytest.raises(ConfigurationError):
        parameter_groups(b0, base_lr=1e-3, backbone_factor=0.0)


def test_head_gradient_matches_finite_differences():
    """Analytic grad of the loss w.r.t. sampled head weights vs central differences."""
    torch.manual_seed(3)
    bundle = build_model("b0")
    set_backbone_trainable(bundle, False)
    net = bundle.network.double().eval()
    x = torch.randn(2, 3, 64, 64, dtype=torch.float64)
    y = torch.tensor([0, 1])
    cfg = LossConfig(smoothing=0.1)

    loss = smoothed_weighted_ce(net(x), y, cfg)
    loss.backward()

    first_linear = bundle.head[0]
    for idx in [(0, 0), (3, 100), (250, 7)]:
        analytic = float(first_linear.weight.grad[idx])
        with torch.no_grad():
            orig = float(first_linear.weight[idx])
            h = 1e-5
            first_linear.weight[idx] = orig + h
            up = float(smoothed_weighted_ce(net(x), y, cfg))
            first_linear.weight[idx] = orig - h
            down = float(smoothed_weighted_ce(net(x), y, cfg))
            first_linear.weight[idx] = orig
        fd = (up - down) / (2 * h)
        scale = max(abs(analytic), abs(fd), 1e-8)
        assert abs(analytic - fd) / scale < 1e-3


def test_checkpoint_roundtrip(tmp_path, b0):
    path = tmp_path / "ck.pt"
    save_checkpoint(b0, path, val_acc=0.91, epoch=4)
    loaded, sidecar = load_checkpoint(path)
    assert sidecar["val_acc"] == pytest.approx(0.91)
    assert sidecar["epoch"] == 4
    assert loaded.variant == "b0"
    assert loaded.version.endswith("-e4")
    x = torch.randn(1, 3, 96, 96, generator=torch.Generator().manual_seed(0))
    b0.network.eval()
    with torch.no_grad():
        assert torch.allclose(b0.network(x), loaded.network(x))
