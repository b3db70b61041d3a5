import pytest
import torch

from burncast.catalog import (
    IGNITION_DAY_2D,
    STACKED_2D,
    VOLUMETRIC_3D,
    TemporalWindow,
    channel_layout,
    default_catalog,
)
from burncast.models import (
    ModelConfig,
    allowed_layouts,
    build_model,
    describe,
    load_checkpoint,
    num_parameters,
    predict_mask,
    save_checkpoint,
)
from burncast.samples import CatalogMismatchError

SMALL = dict(base_width=4, levels=2, dropout=0.0)
VIT_SMALL = dict(embed_dim=32, vit_depth=1, n_heads=2, dropout=0.0)


@pytest.fixture(scope="module")
def layouts():
    catalog = default_catalog()
    window = TemporalWindow(4, 5)
    return {
        mode: channel_layout(catalog, window, mode)
        for mode in (STACKED_2D, IGNITION_DAY_2D, VOLUMETRIC_3D)
    }


class TestModelConfig:
    def test_for_layout_derives_channels(self, layouts):
        cfg = ModelConfig.for_layout("unet2d", layouts[STACKED_2D])
        assert cfg.in_channels == 152
        cfg = ModelConfig.for_layout("unet2d", layouts[IGNITION_DAY_2D])
        assert cfg.in_channels == 26
        cfg = ModelConfig.for_layout("unet3d", layouts[VOLUMETRIC_3D])
        assert cfg.in_channels == 26
        assert cfg.time_depth == 10

    def test_arch_layout_compatibility(self, layouts):
        with pytest.raises(ValueError, match="does not accept"):
            ModelConfig.for_layout("unet3d", layouts[STACKED_2D])
        with pytest.raises(ValueError, match="does not accept"):
            ModelConfig.for_layout("unet2d", layouts[VOLUMETRIC_3D])
        with pytest.raises(ValueError, match="does not accept"):
            ModelConfig.for_layout("vit", layouts[VOLUMETRIC_3D])

    def test_allowed_layouts(self):
        assert VOLUMETRIC_3D in allowed_layouts("unet3d")
        assert STACKED_2D in allowed_layouts("unet2d")
        assert IGNITION_DAY_2D in allowed_layouts("vit")
        with pytest.raises(ValueError):
            allowed_layouts("resnet")

    def test_rejects_bad_settings(self):
        with pytest.raises(ValueError):
            ModelConfig(arch="unet3d")  # missing time_depth
        with pytest.raises(ValueError):
            ModelConfig(arch="mlp")
        with pytest.raises(ValueError):
            ModelConfig(levels=0)

    def test_dict_round_trip(self):
        cfg = ModelConfig(arch="unet3d", in_channels=26, time_depth=10, base_width=8)
        assert ModelConfig.from_dict(cfg.to_dict()) == cfg


class TestForwardShapes:
    def test_unet2d(self, layouts):
        cfg = ModelConfig.for_layout("unet2d", layouts[STACKED_2D], **SMALL)
        model = build_model(cfg)
        out = model(torch.randn(2, 152, 64, 64))
        assert out.shape == (2, 1, 64, 64)

    def test_unet2d_ignition_day(self, layouts):
        cfg = ModelConfig.for_layout("unet2d", layouts[IGNITION_DAY_2D], **SMALL)
        out = build_model(cfg)(torch.randn(3, 26, 64, 64))
        assert out.shape == (3, 1, 64, 64)

    def test_unet3d(self, layouts):
        cfg = ModelConfig.for_layout("unet3d", layouts[VOLUMETRIC_3D], **SMALL)
        out = build_model(cfg)(torch.randn(2, 26, 10, 64, 64))
        assert out.shape == (2, 1, 64, 64)

    def test_unet3d_pool_head(self, layouts):
        cfg = ModelConfig.for_layout(
            "unet3d", layouts[VOLUMETRIC_3D], time_head="pool", **SMALL
        )
        out = build_model(cfg)(torch.randn(1, 26, 10, 64, 64))
        assert out.shape == (1, 1, 64, 64)

    def test_unet3d_truncated_window(self, layouts):
        catalog = default_catalog()
        short = channel_layout(catalog, TemporalWindow(4, 1), VOLUMETRIC_3D)
        cfg = ModelConfig.for_layout("unet3d", short, **SMALL)
        assert cfg.time_depth == 6
        out = build_model(cfg)(torch.randn(1, 26, 6, 64, 64))
        assert out.shape == (1, 1, 64, 64)

    def test_vit_token_linear(self, layouts):
        cfg = ModelConfig.for_layout(
            "vit", layouts[STACKED_2D], vit_head="token_linear", **VIT_SMALL
        )
        out = build_model(cfg)(torch.randn(2, 152, 64, 64))
        assert out.shape == (2, 1, 64, 64)

    def test_vit_upsample_head(self, layouts):
        cfg = ModelConfig.for_layout(
            "vit", layouts[IGNITION_DAY_2D], vit_head="upsample", **VIT_SMALL
        )
        out = build_model(cfg)(torch.randn(2, 26, 64, 64))
        assert out.shape == (2, 1, 64, 64)

    def test_input_validation(self, layouts):
        cfg = ModelConfig.for_layout("unet2d", layouts[STACKED_2D], **SMALL)
        model = build_model(cfg)
        with pytest.raises(ValueError, match="input channels"):
            model(torch.randn(1, 26, 64, 64))
        with pytest.raises(ValueError, match="4-D"):
            model(torch.randn(1, 152, 10, 64, 64))
        cfg3 = ModelConfig.for_layout("unet3d", layouts[VOLUMETRIC_3D], **SMALL)
        with pytest.raises(ValueError, match="time steps"):
            build_model(cfg3)(torch.randn(1, 26, 9, 64, 64))
        vit = build_model(ModelConfig.for_layout("vit", layouts[STACKED_2D], **VIT_SMALL))
        with pytest.raises(ValueError, match="64x64"):
            vit(torch.randn(1, 152, 32, 32))


class TestDeterminismAndHeads:
    def test_same_seed_same_weights(self, layouts):
        cfg = ModelConfig.for_layout("unet2d", layouts[STACKED_2D], **SMALL)
        a, b = build_model(cfg), build_model(cfg)
        for pa, pb in zip(a.parameters(), b.parameters()):
            assert torch.equal(pa, pb)

    def test_different_seed_differs(self, layouts):
        cfg = ModelConfig.for_layout("unet2d", layouts[STACKED_2D], **SMALL)
        other = ModelConfig.for_layout("unet2d", layouts[STACKED_2D], seed=1, **SMALL)
        a, b = build_model(cfg), build_model(other)
        assert any(
            not torch.equal(pa, pb) for pa, pb in zip(a.parameters(), b.parameters())
        )

    def test_predict_mask_binary(self, layouts):
        cfg = ModelConfig.for_layout("unet2d", layouts[IGNITION_DAY_2D], **SMALL)
        masks = predict_mask(build_model(cfg), torch.randn(2, 26, 64, 64))
        assert masks.shape == (2, 64, 64)
        assert masks.dtype == torch.uint8
        assert set(masks.unique().tolist()) <= {0, 1}

    def test_describe_reports_config(self, layouts):
        cfg = ModelConfig.for_layout("vit", layouts[STACKED_2D], **VIT_SMALL)
        model = build_model(cfg)
        info = describe(model)
        assert info["class"] == "ViTSegmenter"
        assert info["n_parameters"] == num_parameters(model)
        assert info["config"]["embed_dim"] == 32

    def test_circular_padding_translation_equivariance(self, layouts):
        # with circular padding and stride-4 total pooling, a 4-px roll of the
        # input must roll the logits by the same amount
        cfg = ModelConfig.for_layout(
            "unet2d", layouts[IGNITION_DAY_2D],
            base_width=4, levels=2, dropout=0.0, padding_mode="circular",
        )
        model = build_model(cfg).eval()
        x = torch.randn(1, 26, 64, 64)
        with torch.no_grad():
            base = model(x)
            rolled = model(torch.roll(x, shifts=(4, 8), dims=(2, 3)))
        assert torch.allclose(
            rolled, torch.roll(base, shifts=(4, 8), dims=(2, 3)), atol=1e-4
        )


class TestCheckpoints:
    def test_round_trip(self, tmp_path, layouts):
        cfg = ModelConfig.for_layout("unet3d", layouts[VOLUMETRIC_3D], **SMALL)
        model = build_model(cfg)
        hash_ = default_catalog().version_hash
        path = tmp_path / "model.pt"
        save_checkpoint(path, model, cfg, hash_, extra={"note": "smoke"})
        loaded, loaded_cfg, extra = load_checkpoint(path, expected_catalog_hash=hash_)
        assert loaded_cfg == cfg
        assert extra == {"note": "smoke"}
        for pa, pb in zip(model.parameters(), loaded.parameters()):
            assert torch.equal(pa, pb)
        x = torch.randn(1, 26, 10, 64, 64)
        model.eval()
        with torch.no_grad():
            assert torch.equal(model(x), loaded(x))

    def test_refuses_catalog_mismatch(self, tmp_path, layouts):
        cfg = ModelConfig.for_layout("unet2d", layouts[STACKED_2D], **SMALL)
        path = tmp_path / "model.pt"
        save_checkpoint(path, build_model(cfg), cfg, "aaaa111122223333")
        with pytest.raises(CatalogMismatchError):
            load_checkpoint(path, expected_catalog_hash="ffff000011112222")

    def test_loads_without_hash_check(self, tmp_path, layouts):
        cfg = ModelConfig.for_layout("unet2d", layouts[IGNITION_DAY_2D], **SMALL)
        path = tmp_path / "model.pt"
        save_checkpoint(path, build_model(cfg), cfg, "aaaa111122223333")
        model, _, _ = load_checkpoint(path)
        assert model(torch.randn(1, 26, 64, 64)).shape == (1, 1, 64, 64)


def _batch_for(arch, layouts):
    if arch == "unet3d":
        cfg = ModelConfig.for_layout(arch, layouts[VOLUMETRIC_3D], **SMALL)
        x = torch.randn(2, 26, 10, 64, 64)
    elif arch == "vit":
        cfg = ModelConfig.for_layout(arch, layouts[STACKED_2D], **VIT_SMALL)
        x = torch.randn(2, 152, 64, 64)
    else:
        cfg = ModelConfig.for_layout(arch, layouts[STACKED_2D], **SMALL)
        x = torch.randn(2, 152, 64, 64)
    return cfg, x


class TestTrainability:
    @pytest.mark.parametrize("arch", ["unet2d", "unet3d", "vit"])
    def test_finite_outputs_at_init(self, arch, layouts):
        torch.manual_seed(7)
        cfg, x = _batch_for(arch, layouts)
        out = build_model(cfg)(x)
        assert torch.isfinite(out).all()

    @pytest.mark.parametrize("arch", ["unet2d", "unet3d", "vit"])
    def test_gradient_reaches_every_parameter(self, arch, layouts):
        # no dead branches: one backward pass touches every tensor
        from burncast.objective import bce_dice_loss

        torch.manual_seed(7)
        cfg, x = _batch_for(arch, layouts)
        model = build_model(cfg)
        model.train()
        target = (torch.rand(x.shape[0], 1, 64, 64) < 0.3).float()
        bce_dice_loss(model(x), target).backward()
        dead = [
            name
            for name, p in model.named_parameters()
            if p.grad is None or not p.grad.abs().max() > 0
        ]
        assert not dead, f"parameters with no gradient: {dead}"


class TestStructure:
    def test_default_unet_is_shallower_than_classic(self, layouts):
        cfg = ModelConfig.for_layout("unet2d", layouts[STACKED_2D])
        info = describe(build_model(cfg))
        assert info["config"]["levels"] == 2 < 4

    def test_vit_token_count(self, layouts):
        cfg = ModelConfig.for_layout("vit", layouts[STACKED_2D], **VIT_SMALL)
        model = build_model(cfg)
        assert model.pos.shape[1] == (64 // cfg.patch_size) ** 2
