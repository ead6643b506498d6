"""Config loading: YAML roundtrip, env and --set overrides, validation."""

import pytest
import yaml

from gaitflow.config import (PipelineConfig, apply_env_overrides,
                             apply_set_overrides, config_from_dict,
                             config_to_dict, load_config, save_config)
from gaitflow.errors import ConfigError
from gaitflow.posepatch import PART_ORDER


def write_cfg(tmp_path, data=None, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data or {}))
    return path


class TestRoundtrip:
    def test_defaults_validate(self):
        cfg = PipelineConfig().validate()
        assert cfg.patches.parts == list(PART_ORDER)
        assert cfg.descriptor.fusion == "concat"
        assert cfg.data.gallery_videos == ["n00", "n01", "n02", "n03"]

    def test_yaml_roundtrip_lossless(self, tmp_path):
        cfg = PipelineConfig(seed=7)
        cfg.train.learning_rate = 0.025
        cfg.descriptor.pca_dim = 32
        cfg.data.train_subjects = ["s00", "s01"]
        path = tmp_path / "out.yaml"
        save_config(path, cfg)
        again = load_config(path, environ={})
        assert config_to_dict(again) == config_to_dict(cfg)

    def test_empty_file_gives_defaults(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("")
        cfg = load_config(path, environ={})
        assert config_to_dict(cfg) == config_to_dict(PipelineConfig())

    def test_partial_sections_fill_defaults(self, tmp_path):
        path = write_cfg(tmp_path, {"seed": 3, "train": {"max_epochs": 7}})
        cfg = load_config(path, environ={})
        assert cfg.seed == 3
        assert cfg.train.max_epochs == 7
        assert cfg.train.momentum == 0.9

    def test_missing_file_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "nope.yaml", environ={})

    def test_invalid_yaml_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("seed: [unclosed")
        with pytest.raises(ConfigError, match="YAML"):
            load_config(path, environ={})


class TestUnknownKeys:
    def test_unknown_section(self):
        with pytest.raises(ConfigError, match="sections"):
            config_from_dict({"optimizer": {}})

    def test_unknown_key_in_section(self):
        with pytest.raises(ConfigError, match="train"):
            config_from_dict({"train": {"learning_rte": 0.1}})

    def test_scalar_where_mapping_expected(self):
        with pytest.raises(ConfigError, match="mapping"):
            config_from_dict({"train": 3})


class TestOverrides:
    def test_env_scalar_overrides(self):
        cfg = PipelineConfig()
        applied = apply_env_overrides(cfg, environ={
            "GAITFLOW_TRAIN_LEARNING_RATE": "0.05",
            "GAITFLOW_SEED": "9",
            "GAITFLOW_DESCRIPTOR_PCA_DIM": "32",
            "GAITFLOW_PATCHES_AUGMENT": "false",
            "HOME": "/root",
        })
        assert len(applied) == 4
        assert cfg.train.learning_rate == 0.05
        assert cfg.seed == 9
        assert cfg.descriptor.pca_dim == 32
        assert cfg.patches.augment is False

    def test_env_null_clears_optional(self):
        cfg = PipelineConfig()
        cfg.descriptor.pca_dim = 16
        apply_env_overrides(cfg, environ={"GAITFLOW_DESCRIPTOR_PCA_DIM": "null"})
        assert cfg.descriptor.pca_dim is None

    def test_env_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="no key"):
            apply_env_overrides(PipelineConfig(),
                                environ={"GAITFLOW_TRAIN_LERNING_RATE": "1"})
        with pytest.raises(ConfigError, match="section"):
            apply_env_overrides(PipelineConfig(),
                                environ={"GAITFLOW_OPTIM_LR": "1"})

    def test_set_overrides(self):
        cfg = PipelineConfig()
        apply_set_overrides(cfg, ["descriptor.metric=L2", "seed=5",
                                  "model.architecture=vgg-like",
                                  "descriptor.truncation=48"])
        assert cfg.descriptor.metric == "L2"
        assert cfg.seed == 5
        assert cfg.model.architecture == "vgg-like"
        assert cfg.descriptor.truncation == 48

    def test_set_rejects_bad_forms(self):
        with pytest.raises(ConfigError, match="key=value"):
            apply_set_overrides(PipelineConfig(), ["seed"])
        with pytest.raises(ConfigError, match="top-level"):
            apply_set_overrides(PipelineConfig(), ["sead=1"])
        with pytest.raises(ConfigError, match="list keys"):
            apply_set_overrides(PipelineConfig(), ["patches.parts=full-body"])
        with pytest.raises(ConfigError, match="boolean"):
            apply_set_overrides(PipelineConfig(), ["patches.augment=maybe"])

    def test_precedence_file_env_set(self, tmp_path):
        path = write_cfg(tmp_path, {"train": {"max_epochs": 1},
                                    "flow": {"clip": 8.0}})
        env = {"GAITFLOW_TRAIN_MAX_EPOCHS": "2", "GAITFLOW_FLOW_CLIP": "12"}
        cfg = load_config(path, environ=env,
                          overrides=["train.max_epochs=3"])
        assert cfg.train.max_epochs == 3        # --set beats env
        assert cfg.flow.clip == 12.0            # env beats file


class TestValidation:
    def test_silhouette_forces_full_body(self):
        cfg = PipelineConfig()
        cfg.data.mode = "silhouette"
        cfg.validate()
        assert cfg.patches.parts == ["full-body"]

    def test_silhouette_rejects_other_parts(self):
        cfg = PipelineConfig()
        cfg.data.mode = "silhouette"
        cfg.patches.parts = ["left-foot"]
        with pytest.raises(ConfigError, match="full-body"):
            cfg.validate()

    def test_bad_values_rejected(self):
        cases = [
            (lambda c: setattr(c.data, "mode", "video"), "mode"),
            (lambda c: setattr(c.patches, "parts", []), "empty"),
            (lambda c: setattr(c.patches, "parts", ["torso"]), "unknown parts"),
            (lambda c: setattr(c.patches, "parts",
                               ["full-body", "full-body"]), "duplicate"),
            (lambda c: setattr(c.data, "train_subjects", ["s00"]) or
             setattr(c.data, "eval_subjects", ["s00"]), "overlap"),
            (lambda c: setattr(c.data, "gallery_videos", []), "non-empty"),
            (lambda c: setattr(c.data, "probe_videos", ["n00"]), "overlap"),
            (lambda c: setattr(c.descriptor, "fusion", "sum"), "fusion"),
            (lambda c: setattr(c.descriptor, "metric", "cosine"), "metric"),
            (lambda c: setattr(c.descriptor, "pca_dim", 0), "pca_dim"),
            (lambda c: setattr(c.descriptor, "truncation", 1), "truncation"),
            (lambda c: setattr(c.flow, "clip", 0.0), "clip"),
            (lambda c: setattr(c, "workers", 0), "workers"),
            (lambda c: setattr(c.data, "frame_width", 8), "frame size"),
        ]
        for mutate, match in cases:
            cfg = PipelineConfig()
            mutate(cfg)
            with pytest.raises(ConfigError, match=match):
                cfg.validate()
