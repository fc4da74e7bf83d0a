import pytest

from baseline_segmenter import AugmentSpec, ConfigError, TrainConfig


class TestTrainConfig:
    def test_defaults_are_valid(self):
        cfg = TrainConfig()
        assert cfg.model == "unetpp"
        assert cfg.classes == ("scbp", "isc")
        assert 25 <= cfg.epochs <= 50

    @pytest.mark.parametrize("kwargs", [
        {"model": "segformer"},
        {"epochs": 10},
        {"epochs": 51},
        {"batch_size": 0},
        {"learning_rate": 0.0},
        {"patience": 0},
        {"classes": ()},
        {"input_resolution": (16, 16)},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            TrainConfig(**kwargs)

    def test_json_round_trip(self):
        cfg = TrainConfig(model="unet", epochs=30, input_resolution=(128, 96),
                          seed=7)
        assert TrainConfig.from_json(cfg.to_json()) == cfg

    def test_hash_tracks_content(self):
        a = TrainConfig(seed=1)
        b = TrainConfig(seed=1)
        c = TrainConfig(seed=2)
        assert a.content_hash() == b.content_hash()
        assert a.content_hash() != c.content_hash()
        assert len(a.content_hash()) == 64


class TestAugmentSpec:
    def test_defaults(self):
        spec = AugmentSpec()
        assert spec.gamma_ranges["low"] == (1.5, 2.0)
        assert spec.gamma_ranges["high"] == (0.5, 0.75)
        assert spec.gamma_ranges["medium"] == (0.75, 1.33)

    @pytest.mark.parametrize("kwargs", [
        {"flip_probability": 1.5},
        {"rotation_degrees": -1.0},
        {"gamma_ranges": {"low": (0.0, 1.0)}},
        {"gamma_ranges": {"low": (2.0, 1.0)}},
    ])
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ConfigError):
            AugmentSpec(**kwargs)

    def test_round_trip(self):
        spec = AugmentSpec(flip_probability=0.25, rotation_degrees=5.0)
        assert AugmentSpec.from_json(spec.to_json()) == spec
