import pytest

from fairshift.config import (
    experiment_spec_from_dict,
    parse_kv_file,
    parse_kv_text,
    shift_config_from_dict,
    train_config_from_dict,
)


class TestParseKvText:
    def test_scalars_and_comments(self):
        values = parse_kv_text(
            """
            # a comment
            method = ours
            lambda1 = 0.5   # trailing comment
            seed = 7
            pretrain_epochs = 15
            """
        )
        assert values == {
            "method": "ours",
            "lambda1": 0.5,
            "seed": 7,
            "pretrain_epochs": 15,
        }

    def test_lists_from_commas(self):
        values = parse_kv_text("gammas = 0, 5, 10\nmethods = ours, erm\n")
        assert values["gammas"] == (0, 5, 10)
        assert values["methods"] == ("ours", "erm")

    def test_booleans_and_none(self):
        values = parse_kv_text("flag = true\nnothing = none\n")
        assert values["flag"] is True
        assert values["nothing"] is None

    def test_missing_equals_rejected(self):
        with pytest.raises(ValueError, match="key = value"):
            parse_kv_text("just words\n")

    def test_empty_key_rejected(self):
        with pytest.raises(ValueError, match="empty key"):
            parse_kv_text("= 3\n")


def test_parse_kv_file(tmp_path):
    path = tmp_path / "train.cfg"
    path.write_text("method = erm\nseed = 3\n")
    assert parse_kv_file(path) == {"method": "erm", "seed": 3}


class TestBuilders:
    def test_train_config_with_overrides(self):
        cfg = train_config_from_dict({"lambda1": 0.2, "seed": 1}, seed=9, method="zsa")
        assert cfg.lambda1 == 0.2
        assert cfg.seed == 9
        assert cfg.method == "zsa"

    def test_unknown_key_rejected(self):
        with pytest.raises(ValueError, match="unknown TrainConfig keys"):
            train_config_from_dict({"learning_rt": 0.1})

    def test_shift_config(self):
        cfg = shift_config_from_dict({"gamma": 5.0, "percentile": 70})
        assert cfg.gamma == 5.0
        assert cfg.percentile == 70

    def test_experiment_spec_nested_prefixes(self):
        spec = experiment_spec_from_dict(
            {
                "dataset": "synthetic:asymmetric",
                "methods": ("ours", "erm"),
                "gammas": 5.0,
                "repetitions": 3,
                "train.pretrain_epochs": 2,
                "train.adapt_epochs": 1,
                "shift.percentile": 70.0,
            }
        )
        assert spec.gammas == (5.0,)
        assert spec.methods == ("ours", "erm")
        assert spec.train.pretrain_epochs == 2
        assert spec.shift.percentile == 70.0

    def test_none_overrides_are_ignored(self):
        spec = experiment_spec_from_dict(
            {"dataset": "synthetic:asymmetric"}, repetitions=None, base_seed=4
        )
        assert spec.repetitions == 50
        assert spec.base_seed == 4
