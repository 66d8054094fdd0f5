from __future__ import annotations

import io
import json
from pathlib import Path

import pytest

from config import (
    FrontendConfig,
    ModelConfig,
    RunConfig,
    TrainConfig,
    canonical_json,
    config_hash,
    differing_fields,
    load_run_config,
    write_effective_config,
)
from utils.errors import ConfigError
from utils.log import MetricsStream, log_event

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_shipped_configs_validate():
    desk = load_run_config(CONFIGS / "desk.json")
    assert (desk.model.seq_len, desk.model.embed_dim, desk.model.depth) == (32, 64, 4)
    assert desk.frontend.time_patches * desk.frontend.freq_patches == 32
    full = load_run_config(CONFIGS / "full.json")
    assert (full.model.seq_len, full.model.embed_dim, full.model.depth) == (600, 768, 12)
    assert full.train.lr0 == 2.5e-4 and full.train.decay_start_epoch == 5


def test_defaults_without_a_file():
    cfg = load_run_config(None)
    assert cfg == RunConfig()
    assert cfg.model.channel_hidden == 4 * 768
    assert cfg.model.token_hidden == 300


def test_partial_file_merges_defaults(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"train": {"epochs": 3}}), encoding="utf-8")
    cfg = load_run_config(path)
    assert cfg.train.epochs == 3
    assert cfg.train.lr0 == TrainConfig().lr0
    assert cfg.model == ModelConfig()


@pytest.mark.parametrize("doc, message", [
    ({"model": {"depht": 2}}, "depht"),
    ({"optim": {}}, "optim"),
    ({"model": {"variant": "RX"}}, "RX"),
    ({"model": {"depth": 1.5}}, "model.depth"),
    ({"train": {"decay_factor": 1.5}}, "decay_factor"),
    ({"model": {"seq_len": 30}}, "seq_len"),
    ({"frontend": {"fmax": 9000.0}}, "fmax"),
])
def test_invalid_documents_are_config_errors(tmp_path, doc, message):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(ConfigError, match=message):
        load_run_config(path)


def test_unreadable_config_files(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_run_config(tmp_path / "absent.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_run_config(bad)


def test_frontend_and_model_must_agree():
    with pytest.raises(ConfigError, match="embed_dim"):
        RunConfig(frontend=FrontendConfig(), model=ModelConfig(embed_dim=64))


def test_roll_feasibility_is_checked():
    with pytest.raises(ConfigError, match="roll_height_fold"):
        ModelConfig(seq_len=10, embed_dim=16, patch_dim=4)
    with pytest.raises(ConfigError, match="roll_channels"):
        ModelConfig(seq_len=8, embed_dim=6, patch_dim=4)


def test_overrides(desk_cfg):
    cfg = desk_cfg.with_overrides(seed=7, variant="baseline", num_classes=10)
    assert (cfg.train.seed, cfg.model.variant, cfg.model.num_classes) == (7, "baseline", 10)
    assert desk_cfg.with_overrides() == desk_cfg
    with pytest.raises(ConfigError):
        desk_cfg.with_overrides(variant="X")


def test_effective_config_round_trips(tmp_path, desk_cfg):
    path = write_effective_config(desk_cfg, tmp_path / "run")
    assert path.name == "effective-config.json"
    assert load_run_config(path) == desk_cfg


def test_canonical_json_and_hash(desk_cfg):
    assert canonical_json({"b": 1, "a": [1, 2]}) == '{"a":[1,2],"b":1}'
    model = desk_cfg.to_dict()["model"]
    frontend = desk_cfg.to_dict()["frontend"]
    h = config_hash(model, frontend)
    assert len(h) == 64
    assert config_hash(dict(reversed(list(model.items()))), frontend) == h
    assert config_hash(dict(model, depth=5), frontend) != h
    assert differing_fields(model, dict(model, depth=5, variant="H"), "model.") == ["model.depth", "model.variant"]


def test_event_log_lines(tmp_path, monkeypatch):
    monkeypatch.setenv("RHMIXER_LOG_DIR", str(tmp_path))
    log_event("TRAIN", "epoch finished", {"epoch": 0})
    log_event("EVAL", "done")
    lines = [json.loads(l) for l in (tmp_path / "pipeline.log").read_text(encoding="utf-8").splitlines()]
    assert [l["stage"] for l in lines] == ["TRAIN", "EVAL"]
    assert lines[0]["extra"] == {"epoch": 0}
    assert "extra" not in lines[1]


def test_metrics_stream_echoes_and_appends(tmp_path):
    buf = io.StringIO()
    stream = MetricsStream(tmp_path / "m" / "metrics.jsonl", echo=True, stream=buf)
    stream.write({"split": "train", "acc": 0.5})
    stream.write({"split": "val", "acc": 0.25})
    assert buf.getvalue().splitlines()[0] == '{"acc": 0.5, "split": "train"}'
    assert (tmp_path / "m" / "metrics.jsonl").read_text(encoding="utf-8") == buf.getvalue()
