"""Config validation, config-file parsing, and the seeded random source."""

import dataclasses

import numpy as np
import pytest

from sbvod.domain import (
    MS_PER_MINUTE,
    ConfigError,
    QualityLevel,
    RandomSource,
    SimConfig,
    VideoSpec,
    catalog_from_config,
    derive_seed,
    load_config,
    validate_config,
)


def _quality(rate=1.5e6, size=5.4e9, prob=1.0, q=1):
    return QualityLevel(q_index=q, stream_rate_bps=rate, size_bits=size, request_prob=prob)


class TestValueTypes:
    def test_quality_level_rejects_bad_fields(self):
        with pytest.raises(ValueError):
            QualityLevel(q_index=0, stream_rate_bps=1.0, size_bits=1.0, request_prob=1.0)
        with pytest.raises(ValueError):
            QualityLevel(q_index=1, stream_rate_bps=0.0, size_bits=1.0, request_prob=1.0)
        with pytest.raises(ValueError):
            QualityLevel(q_index=1, stream_rate_bps=1.0, size_bits=-1.0, request_prob=1.0)
        with pytest.raises(ValueError):
            QualityLevel(q_index=1, stream_rate_bps=1.0, size_bits=1.0, request_prob=1.5)

    def test_video_request_probs_must_sum_to_one(self):
        with pytest.raises(ValueError, match="sum to 1"):
            VideoSpec(
                id=1,
                length_minutes=60,
                consumption_rate_mbps=1.5,
                popularity=1.0,
                qualities=(_quality(prob=0.6), _quality(prob=0.6, q=2)),
            )
        # A hair inside the tolerance is accepted.
        VideoSpec(
            id=1,
            length_minutes=60,
            consumption_rate_mbps=1.5,
            popularity=1.0,
            qualities=(_quality(prob=0.5), _quality(prob=0.5 + 1e-12, q=2)),
        )

    def test_video_rejects_duplicate_quality_index(self):
        with pytest.raises(ValueError, match="duplicate q_index"):
            VideoSpec(
                id=1,
                length_minutes=60,
                consumption_rate_mbps=1.5,
                popularity=0.5,
                qualities=(_quality(prob=0.5), _quality(prob=0.5)),
            )

    def test_length_ms(self):
        v = VideoSpec(
            id=1,
            length_minutes=60,
            consumption_rate_mbps=1.5,
            popularity=1.0,
            qualities=(_quality(),),
        )
        assert v.length_ms == 60 * MS_PER_MINUTE == 3_600_000


class TestValidateConfig:
    def test_defaults_are_valid(self):
        assert validate_config(SimConfig()) == []

    def test_channel_budget_worked_example(self):
        # 1.5 Mbps x 5 channels x 5 videos = 37.5 fits a 45 Mbps link.
        ok = dataclasses.replace(SimConfig(), bandwidth_mbps=45.0, num_videos=5)
        assert validate_config(ok) == []
        # Seven channels push it to 52.5, over budget.
        bad = dataclasses.replace(
            SimConfig(), bandwidth_mbps=45.0, num_videos=5, channels=7, video_length_minutes=70
        )
        msgs = validate_config(bad)
        assert any("exceeds bandwidth_mbps" in m for m in msgs)

    def test_zero_bandwidth(self):
        msgs = validate_config(dataclasses.replace(SimConfig(), bandwidth_mbps=0.0))
        assert "bandwidth_mbps must be positive" in msgs

    def test_segment_divisibility(self):
        bad = dataclasses.replace(SimConfig(), channels=7)  # 60 min / 7 is not whole ms
        msgs = validate_config(bad)
        assert any("equal segments" in m for m in msgs)

    def test_warmup_exceeding_horizon(self):
        bad = dataclasses.replace(SimConfig(), horizon_minutes=10.0, warmup_minutes=20.0)
        assert any("warmup" in m for m in validate_config(bad))

    def test_probability_bounds(self):
        bad = dataclasses.replace(SimConfig(), random_cache_prob=1.5)
        assert any("random_cache_prob" in m for m in validate_config(bad))

    def test_validation_is_pure(self):
        cfg = dataclasses.replace(SimConfig(), bandwidth_mbps=-1.0, channels=0)
        assert validate_config(cfg) == validate_config(cfg)


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        p = tmp_path / "run.cfg"
        p.write_text(
            "# evaluation setup\n"
            "bandwidth_mbps = 45\n"
            "channels = 5\n"
            "arrival_rate_per_min = 4  # clients per minute\n"
            "seed = 99\n"
            "\n",
            encoding="utf-8",
        )
        cfg = load_config(p)
        assert cfg.bandwidth_mbps == 45.0
        assert cfg.channels == 5
        assert cfg.arrival_rate_per_min == 4.0
        assert cfg.seed == 99
        assert cfg.num_lps == SimConfig().num_lps  # untouched default

    def test_unknown_key(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("bandwith = 45\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="unknown key"):
            load_config(p)

    def test_bad_value(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("channels = five\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="bad value"):
            load_config(p)

    def test_missing_equals(self, tmp_path):
        p = tmp_path / "bad.cfg"
        p.write_text("channels\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="key = value"):
            load_config(p)


class TestRandomSource:
    def test_derived_seeds_are_stable(self):
        # Anchors for the documented 64-bit mix; any change here silently
        # reshuffles every experiment, so they are pinned.
        assert derive_seed(1) == 17797172410793473910
        assert derive_seed(1, "arrivals") == 9658426091350732144
        assert derive_seed(7, "no-cache", "6", 0) == 13971762907855657622

    def test_label_paths_separate_streams(self):
        assert derive_seed(1, "arrivals") != derive_seed(1, "placement")
        assert derive_seed(1, "arrivals") != derive_seed(2, "arrivals")
        assert derive_seed(1, "a", 0) != derive_seed(1, "a", 1)

    def test_substream_reproducibility(self):
        a = RandomSource(42).substream("arrivals").random(16)
        b = RandomSource(42).substream("arrivals").random(16)
        assert np.array_equal(a, b)

    def test_substreams_are_independent_of_each_other(self):
        src = RandomSource(42)
        a = src.substream("arrivals").random(16)
        b = src.substream("video-choice").random(16)
        assert not np.array_equal(a, b)

    def test_repr_names_generator(self):
        assert "PCG64" in repr(RandomSource(1))


class TestCatalog:
    def test_single_video_defaults(self):
        videos = catalog_from_config(SimConfig())
        assert len(videos) == 1
        (v,) = videos
        assert v.popularity == 1.0
        assert v.qualities[0].request_prob == 1.0
        # 60 minutes at 1.5 Mbps.
        assert v.qualities[0].size_bits == 60 * 60 * 1.5e6

    def test_rank_skew_normalises(self):
        cfg = dataclasses.replace(SimConfig(), num_videos=3)
        videos = catalog_from_config(cfg)
        pops = [v.popularity for v in videos]
        assert pops[0] > pops[1] > pops[2]
        assert sum(pops) == pytest.approx(1.0, abs=1e-12)
        h3 = 1 + 0.5 + 1 / 3
        assert pops[0] == pytest.approx(1 / h3)
