import numpy as np
import pytest

from backdiff.config import ConfigError, build_attack, build_dataset, build_trigger, dump_toml, parse_config

MINIMAL = """
[experiment]
name = "t"
seed = 7

[dataset]
size = 64

[train]
steps = 5
"""


class TestParse:
    def test_defaults_applied(self):
        cfg = parse_config(MINIMAL)
        assert cfg["schedule"]["T"] == 1000
        assert cfg["trigger"]["gamma"] == 0.6
        assert cfg["sample"]["eta"] == 0.0
        assert cfg["sample"]["S"] == 100

    def test_unknown_key_reports_path(self):
        with pytest.raises(ConfigError, match=r"\[train\].stepz"):
            parse_config(MINIMAL.replace("steps = 5", "stepz = 5"))

    def test_unknown_section_rejected(self):
        with pytest.raises(ConfigError, match="unknown section"):
            parse_config(MINIMAL + "\n[extra]\nfoo = 1\n")

    def test_type_mismatch_reported(self):
        with pytest.raises(ConfigError, match=r"\[train\].steps"):
            parse_config(MINIMAL.replace("steps = 5", 'steps = "five"'))

    def test_toml_syntax_error_carries_line_info(self):
        with pytest.raises(ConfigError, match="line"):
            parse_config("[experiment\nname = 3")

    def test_patch_gamma_on_zero_rejected_at_validation(self):
        text = MINIMAL + '\n[trigger]\nkind = "patch"\npatch_coords = [0]\ngamma_on = 0.0\n'
        with pytest.raises(ConfigError, match=r"\[trigger\].gamma_on"):
            parse_config(text)

    def test_blend_gamma_zero_rejected(self):
        with pytest.raises(ConfigError, match=r"\[trigger\].gamma"):
            parse_config(MINIMAL + "\n[trigger]\ngamma = 0.0\n")

    def test_target_class_range_checked(self):
        with pytest.raises(ConfigError, match="target_class"):
            parse_config(MINIMAL + "\n[attack]\ntarget_class = 9\n")

    def test_duplicate_table_is_config_error(self):
        with pytest.raises(ConfigError):
            parse_config(MINIMAL + "\n[train]\nsteps = 9\n")

    def test_sweep_keys_validated(self):
        with pytest.raises(ConfigError, match="not sweepable"):
            parse_config(MINIMAL + "\n[sweep]\nlearning = [1, 2]\n")

    def test_sweep_children_expand_product(self):
        cfg = parse_config(MINIMAL + "\n[sweep]\ngamma = [0.3, 0.6]\neta = [0.0, 1.0]\n")
        children = cfg.sweep_children()
        assert len(children) == 4
        names = [c["experiment"]["name"] for c in children]
        assert len(set(names)) == 4
        assert all(not c.sweep for c in children)

    def test_sweep_child_values_rechecked(self):
        with pytest.raises(ConfigError, match=r"\[trigger\].gamma"):
            parse_config(MINIMAL + "\n[sweep]\ngamma = [0.3, 0.0]\n")


class TestDumpToml:
    def test_round_trip(self):
        cfg = parse_config(MINIMAL)
        text = dump_toml(cfg.raw)
        again = parse_config(text)
        assert again.raw == cfg.raw

    def test_string_escaping(self):
        cfg = parse_config(MINIMAL.replace('"t"', '"a\\"b"'))
        assert parse_config(dump_toml(cfg.raw))["experiment"]["name"] == 'a"b'


class TestBuilders:
    def test_dataset_deterministic(self):
        cfg = parse_config(MINIMAL)
        a = build_dataset(cfg)
        b = build_dataset(cfg)
        np.testing.assert_array_equal(a.points, b.points)

    def test_csv_dataset_round_trip(self, tmp_path):
        from backdiff.dataset import save_dataset_csv

        cfg = parse_config(MINIMAL)
        ds = build_dataset(cfg)
        path = tmp_path / "points.csv"
        save_dataset_csv(path, ds)
        csv_cfg = parse_config(f'[dataset]\nkind = "csv"\npath = "{path}"\n')
        again = build_dataset(csv_cfg)
        np.testing.assert_array_equal(again.points, ds.points)

    def test_blend_trigger_built(self):
        cfg = parse_config(MINIMAL + "\n[trigger]\ndelta = [1.0, -0.5]\ngamma = 0.7\n")
        tr = build_trigger(cfg, 2)
        np.testing.assert_allclose(tr.mu, 0.3 * np.array([1.0, -0.5]))

    def test_delta_dimension_checked(self):
        cfg = parse_config(MINIMAL + "\n[trigger]\ndelta = [1.0, 0.0, 0.0]\n")
        with pytest.raises(ConfigError, match="delta"):
            build_trigger(cfg, 2)

    def test_patch_trigger_built(self):
        cfg = parse_config(MINIMAL + '\n[trigger]\nkind = "patch"\npatch_coords = [1]\ngamma_on = 0.1\n')
        tr = build_trigger(cfg, 2)
        np.testing.assert_allclose(tr.gamma, [1.0, 0.1])

    def test_delta_from_csv(self, tmp_path):
        path = tmp_path / "delta.csv"
        path.write_text("0.25,-0.75\n")
        cfg = parse_config(MINIMAL + f'\n[trigger]\ndelta_csv = "{path}"\n')
        tr = build_trigger(cfg, 2)
        np.testing.assert_allclose(tr.delta, [0.25, -0.75])

    def test_attack_kinds(self):
        base = MINIMAL + "\n[attack]\nkind = \"%s\"\n"
        assert build_attack(parse_config(base % "none"), 2) is None
        ind = build_attack(parse_config(base % "in_d2d" + "target_class = 3\n"), 2)
        assert ind.kind == "in_d2d" and ind.target_class == 3
        d2i = build_attack(parse_config(base % "d2i" + "x_target = [0.1, 0.2]\n"), 2)
        np.testing.assert_array_equal(d2i.x_target, [0.1, 0.2])
        out = build_attack(parse_config(base % "out_d2d"), 2)
        assert out.target_data is not None and len(out.target_data) == 1024
