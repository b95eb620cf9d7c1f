import tempfile
from pathlib import Path

from django.test import SimpleTestCase, override_settings

from seesaw.cli.lib import (
    ConfigError,
    RunConfig,
    data_dir,
    load_train_data,
    model_spec_for,
    output_dir,
    parse_run_config,
    read_run_config,
)
from seesaw.training.tests.fixtures import write_cifar10

CONFIG = """
[model]
arch = igcv3
variant = 0.5D
width = 0.5

[train]
schedule = imagenet_exp
total_epochs = 3
milestones = 1,2

[data]
limit = 10
"""


class ParseTestCase(SimpleTestCase):
    def test_defaults(self):
        config = parse_run_config("")
        self.assertEqual(config, RunConfig())
        self.assertEqual(config.model.arch, "seesaw-shuffle")
        self.assertIsNone(config.data.dir)

    def test_values_and_recipe_defaults(self):
        config = parse_run_config(CONFIG)
        self.assertEqual(config.model.arch, "igcv3")
        self.assertEqual(config.model.width, 0.5)
        self.assertEqual(config.train.base_lr, 0.045)
        self.assertEqual(config.train.batch_size, 96)
        self.assertEqual(config.train.total_epochs, 3)
        self.assertEqual(config.train.milestones, (1, 2))
        self.assertEqual(config.data.limit, 10)

    def test_sequences_and_empty_values(self):
        config = parse_run_config("[model]\nratio = 1, 3\nexpansion =\n")
        self.assertEqual(config.model.ratio, (1, 3))
        self.assertIsNone(config.model.expansion)

    def test_resolved_config_reads_back_unchanged(self):
        config = parse_run_config(
            CONFIG + "[output]\ndir = /tmp/somewhere\n",
            {"model": {"ratio": (1, 2), "permute": False}},
        )
        self.assertEqual(parse_run_config(config.to_ini()), config)

    def test_overrides_win(self):
        config = parse_run_config(
            CONFIG, {"train": {"total_epochs": 9, "base_lr": None}}
        )
        self.assertEqual(config.train.total_epochs, 9)
        self.assertEqual(config.train.base_lr, 0.045)

    def test_unknown_key(self):
        with self.assertRaisesRegex(ConfigError, "'lr'"):
            parse_run_config("[train]\nlr = 0.1\n")
        with self.assertRaisesRegex(ConfigError, "'epochs'"):
            parse_run_config("", {"train": {"epochs": 3}})

    def test_unknown_section(self):
        with self.assertRaisesRegex(ConfigError, r"\[optimizer\]"):
            parse_run_config("[optimizer]\nmomentum = 0.9\n")

    def test_bad_value_names_the_key(self):
        with self.assertRaisesRegex(ConfigError, "momentum"):
            parse_run_config("[train]\nmomentum = 1.5\n")
        with self.assertRaisesRegex(ConfigError, "arch"):
            parse_run_config("[model]\narch = resnet\n")
        with self.assertRaisesRegex(ConfigError, "limit"):
            parse_run_config("[data]\nlimit = 0\n")
        with self.assertRaisesRegex(ConfigError, "share_width"):
            parse_run_config("[model]\nshare_width = 0\n")

    def test_not_ini(self):
        with self.assertRaises(ConfigError):
            parse_run_config("just some words")

    def test_missing_file(self):
        with self.assertRaises(ConfigError):
            read_run_config(Path(tempfile.mkdtemp()) / "nope.ini")

    def test_write(self):
        directory = Path(tempfile.mkdtemp()) / "run"
        config = parse_run_config(CONFIG)
        self.assertEqual(read_run_config(config.write(directory)), config)


class ModelSpecTestCase(SimpleTestCase):
    def test_architecture_grouping(self):
        spec = model_spec_for(parse_run_config(CONFIG), num_classes=10)
        self.assertEqual(spec.num_classes, 10)
        self.assertTrue(all(stage.ratio == (1, 1) for stage in spec.stages))
        spec = model_spec_for(parse_run_config(""), num_classes=10)
        self.assertEqual(spec.stages[0].ratio, (1, 2))
        self.assertEqual(spec.input_layout, "cifar_32")

    def test_bad_variant(self):
        config = parse_run_config("[model]\nvariant = 3.0D\n")
        with self.assertRaises(ConfigError):
            model_spec_for(config, num_classes=10)


class RunsTestCase(SimpleTestCase):
    @override_settings(CIFAR_DIR="/data/cifar-10-batches-bin")
    def test_cifar_dir_setting(self):
        self.assertEqual(
            data_dir(RunConfig()), Path("/data/cifar-10-batches-bin")
        )
        config = parse_run_config("[data]\ndir = /elsewhere\n")
        self.assertEqual(data_dir(config), Path("/elsewhere"))

    @override_settings(RUNS_DIR=Path("/runs"))
    def test_output_dir(self):
        self.assertEqual(output_dir(RunConfig()), Path("/runs/seesaw-shuffle-0.5D"))

    def test_train_data_shares_statistics(self):
        directory = Path(tempfile.mkdtemp())
        write_cifar10(directory)
        config = parse_run_config(f"[data]\ndir = {directory}\ntest_limit = 5\n")
        train, test = load_train_data(config)
        self.assertEqual((len(train), len(test)), (40, 5))
        self.assertEqual(test.mean.tolist(), train.mean.tolist())

    def test_folder_data_has_no_limits(self):
        config = parse_run_config("[data]\nkind = folder\nlimit = 4\n")
        with self.assertRaises(ConfigError):
            load_train_data(config)
