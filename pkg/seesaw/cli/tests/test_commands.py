import csv
import re
import tempfile
from pathlib import Path

from click.testing import CliRunner
from django.test import SimpleTestCase

from seesaw.cli.lib import CONFIG_NAME, read_run_config
from seesaw.cli.management.commands.seesaw import main
from seesaw.training.lib import CHECKPOINT_NAME, METRICS_NAME
from seesaw.training.tests.fixtures import write_cifar10

SUMMARY = re.compile(r"^params=(\d+\.\d)M multi_adds=(\d+)M$")
EPOCH = re.compile(r"^epoch=(\d+) loss=\S+ train_acc=\S+ test_acc=\S+$")


def _last_line(output: str) -> str:
    return output.strip().splitlines()[-1]


class CommandTestCase(SimpleTestCase):
    def setUp(self):
        self.runner = CliRunner()

    def invoke(self, *args: str, exit_code: int = 0):
        result = self.runner.invoke(main, list(args))
        self.assertEqual(result.exit_code, exit_code, result.output)
        return result


class HelpTestCase(CommandTestCase):
    def test_group_lists_subcommands(self):
        result = self.invoke()
        for name in ("cost", "train", "eval", "checkgrad", "connectivity"):
            self.assertIn(name, result.output)

    def test_every_subcommand_has_help(self):
        flags = {
            "cost": ["--arch", "--variant", "--res", "--expansion", "--csv"],
            "train": ["--resume", "--epochs", "--output"],
            "eval": ["--config", "--data"],
            "checkgrad": ["--block", "--tolerance", "--no-permute"],
            "connectivity": ["--block", "--stack", "--no-permute"],
        }
        for name, expected in flags.items():
            output = self.invoke(name, "--help").output
            for flag in expected:
                self.assertIn(flag, output, name)


class CostCommandTestCase(CommandTestCase):
    def _totals(self, output: str) -> tuple[float, float]:
        match = SUMMARY.match(_last_line(output))
        assert match is not None, output
        return float(match.group(1)) * 1e6, float(match.group(2)) * 1e6

    def test_mobilenet(self):
        result = self.invoke("cost", "--arch", "mbv2", "--variant", "1.0")
        params, multi_adds = self._totals(result.output)
        self.assertLessEqual(abs(params - 3.5e6) / 3.5e6, 0.03)
        self.assertLessEqual(abs(multi_adds - 314e6) / 314e6, 0.03)
        self.assertIn("total", result.output)

    def test_seesaw_reports_its_deviation(self):
        result = self.invoke(
            "cost", "--arch", "seesaw-shuffle", "--variant", "1.0D", "--no-table"
        )
        params, multi_adds = self._totals(result.output)
        self.assertLessEqual(abs(params - 3.6e6) / 3.6e6, 0.03)
        self.assertLessEqual(abs(multi_adds - 361e6) / 361e6, 0.07)
        self.assertIn("multi_adds_deviation=", result.output)
        self.assertNotIn("total", result.output)

    def test_csv(self):
        path = Path(tempfile.mkdtemp()) / "cost.csv"
        self.invoke("cost", "--arch", "igcv3", "--no-table", "--csv", str(path))
        with path.open() as stream:
            rows = list(csv.reader(stream))
        self.assertEqual(rows[0], ["layer", "kind", "params", "multi_adds"])
        self.assertGreater(len(rows), 30)

    def test_cifar_layout(self):
        result = self.invoke(
            "cost", "--variant", "0.5D", "--layout", "cifar_32", "--no-table"
        )
        self.assertRegex(_last_line(result.output), SUMMARY)
        self.assertNotIn("deviation", result.output)

    def test_bad_arch_names_the_flag(self):
        result = self.invoke("cost", "--arch", "resnet", exit_code=2)
        self.assertIn("--arch", result.output)

    def test_bad_variant(self):
        result = self.invoke("cost", "--variant", "2.0D", exit_code=1)
        self.assertIn("2.0D", result.output)


class CheckgradCommandTestCase(CommandTestCase):
    def test_blocks_pass(self):
        for block in ("seesaw-shuffle", "seesaw-share", "igcv3", "mbv2"):
            result = self.invoke(
                "checkgrad", "--block", block, "--channels", "6", "--expansion", "2"
            )
            self.assertTrue(_last_line(result.output).startswith("PASS"), block)

    def test_default_seesaw_shuffle_passes(self):
        result = self.invoke("checkgrad", "--block", "seesaw-shuffle")
        line = _last_line(result.output)
        self.assertTrue(line.startswith("PASS"), line)
        match = re.search(r"max_rel_err=(\S+)", line)
        assert match is not None
        self.assertLess(float(match.group(1)), 1e-5)

    def test_strided(self):
        self.invoke(
            "checkgrad",
            "--block",
            "seesaw-shuffle",
            "--expansion",
            "2",
            "--stride",
            "2",
        )

    def test_impossible_tolerance_fails(self):
        result = self.invoke(
            "checkgrad",
            "--block",
            "seesaw-shuffle",
            "--expansion",
            "2",
            "--tolerance",
            "0",
            exit_code=1,
        )
        self.assertIn("FAIL", result.output)

    def test_bad_ratio(self):
        self.invoke("checkgrad", "--block", "mbv2", "--ratio", "1,x", exit_code=2)

    def test_share_width_zero_rejected(self):
        result = self.invoke(
            "checkgrad", "--block", "seesaw-share", "--share-width", "0", exit_code=2
        )
        self.assertIn("--share-width", result.output)
        self.invoke("cost", "--arch", "seesaw-share", "--share-width", "0", exit_code=2)


class ConnectivityCommandTestCase(CommandTestCase):
    def test_seesaw_shuffle_is_full(self):
        result = self.invoke("connectivity", "--block", "seesaw-shuffle")
        self.assertTrue(_last_line(result.output).startswith("full=yes"))

    def test_igcv3_without_permutes_is_block_diagonal(self):
        result = self.invoke(
            "connectivity",
            "--block",
            "igcv3",
            "--channels",
            "8",
            "--expansion",
            "2",
            "--no-permute",
            exit_code=1,
        )
        lines = result.output.splitlines()
        self.assertEqual(lines[0], "####....")
        self.assertEqual(lines[7], "....####")
        self.assertIn("full=no", result.output)

    def test_stacked_share_blocks(self):
        result = self.invoke(
            "connectivity",
            "--block",
            "seesaw-share",
            "--channels",
            "8",
            "--expansion",
            "1",
            "--ratio",
            "1,1,1,1",
            "--stack",
            "3",
            "--no-matrix",
        )
        lines = result.output.strip().splitlines()
        depths = [line.split()[0] for line in lines[:3]]
        self.assertEqual(depths, ["depth=1", "depth=2", "depth=3"])
        self.assertTrue(lines[-1].startswith("full=yes"))


class TrainCommandTestCase(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.root = Path(tempfile.mkdtemp())
        write_cifar10(self.root / "cifar")
        self.run_dir = self.root / "run"
        self.config = self.root / "tiny.ini"
        self.config.write_text(
            "[model]\n"
            "arch = seesaw-shuffle\n"
            "variant = 0.5D\n"
            "width = 0.1\n"
            "\n"
            "[train]\n"
            "schedule = constant\n"
            "base_lr = 0.05\n"
            "batch_size = 8\n"
            "total_epochs = 1\n"
            "steps_per_epoch = 2\n"
            "augment = false\n"
            "\n"
            "[data]\n"
            f"dir = {self.root / 'cifar'}\n"
            "test_limit = 10\n"
            "\n"
            "[output]\n"
            f"dir = {self.run_dir}\n"
        )

    def test_train_resume_and_eval(self):
        result = self.invoke("train", str(self.config))
        self.assertRegex(_last_line(result.output), EPOCH)
        self.assertTrue(_last_line(result.output).startswith("epoch=0 "))
        for name in (CONFIG_NAME, CHECKPOINT_NAME, METRICS_NAME):
            self.assertTrue((self.run_dir / name).exists(), name)
        self.assertEqual(
            read_run_config(self.run_dir / CONFIG_NAME), read_run_config(self.config)
        )

        checkpoint = self.run_dir / CHECKPOINT_NAME
        result = self.invoke(
            "train", str(self.config), "--resume", str(checkpoint), "--epochs", "2"
        )
        self.assertTrue(_last_line(result.output).startswith("epoch=1 "))
        with (self.run_dir / METRICS_NAME).open() as stream:
            self.assertEqual(len(list(csv.DictReader(stream))), 4)

        result = self.invoke("eval", str(checkpoint))
        self.assertRegex(
            _last_line(result.output), r"^accuracy=\d\.\d{4} samples=10 epoch=2$"
        )

        result = self.invoke(
            "train", str(self.config), "--resume", str(checkpoint), exit_code=1
        )
        self.assertIn("Nothing to do", result.output)

    def test_bad_key_names_it(self):
        self.config.write_text("[train]\nlearning_rate = 0.1\n")
        result = self.invoke("train", str(self.config), exit_code=1)
        self.assertIn("learning_rate", result.output)

    def test_missing_data(self):
        result = self.invoke(
            "train", str(self.config), "--data", str(self.root / "nope"), exit_code=1
        )
        self.assertIn("nope", result.output)

    def test_eval_missing_checkpoint(self):
        self.invoke("eval", str(self.root / "missing.sswn"), exit_code=2)
