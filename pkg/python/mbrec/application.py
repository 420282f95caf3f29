# This file is part of mbrec.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

__all__ = ["COMMANDS", "Application", "run_application", "main"]

import logging
import shlex
import sys
import typing
from pathlib import Path

from PySide6.QtCore import QCommandLineOption, QCommandLineParser, QCoreApplication

from . import __version__
from .config import (
    Config,
    apply_variant,
    make_config,
    parse_grid,
    parse_override,
    read_config,
)
from .data_graph import (
    Split,
    build_behavior_graphs,
    dataset_stats,
    leave_one_out_split,
    load_interactions,
    load_snapshot,
    make_synthetic_interactions,
    save_snapshot,
    select_behaviors,
    write_interactions,
)
from .errors import (
    ConfigurationError,
    IngestionError,
    NumericError,
    SplitError,
    UsageError,
    VerificationError,
)
from .evaluation import evaluate
from .log_message_handler import LogMessageHandler
from .model import Model
from .oracle import get_fixture_config, load_fixture
from .signals import SignalMessage
from .training import Trainer, load_checkpoint
from .utils import read_yaml_file, write_yaml_file
from .verification import VerificationReport, run_verification

COMMANDS = ("prepare", "train", "eval", "ablate", "gradcheck")

# Errors mapped to the exit codes
DOMAIN_ERRORS = (
    ConfigurationError,
    UsageError,
    IngestionError,
    SplitError,
    NumericError,
    VerificationError,
)

# Fixture keys that the configuration file can not change
FIXTURE_KEYS = ("behaviors", "dim", "layers")


def _select_split(split: Split, behaviors: list[str]) -> Split:
    if split.train.behaviors == behaviors:
        return split

    if split.train.behaviors[-1] != behaviors[-1]:
        raise UsageError(
            f"Target behavior {behaviors[-1]!r} differs from the split's "
            f"{split.train.behaviors[-1]!r}."
        )

    return Split(
        train=select_behaviors(split.train, behaviors),
        test_users=split.test_users,
        test_items=split.test_items,
    )


class Application(object):
    """Command runner with the run directory.

    Parameters
    ----------
    out_dir : `pathlib.Path`, `str`, or None
        Output directory. If None, nothing is written.
    is_output_log_to_file : `bool`
        Is outputting the log messages to "log.txt" of the output directory
        or not.
    is_output_log_on_screen : `bool`
        Is outputting the log messages on screen or not.
    log_level : `int`
        Logging level.
    command_line : `list` [`str`] or None, optional
        Command line recorded in the manifest. (the default is None)
    log : `logging.Logger` or None, optional
        A logger. If None, a logger will be instantiated. (the default is
        None)

    Attributes
    ----------
    out_dir : `pathlib.Path` or None
        Output directory.
    log : `logging.Logger`
        A logger.
    """

    MESSAGE_FORMAT = "%(asctime)s, %(levelname)s, %(message)s"

    def __init__(
        self,
        out_dir: Path | str | None,
        is_output_log_to_file: bool,
        is_output_log_on_screen: bool,
        log_level: int,
        command_line: list[str] | None = None,
        log: logging.Logger | None = None,
    ) -> None:
        self.out_dir = None if out_dir is None else Path(out_dir)
        self._command_line = list() if command_line is None else list(command_line)

        self._signal_message = SignalMessage()
        self._filepath_log: Path | None = None
        self._handlers: list[logging.Handler] = list()

        self.log = self._set_log(
            self.MESSAGE_FORMAT,
            is_output_log_to_file,
            is_output_log_on_screen,
            log_level,
            log=log,
        )

    def _set_log(
        self,
        message_format: str,
        is_output_log_to_file: bool,
        is_output_log_on_screen: bool,
        level: int,
        log: logging.Logger | None = None,
    ) -> logging.Logger:
        """Set the logger.

        Parameters
        ----------
        message_format : `str`
            Format of the message.
        is_output_log_to_file : `bool`
            Is outputting the log messages to file or not.
        is_output_log_on_screen : `bool`
            Is outputting the log messages on screen or not.
        level : `int`
            Logging level.
        log : `logging.Logger` or None, optional
            A logger. If None, a logger will be instantiated. (the default is
            None)

        Returns
        -------
        log : `logging.Logger`
            A logger.
        """

        if log is None:
            log = logging.getLogger(type(self).__name__)
        else:
            log = log.getChild(type(self).__name__)

        logging.basicConfig(format=message_format)

        if is_output_log_to_file and (self.out_dir is not None):
            self.out_dir.mkdir(parents=True, exist_ok=True)
            self._filepath_log = self.out_dir / "log.txt"

            self._signal_message.message.connect(self._write_log_message)
            self._handlers.append(
                LogMessageHandler(self._signal_message, message_format)
            )

        if is_output_log_on_screen:
            self._handlers.append(logging.StreamHandler(sys.stdout))

        for handler in self._handlers:
            log.addHandler(handler)

        log.setLevel(level)

        return log

    def _write_log_message(self, message: str) -> None:
        """Append the message to the log file.

        Parameters
        ----------
        message : `str`
            Formatted message.
        """

        if self._filepath_log is not None:
            with open(self._filepath_log, "a", encoding="utf-8") as file:
                file.write(message + "\n")

    def close(self) -> None:
        """Detach the handlers from the logger."""

        for handler in self._handlers:
            self.log.removeHandler(handler)

        self._handlers.clear()

    def _get_out_dir(self) -> Path:
        if self.out_dir is None:
            raise UsageError("Output directory is needed (--out).")

        return self.out_dir

    def write_manifest(self, config: Config, digest: str, seeds: list[int]) -> Path:
        """Write the manifest of a new run directory.

        Parameters
        ----------
        config : `Config`
            Configuration.
        digest : `str`
            Dataset hash.
        seeds : `list` [`int`]
            Seeds.

        Returns
        -------
        filepath : `pathlib.Path`
            Manifest file.

        Raises
        ------
        `UsageError`
            The directory has a manifest already.
        """

        out_dir = self._get_out_dir()
        out_dir.mkdir(parents=True, exist_ok=True)

        filepath = out_dir / "manifest.yaml"
        if filepath.exists():
            raise UsageError(f"Run directory {out_dir} has a manifest already.")

        write_yaml_file(
            filepath,
            dict(
                config=config.to_dict(),
                config_hash=config.hash(),
                dataset=digest,
                seeds=list(seeds),
                version=__version__,
                command_line=shlex.join(self._command_line),
            ),
        )

        return filepath

    def prepare(
        self,
        config: Config,
        filepaths: list[str],
        behaviors: list[str] | None = None,
        synthetic: bool = False,
    ) -> str:
        """Ingest the interaction files, split them and save the snapshot.

        Parameters
        ----------
        config : `Config`
            Configuration. The seed is used by the split and the synthetic
            data.
        filepaths : `list` [`str`]
            One file per behavior in the behavior order.
        behaviors : `list` [`str`] or None, optional
            Ordered behavior names. If None, config.behaviors is used. (the
            default is None)
        synthetic : `bool`, optional
            Generate the synthetic interactions instead of reading the files.
            (the default is False)

        Returns
        -------
        digest : `str`
            Dataset hash.

        Raises
        ------
        `UsageError`
            The number of files differs from the number of behaviors.
        """

        out_dir = self._get_out_dir()
        behaviors = list(config.behaviors) if behaviors is None else behaviors

        if synthetic:
            interactions = make_synthetic_interactions(
                behaviors=behaviors, seed=config.seed
            )
            write_interactions(interactions, out_dir / "raw")

        else:
            if len(filepaths) != len(behaviors):
                raise UsageError(
                    f"Need one file per behavior {behaviors}, got {len(filepaths)}."
                )

            interactions = load_interactions(
                dict(zip(behaviors, filepaths)), behaviors
            )

        split = leave_one_out_split(interactions, seed=config.seed)
        digest = save_snapshot(out_dir, interactions, split)

        stats = dataset_stats(interactions)
        stats["test_users"] = int(len(split.test_users))
        stats["dataset"] = digest
        write_yaml_file(out_dir / "stats.yaml", stats)

        self.log.info(
            f"Prepared {stats['users']} users, {stats['items']} items and "
            f"{stats['total']} interactions {stats['interactions']} with the "
            f"hash {digest}."
        )

        return digest

    def run_seeds(
        self, config: Config, split: Split, seeds: list[int], directory: Path | None
    ) -> list[dict[str, typing.Any]]:
        """Train one model per seed.

        Parameters
        ----------
        config : `Config`
            Configuration.
        split : `Split`
            Split with the behaviors of the configuration.
        seeds : `list` [`int`]
            Seeds.
        directory : `pathlib.Path` or None
            Run directory of the epoch logs and checkpoints.

        Returns
        -------
        `list` [`dict`]
            Best epoch and metrics of each seed.
        """

        graphs = build_behavior_graphs(split.train, degree_mode=config.degree_mode)

        records = list()
        for seed in seeds:
            trainer = Trainer(config, split, graphs=graphs, seed=seed, log=self.log)
            result = trainer.train(directory=directory)

            records.append(
                dict(
                    seed=seed,
                    best_epoch=result.best_epoch,
                    hr10=result.best_hr,
                    ndcg10=result.best_ndcg,
                )
            )
            self.log.info(
                f"Seed {seed}: HR@{config.topk} {result.best_hr:.4f}, "
                f"NDCG@{config.topk} {result.best_ndcg:.4f} at epoch "
                f"{result.best_epoch}."
            )

        return records

    @staticmethod
    def get_mean(records: list[dict[str, typing.Any]]) -> dict[str, float]:
        """Mean metrics over the seeds, summed in the seed order.

        Parameters
        ----------
        records : `list` [`dict`]
            Records with "hr10" and "ndcg10".

        Returns
        -------
        `dict`
            Mean "hr10" and "ndcg10".
        """

        hr = 0.0
        ndcg = 0.0
        for record in records:
            hr += record["hr10"]
            ndcg += record["ndcg10"]

        return dict(hr10=hr / len(records), ndcg10=ndcg / len(records))

    def write_metrics(
        self,
        directory: Path,
        name: str,
        config: Config,
        digest: str,
        records: list[dict[str, typing.Any]],
    ) -> dict[str, typing.Any]:
        """Write the metrics as "<name>.yaml" and the table "<name>.txt".

        Parameters
        ----------
        directory : `pathlib.Path`
            Directory.
        name : `str`
            File stem.
        config : `Config`
            Configuration.
        digest : `str`
            Dataset hash.
        records : `list` [`dict`]
            Metrics of each seed.

        Returns
        -------
        report : `dict`
            Written report.
        """

        report = dict(
            dataset=digest,
            config_hash=config.hash(),
            seeds=records,
            mean=self.get_mean(records),
        )
        write_yaml_file(directory / f"{name}.yaml", report)

        lines = [f"{'seed':>6} {'epoch':>6} {'HR@10':>8} {'NDCG@10':>8}"]
        for record in records:
            lines.append(
                f"{record['seed']:>6} {record.get('best_epoch', '-'):>6} "
                f"{record['hr10']:>8.4f} {record['ndcg10']:>8.4f}"
            )
        lines.append(
            f"{'mean':>6} {'':>6} {report['mean']['hr10']:>8.4f} "
            f"{report['mean']['ndcg10']:>8.4f}"
        )
        (directory / f"{name}.txt").write_text("\n".join(lines) + "\n")

        return report

    def train(
        self, config: Config, data_dir: Path | str, seeds: list[int]
    ) -> dict[str, typing.Any]:
        """Train the seeds on the prepared snapshot.

        Parameters
        ----------
        config : `Config`
            Configuration.
        data_dir : `pathlib.Path` or `str`
            Snapshot directory.
        seeds : `list` [`int`]
            Seeds.

        Returns
        -------
        `dict`
            Metrics report.
        """

        out_dir = self._get_out_dir()

        _, split, digest = load_snapshot(data_dir)
        split = _select_split(split, config.behaviors)

        self.write_manifest(config, digest, seeds)
        records = self.run_seeds(config, split, seeds, out_dir)

        return self.write_metrics(out_dir, "metrics", config, digest, records)

    def evaluate_run(
        self, data_dir: Path | str, threads: int | None = None
    ) -> dict[str, typing.Any]:
        """Evaluate the checkpoints of a finished run directory.

        Parameters
        ----------
        data_dir : `pathlib.Path` or `str`
            Snapshot directory.
        threads : `int` or None, optional
            Number of evaluation workers. If None, the configured value is
            used. (the default is None)

        Returns
        -------
        `dict`
            Metrics report written as "eval_metrics.yaml".

        Raises
        ------
        `UsageError`
            No manifest, missing checkpoint, or hashes differ from the
            manifest.
        """

        out_dir = self._get_out_dir()

        filepath_manifest = out_dir / "manifest.yaml"
        if not filepath_manifest.exists():
            raise UsageError(f"No manifest in the run directory {out_dir}.")

        manifest = read_yaml_file(filepath_manifest)
        config = make_config(manifest["config"])

        _, split, digest = load_snapshot(data_dir)
        if digest != manifest["dataset"]:
            raise UsageError(
                f"Dataset hash {digest} differs from the run's {manifest['dataset']}."
            )

        split = _select_split(split, config.behaviors)
        graphs = build_behavior_graphs(split.train, degree_mode=config.degree_mode)

        records = list()
        for seed in manifest["seeds"]:
            filepath = out_dir / f"checkpoint_seed{seed}.npz"
            if not filepath.exists():
                raise UsageError(f"No checkpoint {filepath}.")

            checkpoint = load_checkpoint(filepath)
            if checkpoint.config_hash != config.hash():
                raise UsageError(
                    f"Configuration hash of {filepath} differs from the manifest."
                )

            model = Model(
                config, split.train.num_users, split.train.num_items, log=self.log
            )
            model.params.set_values(checkpoint.values)

            result = evaluate(model, graphs, split, config, threads=threads)
            records.append(
                dict(
                    seed=seed,
                    best_epoch=checkpoint.epoch,
                    hr10=result.hr,
                    ndcg10=result.ndcg,
                )
            )

        return self.write_metrics(out_dir, "eval_metrics", config, digest, records)

    def ablate(
        self,
        config: Config,
        data_dir: Path | str,
        variants: list[str],
        seeds: list[int],
        grid: tuple[str, list[typing.Any]] | None = None,
    ) -> list[dict[str, typing.Any]]:
        """Run the variants (and the grid axis) and write the comparison.

        Each run writes its checkpoints and metrics into the subdirectory named
        after its label, with "/" replaced by "_".

        Parameters
        ----------
        config : `Config`
            Base configuration.
        data_dir : `pathlib.Path` or `str`
            Snapshot directory.
        variants : `list` [`str`]
            Variant names.
        seeds : `list` [`int`]
            Seeds.
        grid : `tuple` or None, optional
            Key and values of the grid axis. (the default is None)

        Returns
        -------
        rows : `list` [`dict`]
            Mean metrics of each run, written as "ablation.yaml" and the
            table "ablation.txt".
        """

        out_dir = self._get_out_dir()

        # All configurations are validated before any compute
        runs: list[tuple[str, Config]] = list()
        for name in variants:
            variant = apply_variant(config, name)
            if grid is None:
                runs.append((name, variant))
                continue

            key, values = grid
            for value in values:
                label = f"{name}_{key}={value}"
                runs.append((label, make_config(variant.to_dict(), **{key: value})))

        _, split, digest = load_snapshot(data_dir)
        self.write_manifest(config, digest, seeds)

        rows = list()
        for label, run_config in runs:
            self.log.info(f"Run {label}.")

            directory = out_dir / label.replace("/", "_")
            directory.mkdir(parents=True, exist_ok=True)

            records = self.run_seeds(
                run_config,
                _select_split(split, run_config.behaviors),
                seeds,
                directory,
            )
            report = self.write_metrics(
                directory, "metrics", run_config, digest, records
            )
            rows.append(dict(variant=label, **report["mean"]))

        write_yaml_file(out_dir / "ablation.yaml", rows)

        width = max(len("variant"), *(len(row["variant"]) for row in rows))
        lines = [f"{'variant':<{width}} {'HR@10':>8} {'NDCG@10':>8}"]
        for row in rows:
            lines.append(
                f"{row['variant']:<{width}} {row['hr10']:>8.4f} {row['ndcg10']:>8.4f}"
            )
        (out_dir / "ablation.txt").write_text("\n".join(lines) + "\n")

        return rows

    def gradcheck(
        self,
        content: dict[str, typing.Any],
        variant: str | None = None,
        fault_injection: bool = False,
    ) -> VerificationReport:
        """Run the verification suite on the bundled fixture.

        Parameters
        ----------
        content : `dict`
            Configuration values applied on the fixture configuration. The
            behaviors, dimension and layers stay the fixture's.
        variant : `str` or None, optional
            Variant name. (the default is None)
        fault_injection : `bool`, optional
            Corrupt one analytic gradient. (the default is False)

        Returns
        -------
        report : `VerificationReport`
            Report, written as "gradcheck.yaml" when there is an output
            directory.

        Raises
        ------
        `UsageError`
            The variant changes the behaviors of the fixture.
        """

        fixture = load_fixture()

        overrides = dict(content)
        for key in FIXTURE_KEYS:
            if key in overrides:
                self.log.info(f"Keep the fixture value of {key}.")
                overrides.pop(key)

        config = get_fixture_config(fixture, **overrides)
        if variant is not None:
            config = apply_variant(config, variant)
            if config.behaviors != fixture.behaviors:
                raise UsageError(f"Variant {variant} can not run on the fixture.")

        report = run_verification(
            fixture, config, fault_injection=fault_injection, log=self.log
        )

        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            write_yaml_file(self.out_dir / "gradcheck.yaml", report.to_dict())

        return report


def run_application() -> None:
    """Run the application."""

    app = QCoreApplication(sys.argv)
    app.setApplicationName("mbrec")

    sys.exit(main(app.arguments()))


def _get_seeds(config: Config, text: str) -> list[int]:
    num_seeds = config.num_seeds if text == "" else _to_int(text, "seeds")
    if num_seeds < 1:
        raise UsageError(f"Number of seeds should be >= 1: {num_seeds}.")

    return [config.seed + idx for idx in range(num_seeds)]


def _to_int(text: str, name: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise UsageError(f"{name} should be an integer: {text!r}.")


def _to_float(text: str, name: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise UsageError(f"{name} should be a number: {text!r}.")


def _split_names(text: str) -> list[str]:
    return [name.strip() for name in text.split(",") if name.strip()]


def main(argv: list[str]) -> int:
    """Main application.

    Parameters
    ----------
    argv : `list`
        Arguments from the command line.

    Returns
    -------
    `int`
        Exit code: 0 success, 1 usage or configuration error, 2 data error,
        3 numeric or verification failure.
    """

    # Set the parser
    parser = QCommandLineParser()
    parser.setApplicationDescription(
        "Train and verify the multi-behavior recommendation model."
    )
    option_help = parser.addHelpOption()

    parser.addPositionalArgument("command", f"One of {', '.join(COMMANDS)}.")
    parser.addPositionalArgument(
        "files", "Interaction files of the prepare command.", "[files...]"
    )

    option_verbose = QCommandLineOption(
        ["v", "verbose"], "Print log messages to terminal."
    )
    option_log_level = QCommandLineOption(
        ["d", "debuglevel"],
        (
            "Debug logging level: CRITICAL (50), ERROR (40), WARNING (30), "
            "INFO (20), DEBUG (10), NOTSET (0). The default is 20."
        ),
        "level",
        "20",
    )
    option_no_log_file = QCommandLineOption(
        ["no-logfile"], "Do not write log messages to file."
    )

    option_config = QCommandLineOption(["c", "config"], "Configuration file.", "file")
    option_data = QCommandLineOption(["data"], "Prepared snapshot directory.", "dir")
    option_out = QCommandLineOption(["o", "out"], "Output directory.", "dir")
    option_seeds = QCommandLineOption(["seeds"], "Number of seeds.", "count")
    option_threads = QCommandLineOption(
        ["threads"], "Number of evaluation workers.", "count"
    )
    option_lr = QCommandLineOption(["lr"], "Learning rate.", "value")
    option_set = QCommandLineOption(
        ["set"], "Override a configuration value, repeatable.", "key=value"
    )
    option_behaviors = QCommandLineOption(
        ["behaviors"], "Ordered behavior names, comma separated.", "names"
    )
    option_variant = QCommandLineOption(
        ["variant"], "Variant names, comma separated.", "names"
    )
    option_grid = QCommandLineOption(
        ["grid"], "Grid axis of the ablation.", "key=v1,v2"
    )
    option_fault_injection = QCommandLineOption(
        ["fault-injection"], "Corrupt one analytic gradient in gradcheck."
    )
    option_synthetic = QCommandLineOption(
        ["synthetic"], "Prepare the synthetic dataset instead of the files."
    )

    for option in (
        option_verbose,
        option_log_level,
        option_no_log_file,
        option_config,
        option_data,
        option_out,
        option_seeds,
        option_threads,
        option_lr,
        option_set,
        option_behaviors,
        option_variant,
        option_grid,
        option_fault_injection,
        option_synthetic,
    ):
        parser.addOption(option)

    if not parser.parse(list(argv)):
        print(parser.errorText(), file=sys.stderr)
        return UsageError.exit_code

    if parser.isSet(option_help):
        print(parser.helpText())
        return 0

    arguments = parser.positionalArguments()
    if (len(arguments) == 0) or (arguments[0] not in COMMANDS):
        print(f"Need one command of {COMMANDS}.", file=sys.stderr)
        return UsageError.exit_code

    command, files = arguments[0], list(arguments[1:])

    try:
        log_level = _to_int(parser.value(option_log_level), "debuglevel")
    except UsageError as error:
        print(error, file=sys.stderr)
        return error.exit_code

    out_dir = parser.value(option_out) or None
    application = Application(
        out_dir,
        not parser.isSet(option_no_log_file),
        parser.isSet(option_verbose),
        log_level,
        command_line=list(argv),
    )

    try:
        content: dict[str, typing.Any] = dict()
        filepath_config = parser.value(option_config)
        if filepath_config != "":
            content = read_yaml_file(filepath_config) or dict()
            if not isinstance(content, dict):
                raise ConfigurationError(
                    f"Configuration file {filepath_config} is not a mapping."
                )

        for text in parser.values(option_set):
            key, value = parse_override(text)
            content[key] = value

        if parser.isSet(option_lr):
            content["lr"] = _to_float(parser.value(option_lr), "lr")
        if parser.isSet(option_threads):
            content["threads"] = _to_int(parser.value(option_threads), "threads")

        variants = _split_names(parser.value(option_variant))

        if command == "gradcheck":
            if len(variants) > 1:
                raise UsageError("gradcheck takes one variant.")

            report = application.gradcheck(
                content,
                variant=variants[0] if variants else None,
                fault_injection=parser.isSet(option_fault_injection),
            )
            return 0 if report.passed else VerificationError.exit_code

        config = read_config(None, **content)

        if command == "prepare":
            behaviors = _split_names(parser.value(option_behaviors)) or None
            application.prepare(
                config,
                files,
                behaviors=behaviors,
                synthetic=parser.isSet(option_synthetic),
            )
            return 0

        data_dir = parser.value(option_data)
        if data_dir == "":
            raise UsageError("Snapshot directory is needed (--data).")

        if command == "eval":
            threads = (
                _to_int(parser.value(option_threads), "threads")
                if parser.isSet(option_threads)
                else None
            )
            application.evaluate_run(data_dir, threads=threads)
            return 0

        seeds = _get_seeds(config, parser.value(option_seeds))

        if command == "train":
            if len(variants) > 1:
                raise UsageError("train takes one variant, use ablate for more.")
            if variants:
                config = apply_variant(config, variants[0])

            application.train(config, data_dir, seeds)
            return 0

        if len(variants) == 0:
            raise UsageError("ablate needs --variant.")

        grid = (
            parse_grid(parser.value(option_grid)) if parser.isSet(option_grid) else None
        )
        application.ablate(config, data_dir, variants, seeds, grid=grid)
        return 0

    except DOMAIN_ERRORS as error:
        application.log.error(f"{type(error).__name__}: {error}")
        return error.exit_code

    finally:
        application.close()
