"""Command-line front end.

Exit codes: 0 success, 1 I/O failure, 2 usage or validation error,
3 computation failure. Every command that writes files also writes a
``*.manifest.json`` next to them with the effective configuration, input
digests and output digests.

Any subcommand accepts ``--config FILE``: a flat text file of
``key = value`` lines (``#`` starts a comment) whose keys are the long
option names, e.g. ``levels = 3`` or ``tau = 0.5``. Explicit flags override
the file, which overrides the built-in defaults.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, hyper, nifti_io
from .dtcwt import DEFAULT_LEVELS
from .exceptions import DecompositionError, FreqsegError, NiftiError, SpecError, ValidationError
from .filters import load_dtcwt_filters, load_nsct_kernels
from .fuse import EnsembleSpec, argmax_labels, fuse_probs
from .lesionmetrics import MetricConfig, lesion_wise_scores
from .prep import MODALITIES, NNUNET_PATCH, CaseBundle, PatchSpec, decompose_case, extract_patch, zscore
from .volgrid import SCHEMAS, require_compatible

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_COMPUTE = 0, 1, 2, 3
DEFAULT_PATTERN = "{id}-{mod}.nii.gz"


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    inputs: dict = field(default_factory=dict)
    outputs: dict = field(default_factory=dict)
    version: str = __version__
    duration_s: float = 0.0

    def add_input(self, path) -> None:
        self.inputs[str(path)] = sha256(path)

    def add_output(self, path) -> None:
        self.outputs[str(path)] = sha256(path)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")


def manifest_path(output) -> Path:
    output = Path(output)
    if output.is_dir():
        return output / "manifest.json"
    return output.with_name(output.name + ".manifest.json")


def _jsonable(args: argparse.Namespace) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "command_name"):
            continue
        if isinstance(value, Path):
            value = str(value)
        elif isinstance(value, (list, tuple)):
            value = [str(v) if isinstance(v, Path) else v for v in value]
        out[key] = value
    return out


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _find_case(case_dir: Path, pattern: str) -> tuple[str, dict[str, Path]]:
    if not case_dir.is_dir():
        raise CommandError(f"case directory {case_dir} does not exist", EXIT_IO)
    case_id = case_dir.name
    found = {m: case_dir / pattern.format(id=case_id, mod=m) for m in MODALITIES}
    missing = [m for m, p in found.items() if not p.is_file()]
    if len(missing) == len(MODALITIES):
        # directory name differs from the file prefix: infer the id from t1n
        probe = sorted(case_dir.glob(pattern.format(id="*", mod=MODALITIES[0])))
        if len(probe) == 1:
            prefix, suffix = pattern.split("{id}", 1)
            tail = suffix.format(mod=MODALITIES[0])
            case_id = probe[0].name[len(prefix):len(probe[0].name) - len(tail)]
            found = {m: case_dir / pattern.format(id=case_id, mod=m) for m in MODALITIES}
            missing = [m for m, p in found.items() if not p.is_file()]
    if missing:
        raise CommandError(f"case {case_id}: missing modality file(s) {', '.join(missing)}", EXIT_USAGE)
    return case_id, found


def cmd_decompose(args, manifest: RunManifest) -> Path | None:
    if args.levels < 1:
        raise SpecError(f"--levels must be >= 1, got {args.levels}")
    dt_filters = load_dtcwt_filters(args.filters)
    ns_kernels = load_nsct_kernels(args.filters)
    if args.filters:
        manifest.add_input(args.filters)
    cases = [_find_case(Path(c), args.pattern) for c in args.case]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def run(case):
        case_id, paths = case
        vols = {m: nifti_io.read_scalar(p) for m, p in paths.items()}
        bundle = CaseBundle(case_id, vols)
        channels = decompose_case(bundle, args.levels, dt_filters, ns_kernels)
        written = []
        for name, vol in channels.items():
            target = out / f"{case_id}-{name}.nii.gz"
            nifti_io.write_scalar(target, vol)
            written.append(target)
        return paths, written

    if args.jobs > 1 and len(cases) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(run, cases))
    else:
        results = [run(c) for c in cases]
    for paths, written in results:
        for p in paths.values():
            manifest.add_input(p)
        for p in written:
            manifest.add_output(p)
    return manifest_path(out)


def cmd_fuse(args, manifest: RunManifest) -> Path | None:
    schema = SCHEMAS[args.schema]
    models = [nifti_io.read_prob(p) for p in args.probs]
    spec = EnsembleSpec.parse(args.weights) if args.weights else EnsembleSpec.equal(len(models))
    fused = fuse_probs(models, spec)
    labels = argmax_labels(fused, schema)
    nifti_io.write_labels(args.out, labels)
    for p in args.probs:
        manifest.add_input(p)
    manifest.add_output(args.out)
    if args.save_prob:
        nifti_io.write_prob(args.save_prob, fused)
        manifest.add_output(args.save_prob)
    return manifest_path(args.out)


def cmd_eval(args, manifest: RunManifest) -> Path | None:
    schema = SCHEMAS[args.schema]
    cfg = MetricConfig(
        connectivity=args.connectivity,
        match_dilation_voxels=args.dilation,
        tau_mm=args.tau,
        min_lesion_voxels=args.min_lesion_voxels,
        whole_region_nsd=args.whole_region_nsd,
    )
    pred = nifti_io.read_labels(args.pred, schema)
    ref = nifti_io.read_labels(args.ref, schema)
    require_compatible(ref.geometry, pred.geometry, "reference and prediction")
    report = lesion_wise_scores(ref, pred, schema, cfg).to_dict()
    report["schema"] = args.schema
    Path(args.report).write_text(json.dumps(report, indent=2) + "\n")
    manifest.add_input(args.pred)
    manifest.add_input(args.ref)
    manifest.add_output(args.report)
    return manifest_path(args.report)


def cmd_znorm(args, manifest: RunManifest) -> Path | None:
    vol = nifti_io.read_scalar(args.input)
    nifti_io.write_scalar(args.out, zscore(vol, args.mode))
    manifest.add_input(args.input)
    manifest.add_output(args.out)
    return manifest_path(args.out)


def cmd_patch(args, manifest: RunManifest) -> Path | None:
    spec = PatchSpec(args.size, args.mode, args.seed, args.pad_value)
    vol = nifti_io.read_scalar(args.input)
    nifti_io.write_scalar(args.out, extract_patch(vol, spec))
    manifest.add_input(args.input)
    manifest.add_output(args.out)
    return manifest_path(args.out)


def cmd_lr_curve(args, manifest: RunManifest) -> Path | None:
    spec = hyper.ScheduleSpec(lr_init=args.init, max_epoch=args.epochs)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["epoch", "lr"])
    for epoch, lr in hyper.lr_curve(spec):
        writer.writerow([epoch, repr(lr)])
    return _emit(args.out, buf.getvalue(), manifest)


def cmd_init_sample(args, manifest: RunManifest) -> Path | None:
    spec = hyper.InitSpec(args.d, args.gamma)
    if args.stats:
        text = json.dumps(hyper.sample_stats(spec, args.n, args.seed), indent=2) + "\n"
    else:
        draws = hyper.sample_init(spec, args.n, args.seed)
        text = "".join(f"{x!r}\n" for x in draws.tolist())
    return _emit(args.out, text, manifest)


def _emit(out, text: str, manifest: RunManifest) -> Path | None:
    if out is None:
        sys.stdout.write(text)
        return None
    Path(out).write_text(text)
    manifest.add_output(out)
    return manifest_path(out)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _size(text: str) -> tuple[int, int, int]:
    try:
        parts = tuple(int(t) for t in text.replace("x", ",").split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad size {text!r}; expected e.g. 96,160,160") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"size needs three integers, got {text!r}")
    return parts


def _bool(text: str) -> bool:
    lowered = str(text).strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="freqseg",
        description="Frequency decomposition, ensemble fusion and lesion-wise evaluation for brain MRI.",
        epilog=__doc__.split("\n\n", 1)[1],
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value file; flags override it")
    sub = parser.add_subparsers(dest="command_name", metavar="COMMAND", required=True)

    p = sub.add_parser("decompose", parents=[common], help="4 modalities -> 20 LF/HF channels per case")
    p.add_argument("--case", action="append", required=True, help="case directory (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--levels", type=int, default=DEFAULT_LEVELS, help="DTCWT levels (default %(default)s)")
    p.add_argument("--filters", help="filter coefficient file (default: bundled tables)")
    p.add_argument("--pattern", default=DEFAULT_PATTERN, help="input file name pattern (default %(default)s)")
    p.add_argument("--jobs", type=int, default=1, help="cases processed in parallel")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("fuse", parents=[common], help="weighted average of probability maps, then argmax")
    p.add_argument("--probs", nargs="+", required=True, help="4-D probability NIfTI files, class axis last")
    p.add_argument("--weights", help="comma-separated weights summing to 1 (default: equal)")
    p.add_argument("--out", required=True, help="output label map")
    p.add_argument("--save-prob", help="also write the fused probabilities here")
    p.add_argument("--schema", default="ped2025", choices=sorted(SCHEMAS))
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", parents=[common], help="lesion-wise Dice and NSD report")
    p.add_argument("--pred", required=True)
    p.add_argument("--ref", required=True)
    p.add_argument("--report", required=True, help="output JSON")
    p.add_argument("--schema", default="ped2025", choices=sorted(SCHEMAS))
    p.add_argument("--tau", type=float, default=0.5, help="NSD tolerance in mm (default %(default)s)")
    p.add_argument("--dilation", type=int, default=1, help="lesion matching dilation in voxels")
    p.add_argument("--connectivity", type=int, default=26, choices=(6, 18, 26))
    p.add_argument("--min-lesion-voxels", type=int, default=0)
    p.add_argument("--whole-region-nsd", action="store_true", help="also report NSD over the whole region")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("znorm", parents=[common], help="z-score normalise a volume")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default="nonzero", choices=("nonzero", "all"))
    p.set_defaults(func=cmd_znorm)

    p = sub.add_parser("patch", parents=[common], help="crop or pad a volume to a fixed patch size")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=_size, default=NNUNET_PATCH, help="e.g. 96,160,160 (default)")
    p.add_argument("--mode", default="centered", choices=("centered", "random", "seeded-random"))
    p.add_argument("--seed", type=int)
    p.add_argument("--pad-value", type=float, default=0.0)
    p.set_defaults(func=cmd_patch)

    p = sub.add_parser("lr-curve", parents=[common], help="polynomial learning-rate schedule as CSV")
    p.add_argument("--init", type=float, default=1e-2)
    p.add_argument("--epochs", type=int, default=1000)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_lr_curve)

    p = sub.add_parser("init-sample", parents=[common], help="draw gamma-scaled Gaussian initial weights")
    p.add_argument("--d", type=int, required=True, help="fan-in")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--n", type=int, default=1_000_000)
    p.add_argument("--seed", type=int)
    p.add_argument("--stats", action="store_true", help="emit JSON summary instead of the draws")
    p.add_argument("--out", help="output path (default: stdout)")
    p.set_defaults(func=cmd_init_sample)
    return parser


def read_config(path) -> dict[str, str]:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CommandError(f"{path}:{lineno}: expected 'key = value'", EXIT_USAGE)
        key, value = (s.strip() for s in line.split("=", 1))
        values[key.lstrip("-").replace("-", "_")] = value
    return values


def _apply_config(sub: argparse.ArgumentParser, config: dict[str, str]) -> None:
    actions = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in config.items():
        action = actions.get(key)
        if action is None:
            raise CommandError(f"config key {key!r} is not an option of {sub.prog}", EXIT_USAGE)
        try:
            if isinstance(action, argparse._StoreTrueAction):
                value = _bool(raw)
            elif isinstance(action, argparse._AppendAction) or action.nargs == "+":
                conv = action.type or str
                value = [conv(v) for v in raw.split()]
            else:
                value = (action.type or str)(raw)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise CommandError(f"config key {key!r}: {exc}", EXIT_USAGE) from None
        if action.choices is not None and value not in action.choices:
            raise CommandError(f"config key {key!r}: {value!r} not in {list(action.choices)}", EXIT_USAGE)
        action.required = False
        defaults[key] = value
    sub.set_defaults(**defaults)


def _config_path(argv: list[str]) -> str | None:
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            return argv[i + 1]
        if tok.startswith("--config="):
            return tok.split("=", 1)[1]
    return None


def _parse(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    config_file = _config_path(argv)
    if config_file:
        command = next((t for t in argv if not t.startswith("-")), None)
        subparsers = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
        if command in subparsers.choices:
            try:
                config = read_config(config_file)
            except OSError as exc:
                raise CommandError(f"cannot read config {config_file}: {exc}", EXIT_IO) from None
            _apply_config(subparsers.choices[command], config)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parse(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    except CommandError as exc:
        print(f"freqseg: error: {exc}", file=sys.stderr)
        return exc.code

    manifest = RunManifest(args.command_name, _jsonable(args))
    start = time.perf_counter()
    try:
        where = args.func(args, manifest)
    except CommandError as exc:
        print(f"freqseg {args.command_name}: error: {exc}", file=sys.stderr)
        return exc.code
    except (NiftiError, OSError) as exc:
        print(f"freqseg {args.command_name}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValidationError as exc:
        print(f"freqseg {args.command_name}: invalid input: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DecompositionError, FreqsegError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"freqseg {args.command_name}: computation failed: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    manifest.duration_s = round(time.perf_counter() - start, 6)
    if where is not None:
        manifest.write(where)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
