"""Command-line front end: ``evolve``, ``sweep``, ``ep`` and ``fit``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 no exceptional point in range or fit failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from . import measurement as meas
from .dynamics import IntegrationError
from .operators import EigenSolverError
from .scenarios import ConfigError, run_ep, run_evolve, run_sweep
from .spectra import NoEPError

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = ["main", "load_config", "format_csv", "write_atomic", "EXIT_OK", "EXIT_CONFIG",
           "EXIT_NUMERIC", "EXIT_NO_RESULT"]

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_NO_RESULT = 0, 2, 3, 4
FLOAT_FMT = ".16e"
TWO_PI = 2.0 * math.pi


class FitFailure(RuntimeError):
    pass


def load_config(path) -> dict:
    """Read a TOML config, or the config echo of a JSON run manifest."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc.strerror}") from None
    if path.suffix == ".json":
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ConfigError("--config", f"invalid JSON: {exc}") from None
        return doc["config"] if isinstance(doc, dict) and "config" in doc else doc
    try:
        return tomllib.loads(data.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError("--config", f"invalid TOML: {exc}") from None


def _fmt(x) -> str:
    return format(float(x), FLOAT_FMT)


def format_csv(header: Sequence[str], columns: Sequence[np.ndarray]) -> str:
    """Fixed 17-significant-digit scientific CSV with ``\\n`` line endings."""
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def write_atomic(path: Path, text: str) -> str:
    """Write ``text`` via a temporary file and rename; returns its sha256."""
    path.parent.mkdir(parents=True, exist_ok=True)
    data = text.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(data).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (str, int, bool)) or obj is None:
        return obj
    return repr(obj)


def _dump(doc) -> str:
    return json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n"


def _manifest(out: Path, command: str, cfg: dict, config_path, hashes: dict, t_start: float,
              meta: Optional[dict] = None) -> None:
    doc = {
        "tool": "rydiss",
        "version": __version__,
        "command": command,
        "config_path": None if config_path is None else str(config_path),
        "config": cfg,
        "wall_clock_s": time.perf_counter() - t_start,
        "outputs": hashes,
        "meta": meta or {},
    }
    write_atomic(out / "manifest.json", _dump(doc))


def cmd_evolve(cfg: dict, out: Path, jobs: int) -> tuple[dict, dict]:
    result = run_evolve(cfg, jobs=jobs)
    if result.scan is not None:
        names = list(result.scan)
        text = format_csv(names, [result.scan[k] for k in names])
        return {"scan.csv": write_atomic(out / "scan.csv", text)}, result.meta
    names = list(result.tracks)
    text = format_csv(["t_us"] + names, [result.times] + [result.tracks[k] for k in names])
    return {"timeseries.csv": write_atomic(out / "timeseries.csv", text)}, result.meta


def cmd_sweep(cfg: dict, out: Path, jobs: int) -> tuple[dict, dict]:
    grid = run_sweep(cfg, jobs=jobs)
    header = [ax.name for ax in grid.axes] + ["branch_index", "re_lambda_MHz", "im_lambda_MHz"]
    lines = [",".join(header)]
    for row in grid.rows():
        *coords, branch, lam = row
        lam = lam / TWO_PI
        lines.append(",".join([*(_fmt(c) for c in coords), str(branch), _fmt(lam.real), _fmt(lam.imag)]))
    text = "\n".join(lines) + "\n"
    errors = {",".join(map(str, k)): v for k, v in grid.errors.items()}
    meta = {"family": grid.builder_id, "shape": list(grid.shape), "failed_points": errors}
    return {"sweep.csv": write_atomic(out / "sweep.csv", text)}, meta


def cmd_ep(cfg: dict, out: Path) -> tuple[dict, dict]:
    report = run_ep(cfg)
    return {"ep.json": write_atomic(out / "ep.json", _dump(report))}, {}


def read_series_csv(path, track: Optional[str] = None) -> tuple[np.ndarray, np.ndarray, str]:
    """``(t, y, track_name)`` from a ``t_us,<track>...`` CSV."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ConfigError("--input", f"cannot read {path}: {exc.strerror}") from None
    if not rows or not rows[0] or rows[0][0].strip() != "t_us":
        raise ConfigError("--input", "first column must be t_us")
    header = [h.strip() for h in rows[0]]
    if track is None:
        candidates = [h for h in header[1:] if h not in ("norm", "trace") and not h.endswith("_err")
                      and not h.endswith("_stderr")]
        if len(header) == 2:
            candidates = header[1:]
        if not candidates:
            raise ConfigError("--input", "no data column")
        track = candidates[0]
    if track not in header:
        raise ConfigError("--track", f"{track!r} not in {header[1:]}")
    col = header.index(track)
    try:
        data = np.array([[float(r[0]), float(r[col])] for r in rows[1:] if r], dtype=float)
    except (ValueError, IndexError):
        raise ConfigError("--input", "malformed numeric row") from None
    if data.size == 0:
        raise ConfigError("--input", "no data rows")
    return data[:, 0], data[:, 1], track


def cmd_fit(cfg: dict, out: Path) -> tuple[dict, dict]:
    sec = cfg.get("fit", {})
    model = sec.get("model")
    if model not in ("exp_loss", "cosine"):
        raise ConfigError("fit.model", "must be exp_loss or cosine")
    if "input" not in sec:
        raise ConfigError("fit.input", "required")
    t, y, track = read_series_csv(sec["input"], sec.get("track"))
    n_shots = sec.get("n_shots")
    fn = meas.fit_exponential_loss if model == "exp_loss" else meas.fit_cosine
    try:
        result = fn((t, y), n_shots=n_shots)
    except ValueError as exc:
        raise ConfigError("--input", str(exc)) from None
    report = result.as_dict()
    report["track"] = track
    if model == "exp_loss":
        report["gamma_MHz"] = result.params["Gamma"]
    else:
        report["w_MHz"] = result.params["nu"]
        report["pi_time_us"] = 1.0 / (4.0 * result.params["nu"]) if result.converged else None
    hashes = {"fit.json": write_atomic(out / "fit.json", _dump(report))}
    if not result.converged:
        raise FitFailure(result.message, hashes)
    return hashes, {}


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rydiss", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, help_ in (("evolve", "time evolution of a scenario"),
                        ("sweep", "eigenvalue sweep of a model family"),
                        ("ep", "exceptional-point / symmetry-breaking search"),
                        ("fit", "fit a loss or Rabi curve from a CSV")):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", required=(name != "fit"), help="TOML config or run manifest")
        s.add_argument("--out", default="out", help="output directory")
        s.add_argument("--jobs", type=int, default=1, help="worker threads")
        s.add_argument("--seed", type=int, default=None, help="overrides the config seed")
        if name == "fit":
            s.add_argument("--input", help="CSV with t_us and one or more tracks")
            s.add_argument("--model", choices=("exp_loss", "cosine"))
            s.add_argument("--track", help="column to fit")
            s.add_argument("--n-shots", type=int, dest="n_shots",
                           help="shots per point, enables binomial weighting")
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    t_start = time.perf_counter()
    out = Path(args.out)
    err = sys.stderr
    try:
        if args.jobs < 1:
            raise ConfigError("--jobs", "must be >= 1")
        cfg = load_config(args.config) if args.config else {}
        if args.command == "fit":
            sec = dict(cfg.get("fit", {}))
            if "input" in sec and args.config and not Path(sec["input"]).is_absolute():
                # inputs named in a config are relative to the config file
                sec["input"] = str(Path(args.config).parent / sec["input"])
            for key in ("input", "model", "track", "n_shots"):
                if getattr(args, key) is not None:
                    sec[key] = getattr(args, key)
            cfg = dict(cfg, fit=sec)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed", "must be an unsigned 64-bit integer")
            cfg = dict(cfg, seed=args.seed)
        if args.command == "evolve":
            hashes, meta = cmd_evolve(cfg, out, args.jobs)
        elif args.command == "sweep":
            hashes, meta = cmd_sweep(cfg, out, args.jobs)
        elif args.command == "ep":
            hashes, meta = cmd_ep(cfg, out)
        else:
            hashes, meta = cmd_fit(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=err)
        return EXIT_CONFIG
    except NoEPError as exc:
        print(f"no EP in range: {exc}", file=err)
        return EXIT_NO_RESULT
    except FitFailure as exc:
        message, hashes = exc.args
        _manifest(out, args.command, cfg, args.config, hashes, t_start, {"converged": False})
        print(f"fit did not converge: {message}", file=err)
        return EXIT_NO_RESULT
    except (IntegrationError, EigenSolverError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=err)
        return EXIT_NUMERIC
    _manifest(out, args.command, cfg, args.config, hashes, t_start, meta)
    print(json.dumps({"out": str(out), "outputs": sorted(hashes)}), file=sys.stdout)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
