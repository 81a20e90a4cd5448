"""Command-line front end.

Subcommands
-----------
simulate   config-driven Monte Carlo benchmark over noise models and
           sample sizes; writes a per-replicate CSV, a text report, and
           an error-curve figure.
fit        estimate Kronecker factors from matrix files; writes factor
           matrices, the spectrum, and a machine-readable summary.
predict    apply a saved fit to new predictor matrices.
spectrum   cumulative singular-value fractions of a coefficient matrix
           and of its rearrangement (plot-ready CSV plus figure).
twogroup   two-group channel-effect analysis with Welch t-tests and
           Benjamini-Yekutieli adjustment.

Exit codes: 0 success, 2 input error, 3 numeric failure, 4 config error.
"""

import argparse
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .analysis import GroupData, two_group_analysis
from .errors import ConfigError, DimensionError, NumericError, SingularDesignError
from .estimator import (
    fit_ols_nu,
    fit_ols_nu_stream,
    kro_pro_fac_from_nu,
    nu_hat_from_report,
    predict,
    truncate_response_rows,
    variant_low_rank_response,
    variant_reduced_rank_ols,
)
from .fileio import (
    KstWriter,
    format_float,
    iter_kst,
    kst_header,
    read_config_file,
    read_matrix,
    sniff_format,
    write_kmx,
    write_matrix,
)
from .baseline_mle import mle_fit
from .metrics import cumulative_singular_fraction, relative_error
from .simgen import (
    Dataset,
    NoiseModelSpec,
    gen_coefficients,
    gen_design,
    noise_chunks,
)
from .tensor_core import Dims, rearrange

ENV_THREADS = "KROPROFAC_THREADS"

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3
EXIT_CONFIG = 4


# ---------------------------------------------------------------------------
# Method specifications


@dataclass(frozen=True)
class Method:
    """One estimation method: kind in {kpf, kpf_alpha, rdu_rank, mle} with
    an optional integer parameter (alpha or gamma)."""

    kind: str
    param: int | None = None

    def label(self):
        if self.param is None:
            return self.kind
        return f"{self.kind}({self.param})"


def parse_method(token):
    token = token.strip()
    if token in ("kpf", "mle"):
        return Method(token)
    for kind in ("kpf_alpha", "rdu_rank"):
        if token.startswith(kind + "(") and token.endswith(")"):
            inner = token[len(kind) + 1:-1]
            try:
                return Method(kind, int(inner))
            except ValueError:
                raise ConfigError(f"bad method parameter in {token!r}")
    raise ConfigError(
        f"unknown method {token!r}; expected kpf, kpf_alpha(A), rdu_rank(G), or mle"
    )


# ---------------------------------------------------------------------------
# Experiment configuration


CONFIG_KEYS = (
    "p1", "p2", "q1", "q2", "d", "n_grid", "noise", "bandwidth", "rho",
    "structure_seed", "methods", "replicates", "seed_base", "out", "d_bar",
    "storage", "chunk_rows", "threads", "plots", "dump",
)


@dataclass
class ExperimentConfig:
    dims: Dims
    d_true: int
    n_grid: list
    noise: NoiseModelSpec | None
    methods: list
    replicates: int
    seed_base: int
    out: str
    d_bar: int | None = None
    storage: str = "memory"
    chunk_rows: int = 256
    threads: int | None = None
    plots: bool = True
    dump: bool = False

    def echo_lines(self):
        d = self.dims
        lines = [
            f"p1 = {d.p1}", f"p2 = {d.p2}", f"q1 = {d.q1}", f"q2 = {d.q2}",
            f"d = {self.d_true}",
            "n_grid = " + ", ".join(str(n) for n in self.n_grid),
        ]
        if self.noise is None:
            lines.append("noise = none")
        else:
            lines.append(f"noise = {self.noise.kind}")
            if self.noise.kind == "banded":
                lines.append(f"bandwidth = {self.noise.bandwidth}")
                lines.append(f"structure_seed = {self.noise.structure_seed}")
            if self.noise.kind == "ar1":
                lines.append(f"rho = {format_float(self.noise.rho)}")
        lines += [
            "methods = " + ", ".join(m.label() for m in self.methods),
            f"replicates = {self.replicates}",
            f"seed_base = {self.seed_base}",
            f"out = {self.out}",
            f"storage = {self.storage}",
            f"chunk_rows = {self.chunk_rows}",
        ]
        if self.d_bar is not None:
            lines.append(f"d_bar = {self.d_bar}")
        return lines


def _parse_bool(raw, key):
    low = str(raw).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {raw!r}")


def _parse_int(raw, key):
    try:
        return int(str(raw).strip())
    except ValueError:
        raise ConfigError(f"{key}: expected an integer, got {raw!r}")


def build_config(raw):
    """Validate a raw key-value mapping into an ExperimentConfig.

    Unknown keys are errors (fail fast); missing required keys too.
    """
    unknown = sorted(set(raw) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    required = ("p1", "p2", "q1", "q2", "d", "n_grid", "methods",
                "replicates", "seed_base", "out")
    missing = sorted(k for k in required if k not in raw or raw[k] in (None, ""))
    if missing:
        raise ConfigError(f"missing config keys: {', '.join(missing)}")

    dims = Dims(*(_parse_int(raw[k], k) for k in ("p1", "p2", "q1", "q2")))
    d_true = _parse_int(raw["d"], "d")
    n_grid = [_parse_int(tok, "n_grid") for tok in str(raw["n_grid"]).split(",") if tok.strip()]
    if not n_grid or any(n < 1 for n in n_grid):
        raise ConfigError(f"n_grid must be positive integers, got {raw['n_grid']!r}")

    kind = str(raw.get("noise", "none")).strip().lower()
    try:
        if kind in ("none", ""):
            noise = None
        elif kind == "identity":
            noise = NoiseModelSpec.identity()
        elif kind == "banded":
            if "bandwidth" not in raw:
                raise ConfigError("banded noise requires the bandwidth key")
            noise = NoiseModelSpec.banded(
                _parse_int(raw["bandwidth"], "bandwidth"),
                structure_seed=_parse_int(raw.get("structure_seed", 0), "structure_seed"),
            )
        elif kind == "ar1":
            if "rho" not in raw:
                raise ConfigError("ar1 noise requires the rho key")
            noise = NoiseModelSpec.ar1(float(raw["rho"]))
        elif kind == "t5":
            noise = NoiseModelSpec.t5()
        else:
            raise ConfigError(f"unknown noise model {kind!r}")
    except ValueError as exc:
        raise ConfigError(str(exc))

    methods = [parse_method(tok) for tok in str(raw["methods"]).split(",") if tok.strip()]
    if not methods:
        raise ConfigError("methods must be nonempty")
    replicates = _parse_int(raw["replicates"], "replicates")
    if replicates < 1:
        raise ConfigError("replicates must be >= 1")
    storage = str(raw.get("storage", "memory")).strip().lower()
    if storage not in ("memory", "kst"):
        raise ConfigError(f"storage must be 'memory' or 'kst', got {storage!r}")
    if storage == "kst" and any(m.kind == "mle" for m in methods):
        raise ConfigError("the mle method needs storage = memory (it iterates over the data)")

    return ExperimentConfig(
        dims=dims,
        d_true=d_true,
        n_grid=n_grid,
        noise=noise,
        methods=methods,
        replicates=replicates,
        seed_base=_parse_int(raw["seed_base"], "seed_base"),
        out=str(raw["out"]),
        d_bar=_parse_int(raw["d_bar"], "d_bar") if "d_bar" in raw else None,
        storage=storage,
        chunk_rows=_parse_int(raw.get("chunk_rows", 256), "chunk_rows"),
        threads=_parse_int(raw["threads"], "threads") if "threads" in raw else None,
        plots=_parse_bool(raw.get("plots", "true"), "plots"),
        dump=_parse_bool(raw.get("dump", "false"), "dump"),
    )


def resolve_threads(flag_value, config_value):
    if flag_value is not None:
        return max(1, flag_value)
    if config_value is not None:
        return max(1, config_value)
    env = os.environ.get(ENV_THREADS)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{ENV_THREADS} must be an integer, got {env!r}")
    return os.cpu_count() or 1


# ---------------------------------------------------------------------------
# Simulation runner


@dataclass
class ReplicateRecord:
    method: str
    n: int
    replicate: int
    rel_error: float
    seed: int
    error: str = ""


@dataclass
class RunReport:
    config: ExperimentConfig
    records: list
    wall_clock: float
    version: str = __version__

    def cells(self):
        """Per (method, n): (mean rel error, standard error, ok count)."""
        out = {}
        for m in self.config.methods:
            for n in self.config.n_grid:
                errs = np.array([
                    r.rel_error for r in self.records
                    if r.method == m.label() and r.n == n and not r.error
                ])
                if errs.size:
                    mean = float(errs.mean())
                    stderr = float(errs.std(ddof=1) / np.sqrt(errs.size)) if errs.size > 1 else 0.0
                else:
                    mean, stderr = float("nan"), float("nan")
                out[(m.label(), n)] = (mean, stderr, errs.size)
        return out


def _vec_rows_from_kst_blocks(blocks):
    """Adapt (start, stack (m, p1, p2)) blocks into (start, rows (m, p1*p2))
    blocks of vectorized responses."""
    for start, stack in blocks:
        m = stack.shape[0]
        yield start, stack.transpose(0, 2, 1).reshape(m, -1)


def _rows_to_kst_stack(rows, p1, p2):
    """Vectorized rows back to (m, p1, p2) matrices (vec is column-major)."""
    return rows.reshape(-1, p2, p1).transpose(0, 2, 1)


def _fit_method(method, nu_tilde_plain, dims, d_bar, svd_seed, data=None,
                nu_tilde_alpha=None):
    """Estimate nu_hat for one method given the shared intermediates."""
    if method.kind == "kpf":
        report = kro_pro_fac_from_nu(nu_tilde_plain, dims, d_bar=d_bar, svd_seed=svd_seed)
        return nu_hat_from_report(report)
    if method.kind == "kpf_alpha":
        report = kro_pro_fac_from_nu(nu_tilde_alpha, dims, d_bar=d_bar, svd_seed=svd_seed)
        return nu_hat_from_report(report)
    if method.kind == "rdu_rank":
        reduced = variant_reduced_rank_ols(nu_tilde_plain, method.param)
        report = kro_pro_fac_from_nu(reduced, dims, d_bar=d_bar, svd_seed=svd_seed)
        return nu_hat_from_report(report)
    if method.kind == "mle":
        state = mle_fit(data)
        return state.nu_hat()
    raise ConfigError(f"unknown method kind {method.kind!r}")


def _run_replicate(config, nu_true, n, r, dump_dir):
    """Generate one replicate's data and fit every configured method.

    Returns a list of ReplicateRecord. Numeric failures are recorded per
    method, not fatal.
    """
    dims = config.dims
    sample_seed = (config.seed_base ^ r) & 0xFFFFFFFFFFFFFFFF
    x = gen_design(n, dims, sample_seed)
    svd_seed = sample_seed
    alphas = sorted({m.param for m in config.methods if m.kind == "kpf_alpha"})
    needs_dataset = any(m.kind == "mle" for m in config.methods)

    nu_tilde_alpha = {}
    dataset = None
    if config.storage == "memory":
        y = x @ nu_true.T
        if config.noise is not None:
            for start, block in noise_chunks(config.noise, n, dims, sample_seed,
                                             chunk_rows=config.chunk_rows):
                y[start:start + block.shape[0]] += block
        dataset = Dataset(dims=Dims(dims.p1, dims.p2, dims.q1, dims.q2, n), X=x, Y=y)
        if dump_dir is not None:
            write_kmx(os.path.join(dump_dir, f"n{n}_rep{r:03d}_X.kmx"), x)
            with KstWriter(os.path.join(dump_dir, f"n{n}_rep{r:03d}_Y.kst"),
                           n, dims.p1, dims.p2) as w:
                w.append(_rows_to_kst_stack(y, dims.p1, dims.p2))
        nu_tilde = fit_ols_nu(dataset)
        for a in alphas:
            nu_tilde_alpha[a] = fit_ols_nu(variant_low_rank_response(dataset, a))
    else:
        # Stream the response stack through a KST file on disk; only one
        # chunk of rows is ever held in memory.
        if dump_dir is not None:
            y_path = os.path.join(dump_dir, f"n{n}_rep{r:03d}_Y.kst")
            write_kmx(os.path.join(dump_dir, f"n{n}_rep{r:03d}_X.kmx"), x)
            cleanup = False
        else:
            fd, y_path = tempfile.mkstemp(suffix=".kst", prefix="kroprofac_")
            os.close(fd)
            cleanup = True
        try:
            with KstWriter(y_path, n, dims.p1, dims.p2) as w:
                if config.noise is not None:
                    gen = noise_chunks(config.noise, n, dims, sample_seed,
                                       chunk_rows=config.chunk_rows)
                    for start, block in gen:
                        rows = x[start:start + block.shape[0]] @ nu_true.T
                        rows += block
                        w.append(_rows_to_kst_stack(rows, dims.p1, dims.p2))
                else:
                    for start in range(0, n, config.chunk_rows):
                        stop = min(start + config.chunk_rows, n)
                        rows = x[start:stop] @ nu_true.T
                        w.append(_rows_to_kst_stack(rows, dims.p1, dims.p2))
            nu_tilde = fit_ols_nu_stream(
                x, _vec_rows_from_kst_blocks(iter_kst(y_path, chunk=config.chunk_rows))
            )
            for a in alphas:
                blocks = (
                    (start, truncate_response_rows(rows, dims.p1, dims.p2, a))
                    for start, rows in
                    _vec_rows_from_kst_blocks(iter_kst(y_path, chunk=config.chunk_rows))
                )
                nu_tilde_alpha[a] = fit_ols_nu_stream(x, blocks)
        finally:
            if cleanup and os.path.exists(y_path):
                os.unlink(y_path)

    records = []
    for method in config.methods:
        try:
            nu_hat = _fit_method(
                method, nu_tilde, dims, config.d_bar, svd_seed,
                data=dataset if needs_dataset else None,
                nu_tilde_alpha=nu_tilde_alpha.get(method.param),
            )
            rec = ReplicateRecord(method.label(), n, r,
                                  relative_error(nu_hat, nu_true), sample_seed)
        except (NumericError, SingularDesignError, np.linalg.LinAlgError) as exc:
            rec = ReplicateRecord(method.label(), n, r, float("nan"),
                                  sample_seed, error=str(exc))
        records.append(rec)
    return records


def run_simulation(config, threads=1):
    """Execute the full replicate grid and return a RunReport.

    Coefficients are drawn once from seed_base and held fixed across
    replicates; replicate r draws its design and noise from
    seed_base XOR r, so results do not depend on scheduling.
    """
    t0 = time.time()
    coeffs = gen_coefficients(config.dims, config.d_true, config.seed_base)
    nu_true = coeffs.nu()
    dump_dir = None
    if config.dump:
        dump_dir = os.path.join(config.out, "dump")
        os.makedirs(dump_dir, exist_ok=True)

    tasks = [(n, r) for n in config.n_grid for r in range(config.replicates)]
    results = {}
    if threads <= 1:
        for n, r in tasks:
            results[(n, r)] = _run_replicate(config, nu_true, n, r, dump_dir)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = {
                (n, r): pool.submit(_run_replicate, config, nu_true, n, r, dump_dir)
                for n, r in tasks
            }
            for key, fut in futures.items():
                results[key] = fut.result()

    records = []
    for n in config.n_grid:
        for r in range(config.replicates):
            records.extend(results[(n, r)])
    # Deterministic order: method (config order), then n, then replicate.
    order = {m.label(): i for i, m in enumerate(config.methods)}
    records.sort(key=lambda rec: (order[rec.method], rec.n, rec.replicate))
    return RunReport(config=config, records=records, wall_clock=time.time() - t0)


def write_run_report(report, out_dir):
    """Write errors.csv (raw fractions), report.txt (percentages), and the
    error-curve figure."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "errors.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("method,n,replicate,rel_error,seed\n")
        for rec in report.records:
            fh.write(f"{rec.method},{rec.n},{rec.replicate},"
                     f"{format_float(rec.rel_error)},{rec.seed}\n")

    cells = report.cells()
    lines = [f"kroprofac {report.version} simulation report", ""]
    lines += report.config.echo_lines()
    lines += ["", f"wall clock: {report.wall_clock:.2f} s", "",
              "mean relative error (%) [standard error]:"]
    for method in report.config.methods:
        for n in report.config.n_grid:
            mean, stderr, count = cells[(method.label(), n)]
            lines.append(
                f"  {method.label():<16} n={n:<7} {100 * mean:.6g} [{100 * stderr:.3g}] "
                f"({count}/{report.config.replicates} ok)"
            )
    failures = [r for r in report.records if r.error]
    if failures:
        lines += ["", "failures:"]
        lines += [f"  {r.method} n={r.n} rep={r.replicate}: {r.error}" for r in failures]
    with open(os.path.join(out_dir, "report.txt"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")

    if report.config.plots:
        from .plots import save_error_curves
        save_error_curves(
            [(m, n, mean, stderr) for (m, n), (mean, stderr, _) in cells.items()
             if np.isfinite(mean)],
            os.path.join(out_dir, "errors.png"),
        )
    return csv_path


# ---------------------------------------------------------------------------
# fit / predict / spectrum / twogroup


def load_design_rows(path):
    """Load a design as stacked vec rows from CSV/KMX, or from a KST stack
    of predictor matrices."""
    if sniff_format(path) == "kst":
        stack = np.concatenate([b for _, b in iter_kst(path)], axis=0)
        return stack.transpose(0, 2, 1).reshape(stack.shape[0], -1)
    return read_matrix(path)


def iter_response_rows(path, dims, chunk):
    """Yield (start, rows) blocks of vectorized responses from a KST stack
    or a whole CSV/KMX matrix."""
    if sniff_format(path) == "kst":
        count, rows, cols = kst_header(path)
        if (rows, cols) != (dims.p1, dims.p2):
            raise DimensionError(
                f"{path}: stack holds {rows}x{cols} matrices, expected {dims.p1}x{dims.p2}"
            )
        yield from _vec_rows_from_kst_blocks(iter_kst(path, chunk=chunk))
    else:
        y = read_matrix(path)
        yield 0, y


def cmd_fit(args):
    dims = Dims(args.p1, args.p2, args.q1, args.q2)
    x = load_design_rows(args.x)
    n = x.shape[0]
    if x.shape[1] != dims.q1 * dims.q2:
        raise DimensionError(
            f"{args.x}: design has {x.shape[1]} columns, expected {dims.q1 * dims.q2}"
        )

    if args.method == "mle":
        blocks = list(iter_response_rows(args.y, dims, args.chunk))
        y = np.concatenate([b for _, b in blocks], axis=0)
        data = Dataset(dims=Dims(dims.p1, dims.p2, dims.q1, dims.q2, n), X=x, Y=y)
        state = mle_fit(data)
        os.makedirs(args.out, exist_ok=True)
        ext = "kmx" if args.format == "kmx" else "csv"
        write_matrix(os.path.join(args.out, f"beta1_01.{ext}"), state.beta1, args.format)
        write_matrix(os.path.join(args.out, f"beta2_01.{ext}"), state.beta2, args.format)
        write_matrix(os.path.join(args.out, f"sigma1.{ext}"), state.Sigma1, args.format)
        write_matrix(os.path.join(args.out, f"sigma2.{ext}"), state.Sigma2, args.format)
        summary = {
            "method": "mle",
            "dims": [dims.p1, dims.p2, dims.q1, dims.q2],
            "n": n,
            "loglik": state.loglik,
            "iterations": state.iterations,
            "converged": state.converged,
            "pinv_fallback": state.pinv_fallback,
            "loglik_trace": list(state.loglik_trace),
        }
        with open(os.path.join(args.out, "fit.json"), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, indent=2)
        trace = state.loglik_trace
        monotone = all(b >= a - 1e-8 * (1 + abs(a)) for a, b in zip(trace, trace[1:]))
        with open(os.path.join(args.out, "summary.txt"), "w", encoding="utf-8") as fh:
            fh.write(f"dual-Kronecker MLE: loglik {state.loglik:.10g} after "
                     f"{state.iterations} iterations "
                     f"(converged={state.converged}, monotone={monotone})\n")
        return EXIT_OK

    chunkable = iter_response_rows(args.y, dims, args.chunk)
    if args.alpha is not None:
        chunkable = (
            (start, truncate_response_rows(rows, dims.p1, dims.p2, args.alpha))
            for start, rows in chunkable
        )
    nu_tilde = fit_ols_nu_stream(x, chunkable)
    if args.gamma is not None:
        nu_tilde = variant_reduced_rank_ols(nu_tilde, args.gamma)
    report = kro_pro_fac_from_nu(nu_tilde, dims, d_bar=args.dbar,
                                 d_fixed=args.d, svd_seed=args.svd_seed)

    os.makedirs(args.out, exist_ok=True)
    ext = "kmx" if args.format == "kmx" else "csv"
    factor_files = []
    for k, (b1, b2) in enumerate(report.coefficients.factors, start=1):
        f1 = f"beta1_{k:02d}.{ext}"
        f2 = f"beta2_{k:02d}.{ext}"
        write_matrix(os.path.join(args.out, f1), b1, args.format)
        write_matrix(os.path.join(args.out, f2), b2, args.format)
        factor_files.append([f1, f2])
    with open(os.path.join(args.out, "spectrum.csv"), "w", encoding="utf-8") as fh:
        fh.write("k,sigma\n")
        for k, s in enumerate(report.singular_values_all, start=1):
            fh.write(f"{k},{format_float(s)}\n")
    summary = {
        "method": "kpf",
        "dims": [dims.p1, dims.p2, dims.q1, dims.q2],
        "n": n,
        "d_bar": report.d_bar,
        "d_selected": report.d_selected,
        "alpha": args.alpha,
        "gamma": args.gamma,
        "selection_ratios": [format_float(v) for v in report.selection_ratios],
        "sigma": [format_float(v) for v in report.coefficients.sigma],
        "factor_files": factor_files,
        "format": args.format,
    }
    with open(os.path.join(args.out, "fit.json"), "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2)
    with open(os.path.join(args.out, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"selected d = {report.d_selected} (d_bar = {report.d_bar})\n")
        fh.write("sigma: " + ", ".join(format_float(v) for v in report.coefficients.sigma) + "\n")
        fh.write("ratios: " + ", ".join(format_float(v) for v in report.selection_ratios) + "\n")
    return EXIT_OK


def load_fit(fit_dir):
    """Reload the coefficients written by cmd_fit."""
    from .estimator import KroneckerCoefficients

    with open(os.path.join(fit_dir, "fit.json"), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    if meta.get("method") != "kpf":
        raise ValueError(f"{fit_dir}: predict needs a Kronecker-factor fit")
    p1, p2, q1, q2 = meta["dims"]
    dims = Dims(p1, p2, q1, q2)
    factors = []
    for f1, f2 in meta["factor_files"]:
        factors.append((
            read_matrix(os.path.join(fit_dir, f1)),
            read_matrix(os.path.join(fit_dir, f2)),
        ))
    sigma = np.array([float(s) for s in meta["sigma"]])
    return KroneckerCoefficients(dims=dims, d=meta["d_selected"],
                                 factors=factors, sigma=sigma)


def cmd_predict(args):
    coeffs = load_fit(args.fit_dir)
    dims = coeffs.dims
    if sniff_format(args.x) == "kst":
        count, rows, cols = kst_header(args.x)
        if (rows, cols) != (dims.q1, dims.q2):
            raise DimensionError(
                f"{args.x}: stack holds {rows}x{cols} matrices, expected {dims.q1}x{dims.q2}"
            )
        with KstWriter(args.out, count, dims.p1, dims.p2) as w:
            for _, stack in iter_kst(args.x):
                w.append(np.stack([predict(coeffs, m) for m in stack]))
    else:
        xnew = read_matrix(args.x)
        write_matrix(args.out, predict(coeffs, xnew),
                     "kmx" if str(args.out).endswith(".kmx") else "csv")
    return EXIT_OK


def cmd_spectrum(args):
    dims = Dims(args.p1, args.p2, args.q1, args.q2)
    m = read_matrix(args.m)
    if m.shape != dims.nu_shape:
        raise DimensionError(f"{args.m}: shape {m.shape}, expected {dims.nu_shape}")
    rm = rearrange(m, dims)
    kmax = args.kmax or min(min(m.shape), min(rm.shape))
    if kmax > min(min(m.shape), min(rm.shape)):
        raise ValueError(
            f"k_max={kmax} exceeds the available spectrum "
            f"{min(min(m.shape), min(rm.shape))}"
        )
    f_m = [cumulative_singular_fraction(m, k) for k in range(1, kmax + 1)]
    f_rm = [cumulative_singular_fraction(rm, k) for k in range(1, kmax + 1)]
    out = args.out or "spectrum"
    parent = os.path.dirname(out)
    if parent:
        os.makedirs(parent, exist_ok=True)
    csv_path = out + ".csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("k,f_k_coefficient,f_k_rearranged\n")
        for k in range(kmax):
            fh.write(f"{k + 1},{format_float(f_m[k])},{format_float(f_rm[k])}\n")
    if not args.no_plots:
        from .plots import save_spectrum_plot
        save_spectrum_plot(np.arange(1, kmax + 1), f_m, f_rm, out + ".png")
    return EXIT_OK


def load_group(path, label, p1, p2):
    """Load one group from a directory of CSV/KMX matrices (sorted by file
    name) or from a single KST stack."""
    samples = []
    if os.path.isdir(path):
        names = sorted(
            f for f in os.listdir(path)
            if f.endswith((".csv", ".kmx")) and not f.startswith(".")
        )
        if not names:
            raise ValueError(f"{path}: no .csv or .kmx sample files found")
        for name in names:
            full = os.path.join(path, name)
            m = read_matrix(full)
            if m.shape != (p1, p2):
                raise DimensionError(
                    f"{full}: sample has shape {m.shape}, expected ({p1}, {p2})"
                )
            samples.append(m)
    else:
        if sniff_format(path) != "kst":
            raise ValueError(f"{path}: expected a directory or a KST stack")
        count, rows, cols = kst_header(path)
        if (rows, cols) != (p1, p2):
            raise DimensionError(
                f"{path}: stack holds {rows}x{cols} matrices, expected ({p1}, {p2})"
            )
        for _, stack in iter_kst(path):
            samples.extend(stack)
    return GroupData(label=label, samples=samples)


def cmd_twogroup(args):
    group1 = load_group(args.group1, "group1", args.p1, args.p2)
    group2 = load_group(args.group2, "group2", args.p1, args.p2)
    if min(group1.n_subjects, group2.n_subjects) < 2:
        raise ValueError("each group needs at least 2 sample matrices")
    result = two_group_analysis(
        group1, group2, d_bar=args.dbar, d1=args.d1, d2=args.d2,
        ols_baseline=args.ols_baseline,
    )
    os.makedirs(args.out, exist_ok=True)
    alpha = args.alpha_level
    with open(os.path.join(args.out, "channels.csv"), "w", encoding="utf-8") as fh:
        fh.write("channel,theta_hat,t,p,p_by,reject\n")
        for c in range(result.theta_hat.size):
            fh.write(
                f"{c + 1},{format_float(result.theta_hat[c])},"
                f"{format_float(result.t_stats[c])},{format_float(result.p_values[c])},"
                f"{format_float(result.p_adjusted[c])},"
                f"{int(result.p_adjusted[c] <= alpha)}\n"
            )
    rejected = result.rejections(alpha)
    neglog = -np.log10(np.maximum(result.p_adjusted, 1e-300))
    with open(os.path.join(args.out, "summary.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"selected d per group: {result.d_selected[0]}, {result.d_selected[1]}\n")
        fh.write(f"estimator: {'OLS group means' if args.ols_baseline else 'Kronecker factorization'}\n")
        fh.write(f"rejections at alpha={alpha:g}: {rejected.size} "
                 f"(channels {', '.join(str(c + 1) for c in rejected) or 'none'})\n")
        fh.write("-log10 adjusted p-values:\n")
        for c in range(result.theta_hat.size):
            fh.write(f"  channel {c + 1}: {neglog[c]:.6g}\n")
    if not args.no_plots:
        from .plots import save_pvalue_plot
        save_pvalue_plot(result.p_adjusted, alpha,
                         os.path.join(args.out, "pvalues.png"))
    return EXIT_OK


def cmd_simulate(args):
    raw = {}
    if args.config:
        raw.update(read_config_file(args.config))
    for key in CONFIG_KEYS:
        if key in ("plots", "dump"):
            continue
        val = getattr(args, key, None)
        if val is not None:
            raw[key] = val
    if args.plots is not None:
        raw["plots"] = str(args.plots)
    if args.dump:
        raw["dump"] = "true"
    config = build_config(raw)
    threads = resolve_threads(args.threads, config.threads)
    report = run_simulation(config, threads=threads)
    csv_path = write_run_report(report, config.out)
    print(f"wrote {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing and dispatch


def build_parser():
    parser = argparse.ArgumentParser(
        prog="kroprofac",
        description="Kronecker-product-factorized regression for matrix-valued responses",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte Carlo benchmark")
    sim.add_argument("--config", help="key = value config file")
    for key in ("p1", "p2", "q1", "q2", "d", "replicates", "seed_base",
                "bandwidth", "structure_seed", "d_bar", "chunk_rows"):
        sim.add_argument(f"--{key.replace('_', '-')}", dest=key, default=None)
    sim.add_argument("--n-grid", dest="n_grid", default=None,
                     help="comma-separated sample sizes")
    sim.add_argument("--noise", default=None,
                     help="none | identity | banded | ar1 | t5")
    sim.add_argument("--rho", default=None)
    sim.add_argument("--methods", default=None,
                     help="comma-separated: kpf, kpf_alpha(A), rdu_rank(G), mle")
    sim.add_argument("--out", default=None)
    sim.add_argument("--storage", default=None, help="memory | kst")
    sim.add_argument("--threads", type=int, default=None)
    sim.add_argument("--plots", default=None, help="true | false")
    sim.add_argument("--dump", action="store_true",
                     help="write each replicate's dataset under <out>/dump/")
    sim.set_defaults(func=cmd_simulate)

    fit = sub.add_parser("fit", help="fit Kronecker factors from files")
    fit.add_argument("--x", required=True, help="design file (CSV/KMX rows or KST stack)")
    fit.add_argument("--y", required=True, help="response file (CSV/KMX rows or KST stack)")
    for key in ("p1", "p2", "q1", "q2"):
        fit.add_argument(f"--{key}", type=int, required=True)
    fit.add_argument("--dbar", type=int, default=None)
    fit.add_argument("--d", type=int, default=None, help="fix d instead of selecting it")
    fit.add_argument("--alpha", type=int, default=None,
                     help="rank-truncate each response before fitting")
    fit.add_argument("--gamma", type=int, default=None,
                     help="rank-truncate the OLS estimate before rearranging")
    fit.add_argument("--method", choices=("kpf", "mle"), default="kpf")
    fit.add_argument("--svd-seed", dest="svd_seed", type=int, default=0)
    fit.add_argument("--chunk", type=int, default=256)
    fit.add_argument("--format", choices=("csv", "kmx"), default="csv")
    fit.add_argument("--out", required=True)
    fit.set_defaults(func=cmd_fit)

    pred = sub.add_parser("predict", help="apply a saved fit to new predictors")
    pred.add_argument("--fit-dir", dest="fit_dir", required=True)
    pred.add_argument("--x", required=True, help="predictor matrix (CSV/KMX) or KST stack")
    pred.add_argument("--out", required=True)
    pred.set_defaults(func=cmd_predict)

    spec = sub.add_parser("spectrum", help="cumulative singular-value fractions")
    spec.add_argument("--m", required=True, help="coefficient matrix file")
    for key in ("p1", "p2", "q1", "q2"):
        spec.add_argument(f"--{key}", type=int, required=True)
    spec.add_argument("--kmax", type=int, default=None)
    spec.add_argument("--out", default=None, help="output prefix (CSV and PNG)")
    spec.add_argument("--no-plots", dest="no_plots", action="store_true")
    spec.set_defaults(func=cmd_spectrum)

    two = sub.add_parser("twogroup", help="two-group channel-effect analysis")
    two.add_argument("group1", help="directory of sample matrices or a KST stack")
    two.add_argument("group2", help="directory of sample matrices or a KST stack")
    two.add_argument("--p1", type=int, required=True)
    two.add_argument("--p2", type=int, required=True)
    two.add_argument("--d1", type=int, default=None)
    two.add_argument("--d2", type=int, default=None)
    two.add_argument("--dbar", type=int, default=None)
    two.add_argument("--alpha-level", dest="alpha_level", type=float, default=0.05)
    two.add_argument("--ols-baseline", dest="ols_baseline", action="store_true")
    two.add_argument("--out", required=True)
    two.add_argument("--no-plots", dest="no_plots", action="store_true")
    two.set_defaults(func=cmd_twogroup)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericError, SingularDesignError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DimensionError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
