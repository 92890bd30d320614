"""Command-line front end: ingest problems, run engines, post-process.

Verbs:

* ``simulate``       run one engine on a configured spin system, write a FID CSV
* ``spectrum``       apodise a FID CSV and Fourier transform it
* ``benchmark``      cost/accuracy comparison across engines and system sizes
* ``dec-precompute`` persist a direct-expectation series sidecar
* ``dec-eval``       evaluate a stored sidecar on a time grid

Config files are sectioned key-value text (INI). Frequencies are given in
Hz and converted to angular frequencies on ingestion; times are in seconds.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 resource limit or timeout.
"""

from __future__ import annotations

import argparse
import configparser
import multiprocessing
import platform
import sys
import time
from dataclasses import dataclass

import numpy as np
import scipy

from . import __version__
from .chebyshev import cheb_step_propagate
from .dec import dec_evaluate_grid, dec_precompute, load_series, save_series
from .errors import ConfigError, NumericalError, ResourceError
from .krylov import krylov_propagate
from .oracle import dense_eig, oracle_expect
from .sparse import matvec_counter
from .spectral import extreme_eigs
from .spinsys import (
    SpinSystemSpec,
    build_hamiltonian,
    build_liouvillian,
    initial_state,
    observable_by_name,
)
from .trace import ExpectationTrace
from .zte import zte_detect, zte_propagate, zte_window

ENGINES = ("dec", "cheb", "krylov", "zte", "oracle")

_FMT = "{:.17g}"  # round-trip safe for IEEE doubles


@dataclass
class RunConfig:
    """Validated simulation request."""

    system: SpinSystemSpec
    engine: str = "dec"
    dt: float = 0.1
    steps: int = 1000
    eps: float = 1e-7
    tau: float | None = None
    xi: float = 1e-6
    xi_apo: float = 0.0
    m_max: int = 128
    observables: tuple[str, ...] = ("ip",)
    fid_path: str | None = None
    spectrum_path: str | None = None

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ConfigError(f"[run] engine: unknown engine {self.engine!r}, "
                              f"expected one of {ENGINES}")
        if self.dt <= 0:
            raise ConfigError("[run] dt must be positive")
        if self.steps < 1:
            raise ConfigError("[run] steps must be at least 1")
        if not 0.0 < self.eps < 1.0:
            raise ConfigError("[run] eps must lie in (0, 1)")
        if self.tau is not None and self.tau < self.steps * self.dt:
            raise ConfigError(
                f"[run] tau={self.tau} is shorter than the grid end "
                f"steps*dt={self.steps * self.dt}"
            )
        if self.xi < 0:
            raise ConfigError("[zte] xi must be non-negative")
        if self.m_max < 1:
            raise ConfigError("[run] m_max must be positive")

    @property
    def horizon(self) -> float:
        return self.tau if self.tau is not None else self.steps * self.dt


def _get(parser: configparser.ConfigParser, section: str, key: str, cast, default=None):
    if not parser.has_option(section, key):
        if default is not None:
            return default
        raise ConfigError(f"missing required key [{section}] {key}")
    raw = parser.get(section, key)
    try:
        return cast(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for [{section}] {key}: {raw!r}") from exc


def _float_list(raw: str) -> list[float]:
    return [float(tok) for tok in raw.replace(",", " ").split()]


def parse_config(text: str) -> RunConfig:
    """Parse the sectioned key-value config format into a RunConfig."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if not parser.has_section("system"):
        raise ConfigError("missing required section [system]")

    n = _get(parser, "system", "n", int)
    larmor = _get(parser, "system", "larmor_hz", _float_list)
    if len(larmor) != n:
        raise ConfigError(
            f"[system] larmor_hz lists {len(larmor)} frequencies for n={n} spins"
        )
    omega0 = 2.0 * np.pi * np.asarray(larmor)

    j_hz = np.zeros((n, n))
    if parser.has_option("system", "j_hz"):
        rows = [r for r in parser.get("system", "j_hz").splitlines() if r.strip()]
        if len(rows) != n:
            raise ConfigError(f"[system] j_hz has {len(rows)} rows, expected {n}")
        for i, row in enumerate(rows):
            vals = _float_list(row)
            if len(vals) != n:
                raise ConfigError(
                    f"[system] j_hz row {i} has {len(vals)} entries, expected {n}"
                )
            j_hz[i] = vals
    j_coupling = 2.0 * np.pi * j_hz

    try:
        spec = SpinSystemSpec(n=n, omega0=omega0, j_coupling=j_coupling)
    except ConfigError as exc:
        raise ConfigError(f"[system] j_hz/{exc}") from exc

    def opt(section, key, cast, default):
        if not parser.has_section(section):
            return default
        return _get(parser, section, key, cast, default=default)

    tau_raw = opt("run", "tau", float, 0.0)
    obs_raw = opt("run", "observables", str, "ip")
    cfg = RunConfig(
        system=spec,
        engine=opt("run", "engine", str, "dec").strip().lower(),
        dt=opt("run", "dt", float, 0.1),
        steps=opt("run", "steps", int, 1000),
        eps=opt("run", "eps", float, 1e-7),
        tau=tau_raw if tau_raw > 0 else None,
        xi=opt("zte", "xi", float, 1e-6),
        xi_apo=opt("run", "xi_apo", float, 0.0),
        m_max=opt("run", "m_max", int, 128),
        observables=tuple(obs_raw.replace(",", " ").split()),
        fid_path=opt("output", "fid", str, "") or None,
        spectrum_path=opt("output", "spectrum", str, "") or None,
    )
    for name in cfg.observables:
        observable_by_name(name, n)  # validates names early
    return cfg


def _build_observables(cfg: RunConfig):
    return {name: observable_by_name(name, cfg.system.n) for name in cfg.observables}


def run_simulation(cfg: RunConfig) -> ExpectationTrace:
    """Dispatch to the selected engine and return the sampled expectations."""
    t_start = time.perf_counter()
    mv_start = matvec_counter.count
    h = build_hamiltonian(cfg.system)
    l_op = build_liouvillian(h)
    rho0 = initial_state(cfg.system.n)
    observables = _build_observables(cfg)
    times = cfg.dt * np.arange(cfg.steps + 1)

    if cfg.engine == "oracle":
        trace = oracle_expect(dense_eig(l_op), rho0, observables, times)
    elif cfg.engine == "dec":
        series = dec_precompute(l_op, rho0, observables, tau=cfg.horizon, eps=cfg.eps)
        trace = dec_evaluate_grid(series, times)
        trace.metadata["n_orders"] = series.n_orders
        trace.metadata["matvecs"] = series.n_orders - 1
    elif cfg.engine == "cheb":
        scaling = extreme_eigs(l_op)
        trace = cheb_step_propagate(l_op, scaling, rho0, cfg.dt, cfg.steps,
                                    observables, eps=cfg.eps)
    elif cfg.engine == "krylov":
        trace = krylov_propagate(l_op, rho0, cfg.dt, cfg.steps, observables,
                                 eps=cfg.eps, m_max=cfg.m_max)
    elif cfg.engine == "zte":
        delta_t = zte_window(cfg.system)
        if cfg.dt > delta_t:
            raise ConfigError(
                f"[run] dt={cfg.dt} exceeds the observation window "
                f"{delta_t:.6g} set by the slowest Larmor period"
            )
        reduction = zte_detect(l_op, rho0, cfg.dt, delta_t, xi=cfg.xi,
                               eps=cfg.eps, m_max=cfg.m_max)
        trace = zte_propagate(reduction, rho0, cfg.dt, cfg.steps, observables,
                              eps=cfg.eps, m_max=cfg.m_max)
    else:  # pragma: no cover - guarded by RunConfig validation
        raise ConfigError(f"unknown engine {cfg.engine!r}")

    trace.metadata.setdefault("engine", cfg.engine)
    trace.metadata["total_matvecs"] = matvec_counter.count - mv_start
    trace.metadata["total_wall_time_s"] = time.perf_counter() - t_start
    trace.metadata["liouville_dim"] = cfg.system.liouville_dim
    if cfg.fid_path:
        write_trace_csv(trace, cfg.fid_path)
    if cfg.spectrum_path:
        freqs, amps = spectrum(trace, xi_apo=cfg.xi_apo)
        write_spectrum_csv(freqs, amps, trace.labels, cfg.spectrum_path)
    return trace


# -- trace / spectrum files ---------------------------------------------


def write_trace_csv(trace: ExpectationTrace, path) -> None:
    """Write ``t,re_<label>,im_<label>,...`` rows at 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        header = ["t"]
        for label in trace.labels:
            header += [f"re_{label}", f"im_{label}"]
        fh.write(",".join(header) + "\n")
        for k, t in enumerate(trace.times):
            row = [_FMT.format(t)]
            for q in range(len(trace.labels)):
                v = trace.values[q, k]
                row += [_FMT.format(v.real), _FMT.format(v.imag)]
            fh.write(",".join(row) + "\n")


def read_trace_csv(path) -> ExpectationTrace:
    """Read a file written by :func:`write_trace_csv`."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if not header or header[0] != "t" or (len(header) - 1) % 2 != 0:
            raise ConfigError(f"{path}: not a trace CSV (header {header!r})")
        labels = tuple(col[3:] for col in header[1::2])
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    times = data[:, 0]
    values = data[:, 1::2] + 1j * data[:, 2::2]
    return ExpectationTrace(times=times, labels=labels, values=values.T)


def spectrum(trace: ExpectationTrace, xi_apo: float = 0.0):
    """Apodised discrete spectrum of the sampled signal.

    Multiplies by ``exp(-xi_apo * t)`` (smooths the delta-like resonances
    into finite-width lines), then takes the unnormalised transform
    ``S_k = sum_n f(t_n) exp(+2*pi*i*k*n/N)``; the positive-rotation kernel
    puts a signal at angular frequency ``+omega`` into the bin nearest
    ``omega / 2*pi``. Frequency axis is ``f_k = k / (N * dt)`` in cycles per
    time unit (Hz for seconds). Requires a uniform grid.
    """
    dts = np.diff(trace.times)
    if dts.size == 0:
        raise ConfigError("spectrum needs at least two samples")
    dt = dts[0]
    if not np.allclose(dts, dt, rtol=1e-9, atol=0.0):
        raise ConfigError("spectrum requires a uniform time grid")
    n = trace.n_times
    apod = np.exp(-xi_apo * trace.times)
    amps = np.empty((len(trace.labels), n))
    for q in range(len(trace.labels)):
        amps[q] = np.abs(np.fft.ifft(trace.values[q] * apod) * n)
    freqs = np.arange(n) / (n * dt)
    return freqs, amps


def write_spectrum_csv(freqs, amps, labels, path) -> None:
    amps = np.atleast_2d(amps)
    with open(path, "w", encoding="utf-8") as fh:
        if len(labels) == 1:
            fh.write("freq_hz,amplitude\n")
        else:
            fh.write("freq_hz," + ",".join(f"amplitude_{l}" for l in labels) + "\n")
        for k, f in enumerate(freqs):
            row = [_FMT.format(f)] + [_FMT.format(amps[q, k]) for q in range(amps.shape[0])]
            fh.write(",".join(row) + "\n")


# -- benchmark harness ----------------------------------------------------


def benchmark_spec(n_spins: int, seed: int = 0) -> SpinSystemSpec:
    """Deterministic weakly coupled test system of the requested size.

    Angular Larmor frequencies of order one and short-range couplings, so
    every engine runs in its intended regime at dt ~ 0.1.
    """
    rng = np.random.default_rng(1000 * n_spins + seed)
    omega0 = rng.uniform(0.5, 2.5, size=n_spins)
    j = np.zeros((n_spins, n_spins))
    for a in range(n_spins):
        for b in range(a + 1, min(a + 3, n_spins)):
            j[a, b] = j[b, a] = rng.uniform(0.02, 0.2)
    return SpinSystemSpec(n=n_spins, omega0=omega0, j_coupling=j)


@dataclass
class BenchmarkRow:
    n_spins: int
    dim: int
    engine: str
    steps: int
    status: str = "ok"
    wall_s: float = float("nan")
    matvecs: int = -1
    max_err: float | None = None
    reduced_dim: int | None = None
    detail: str = ""


def _bench_child(conn, spec, engine, dt, steps, eps, xi, m_max, tau):
    try:
        cfg = RunConfig(system=spec, engine=engine, dt=dt, steps=steps,
                        eps=eps, xi=xi, m_max=m_max, tau=tau)
        trace = run_simulation(cfg)
        conn.send((
            "ok",
            trace.times,
            trace.values,
            {k: v for k, v in trace.metadata.items()},
        ))
    except Exception as exc:  # report, do not crash the harness
        conn.send(("error", f"{type(exc).__name__}: {exc}", None, None))
    finally:
        conn.close()


def _run_benchmark_job(spec, engine, dt, steps, eps, xi, m_max, tau, timeout):
    ctx = multiprocessing.get_context("fork")
    parent, child = ctx.Pipe(duplex=False)
    proc = ctx.Process(target=_bench_child,
                       args=(child, spec, engine, dt, steps, eps, xi, m_max, tau))
    proc.start()
    child.close()
    payload = None
    if parent.poll(timeout):
        payload = parent.recv()
    proc.join(timeout=0.5)
    if proc.is_alive():
        proc.terminate()
        proc.join()
    parent.close()
    return payload


def benchmark(
    spin_counts,
    engines,
    dt: float = 0.1,
    steps: int = 1000,
    eps: float = 1e-7,
    xi: float = 1e-6,
    m_max: int = 128,
    tau: float | None = None,
    timeout: float = 300.0,
    oracle_cap: int = 1024,
    seed: int = 0,
    stream=None,
):
    """Cost comparison across engines and sizes.

    For each (size, engine) pair: wall time, matvec count, max error against
    the dense reference where the dimension permits, and the reduced
    dimension for the pruning engine. Runs happen in a child process so a
    stuck engine is recorded as timed out rather than hanging the table.
    Timings are single threaded; numerical columns are deterministic.
    """
    stream = stream or sys.stdout
    rows = []
    for n_spins in spin_counts:
        spec = benchmark_spec(n_spins, seed=seed)
        dim = spec.liouville_dim
        reference = None
        if dim <= oracle_cap:
            l_op = build_liouvillian(build_hamiltonian(spec))
            rho0 = initial_state(spec.n)
            obs = {"ip": observable_by_name("ip", spec.n)}
            reference = oracle_expect(dense_eig(l_op, max_dim=oracle_cap), rho0,
                                      obs, dt * np.arange(steps + 1))
        for engine in engines:
            row = BenchmarkRow(n_spins=n_spins, dim=dim, engine=engine, steps=steps)
            payload = _run_benchmark_job(spec, engine, dt, steps, eps, xi,
                                         m_max, tau, timeout)
            if payload is None:
                row.status = "timeout"
            elif payload[0] == "error":
                row.status = "failed"
                row.detail = payload[1]
            else:
                _, times, values, meta = payload
                row.wall_s = meta.get("total_wall_time_s", float("nan"))
                row.matvecs = meta.get("matvecs", -1)
                row.reduced_dim = meta.get("reduced_dim")
                bits = []
                if "n_orders" in meta:
                    bits.append(f"n_orders={meta['n_orders']}")
                if "m_used_max" in meta:
                    bits.append(f"m_used={meta['m_used_max']}")
                if "window_steps" in meta:
                    bits.append(f"window_steps={meta['window_steps']}")
                row.detail = " ".join(bits)
                if reference is not None:
                    row.max_err = float(
                        np.max(np.abs(values[0] - reference.values[0]))
                    )
            rows.append(row)
    _print_benchmark(rows, dt, steps, eps, stream)
    return rows


def _print_benchmark(rows, dt, steps, eps, stream) -> None:
    print(f"# qexpect {__version__} benchmark", file=stream)
    print(f"# python {platform.python_version()} numpy {np.__version__} "
          f"scipy {scipy.__version__} on {platform.platform()}", file=stream)
    print(f"# dt={dt} steps={steps} eps={eps}; times are wall-clock seconds "
          "on this machine and are not comparable across environments",
          file=stream)
    head = f"{'spins':>5} {'dim':>7} {'engine':>7} {'status':>8} " \
           f"{'wall_s':>10} {'matvecs':>9} {'max_err':>10} {'reduced':>8}  detail"
    print(head, file=stream)
    for r in rows:
        err = f"{r.max_err:.2e}" if r.max_err is not None else "-"
        red = str(r.reduced_dim) if r.reduced_dim is not None else "-"
        wall = f"{r.wall_s:.3f}" if np.isfinite(r.wall_s) else "-"
        print(f"{r.n_spins:>5} {r.dim:>7} {r.engine:>7} {r.status:>8} "
              f"{wall:>10} {r.matvecs:>9} {err:>10} {red:>8}  {r.detail}",
              file=stream)


def write_benchmark_csv(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("n_spins,dim,engine,steps,status,wall_s,matvecs,max_err,reduced_dim,detail\n")
        for r in rows:
            err = "" if r.max_err is None else _FMT.format(r.max_err)
            red = "" if r.reduced_dim is None else str(r.reduced_dim)
            fh.write(f"{r.n_spins},{r.dim},{r.engine},{r.steps},{r.status},"
                     f"{_FMT.format(r.wall_s)},{r.matvecs},{err},{red},{r.detail}\n")


# -- argument parsing ------------------------------------------------------


def _load_config(path, overrides) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for key, value in overrides.items():
        if value is not None:
            cfg = _replace_config(cfg, key, value)
    return cfg


def _replace_config(cfg: RunConfig, key, value) -> RunConfig:
    fields = {f: getattr(cfg, f) for f in (
        "system", "engine", "dt", "steps", "eps", "tau", "xi", "xi_apo",
        "m_max", "observables", "fid_path", "spectrum_path")}
    fields[key] = value
    return RunConfig(**fields)


def _cmd_simulate(args) -> int:
    cfg = _load_config(args.config, {
        "engine": args.engine, "eps": args.eps, "xi": args.xi, "tau": args.tau,
        "fid_path": args.out,
    })
    trace = run_simulation(cfg)
    meta = trace.metadata
    print(f"engine={meta['engine']} dim={meta['liouville_dim']} "
          f"points={trace.n_times} matvecs={meta.get('matvecs')} "
          f"wall_s={meta['total_wall_time_s']:.3f}")
    for warning in meta.get("warnings", []):
        print(f"warning: {warning}", file=sys.stderr)
    if cfg.fid_path:
        print(f"fid written to {cfg.fid_path}")
    return 0


def _cmd_spectrum(args) -> int:
    trace = read_trace_csv(args.fid)
    freqs, amps = spectrum(trace, xi_apo=args.xi_apo)
    out = args.out or "spectrum.csv"
    write_spectrum_csv(freqs, amps, trace.labels, out)
    print(f"spectrum ({len(freqs)} bins) written to {out}")
    return 0


def _cmd_benchmark(args) -> int:
    spins = [int(tok) for tok in args.spins.replace(",", " ").split()]
    engines = [tok.strip() for tok in args.engines.replace(",", " ").split()]
    for engine in engines:
        if engine not in ENGINES:
            raise ConfigError(f"unknown engine {engine!r} in --engines")
    rows = benchmark(spins, engines, dt=args.dt, steps=args.steps, eps=args.eps,
                     xi=args.xi if args.xi is not None else 1e-6,
                     timeout=args.timeout, oracle_cap=args.oracle_cap,
                     seed=args.seed)
    if args.out:
        write_benchmark_csv(rows, args.out)
        print(f"benchmark csv written to {args.out}")
    return 0


def _cmd_dec_precompute(args) -> int:
    cfg = _load_config(args.config, {"eps": args.eps, "tau": args.tau})
    l_op = build_liouvillian(build_hamiltonian(cfg.system))
    rho0 = initial_state(cfg.system.n)
    series = dec_precompute(l_op, rho0, _build_observables(cfg),
                            tau=cfg.horizon, eps=cfg.eps)
    save_series(series, args.out)
    print(f"series with {series.n_orders} orders (tau={series.tau}) "
          f"written to {args.out}")
    return 0


def _cmd_dec_eval(args) -> int:
    series = load_series(args.series)
    times = args.dt * np.arange(args.steps + 1)
    trace = dec_evaluate_grid(series, times)
    out = args.out or "fid.csv"
    write_trace_csv(trace, out)
    print(f"evaluated {trace.n_times} points (zero matvecs) to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qexpect",
        description="Expectation-value dynamics for spin systems via sparse "
                    "propagators and direct series evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"qexpect {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one engine, write the FID")
    sim.add_argument("--config", required=True)
    sim.add_argument("--engine", choices=ENGINES)
    sim.add_argument("--eps", type=float)
    sim.add_argument("--xi", type=float, help="pruning threshold (zte engine)")
    sim.add_argument("--tau", type=float, help="series horizon (dec engine)")
    sim.add_argument("--out", help="FID csv path (overrides [output] fid)")
    sim.set_defaults(func=_cmd_simulate)

    spec = sub.add_parser("spectrum", help="Fourier transform a FID csv")
    spec.add_argument("--fid", required=True, help="trace csv to transform")
    spec.add_argument("--xi-apo", type=float, default=0.0,
                      help="apodization rate applied before the transform")
    spec.add_argument("--out")
    spec.set_defaults(func=_cmd_spectrum)

    bench = sub.add_parser("benchmark", help="engine cost comparison table")
    bench.add_argument("--spins", default="3,4,5")
    bench.add_argument("--engines", default="dec,cheb,krylov")
    bench.add_argument("--dt", type=float, default=0.1)
    bench.add_argument("--steps", type=int, default=1000)
    bench.add_argument("--eps", type=float, default=1e-7)
    bench.add_argument("--xi", type=float)
    bench.add_argument("--timeout", type=float, default=300.0)
    bench.add_argument("--threads", type=int, default=1,
                       help="reserved for parallel dispatch; timings are "
                            "always taken single-threaded")
    bench.add_argument("--oracle-cap", type=int, default=1024)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", help="also write machine-readable csv here")
    bench.set_defaults(func=_cmd_benchmark)

    pre = sub.add_parser("dec-precompute", help="store a series sidecar")
    pre.add_argument("--config", required=True)
    pre.add_argument("--tau", type=float)
    pre.add_argument("--eps", type=float)
    pre.add_argument("--out", required=True)
    pre.set_defaults(func=_cmd_dec_precompute)

    ev = sub.add_parser("dec-eval", help="evaluate a stored sidecar on a grid")
    ev.add_argument("--series", required=True)
    ev.add_argument("--dt", type=float, required=True)
    ev.add_argument("--steps", type=int, required=True)
    ev.add_argument("--out")
    ev.set_defaults(func=_cmd_dec_eval)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except ResourceError as exc:
        print(f"resource limit: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
