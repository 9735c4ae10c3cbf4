"""Command line front end: analytic curves, clearing experiments, RSS replay.

Every subcommand is deterministic under a fixed seed and writes CSV (or
JSON) tables plus matplotlib PNG figures into the output directory.  Exit
codes: 0 success, 2 configuration error, 3 runtime error.  Files created
by a failing run are removed.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import analysis, figures, rss
from .experiment import (
    DEFAULT_BETAS,
    SCALES,
    AggregateResult,
    ConfigError,
    ExperimentConfig,
    run_comparison,
)
from .retouch import ALGORITHMS

TABLE_COLUMNS = (
    "algorithm",
    "beta",
    "mean_B",
    "ci_B",
    "mean_Bp",
    "ci_Bp",
    "mean_total_removed",
    "ci_total_removed",
    "mean_Ap",
    "ci_Ap",
    "mean_chi",
    "ci_chi",
    "mean_bits_reset",
    "ci_bits_reset",
)


class _OutputSession:
    """Tracks files written by one command; deletes them if the run fails."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.paths: list[Path] = []

    def path(self, name: str) -> Path:
        p = self.out_dir / name
        self.paths.append(p)
        return p

    def cleanup(self):
        for p in self.paths:
            try:
                p.unlink(missing_ok=True)
            except OSError:
                pass


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write_csv(path: Path, header, rows):
    lines = [",".join(header)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_json(path: Path, header, rows):
    payload = [dict(zip(header, row)) for row in rows]
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


def _write_table(session, stem, header, rows, fmt):
    if fmt == "json":
        _write_json(session.path(f"{stem}.json"), header, rows)
    else:
        _write_csv(session.path(f"{stem}.csv"), header, rows)
    # The JSON mirror always accompanies a CSV table.
    if fmt == "csv":
        _write_json(session.path(f"{stem}.json"), header, rows)


def _table_rows(result: AggregateResult):
    rows = []
    for r in result.rows:
        rows.append(
            (
                result.algorithm,
                r.beta,
                r.mean_b,
                r.ci_b,
                r.mean_bp,
                r.ci_bp,
                r.mean_total_removed,
                r.ci_total_removed,
                r.mean_ap,
                r.ci_ap,
                r.mean_chi,
                r.ci_chi,
                r.mean_bits_reset,
                r.ci_bits_reset,
            )
        )
    return rows


def _series_files(session, result: AggregateResult, fmt):
    algo = result.algorithm
    chi = [(r.beta, r.mean_chi) for r in result.rows if r.mean_chi is not None]
    bits = [(r.beta, r.mean_bits_reset) for r in result.rows]
    _write_table(session, f"chi_series_{algo}", ("beta", "chi"), chi, fmt)
    _write_table(
        session, f"bits_series_{algo}", ("beta", "bits_reset"), bits, fmt
    )
    return {algo: chi}, {algo: bits}


def _parse_float_list(text: str, flag: str) -> tuple[float, ...]:
    try:
        values = tuple(float(x) for x in text.split(",") if x.strip() != "")
    except ValueError as exc:
        raise click.UsageError(f"{flag}: {exc}") from exc
    if not values:
        raise click.UsageError(f"{flag}: empty list")
    return values


def _run_session(ctx_out: str, body):
    out_dir = Path(ctx_out)
    out_dir.mkdir(parents=True, exist_ok=True)
    session = _OutputSession(out_dir)
    try:
        body(session)
    except (ConfigError, ValueError) as exc:
        session.cleanup()
        raise click.UsageError(str(exc)) from exc
    except click.UsageError:
        session.cleanup()
        raise
    except Exception as exc:
        session.cleanup()
        click.echo(f"error: {exc}", err=True)
        sys.exit(3)


_common = [
    click.option("--seed", type=int, default=1, show_default=True),
    click.option(
        "--out",
        type=click.Path(file_okay=False),
        default="out",
        show_default=True,
        help="output directory",
    ),
    click.option(
        "--format",
        "fmt",
        type=click.Choice(["csv", "json"]),
        default="csv",
        show_default=True,
    ),
    click.option(
        "--scale",
        type=click.Choice(sorted(SCALES)),
        default="desk",
        show_default=True,
    ),
]


def _with_common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Retouched Bloom filter experiments."""


@main.command()
@_with_common
@click.option("--m", type=int, default=100_000, show_default=True)
@click.option("--n", type=int, default=10_000, show_default=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--k-max", type=int, default=20, show_default=True)
@click.option("--m-range", default="10000:200000:10000", show_default=True,
              help="start:stop:step for the m sweep")
@click.option("--n-range", default="1000:20000:1000", show_default=True,
              help="start:stop:step for the n sweep")
def curves(seed, out, fmt, scale, m, n, k, k_max, m_range, n_range):
    """Analytic false positive rate curves in k, m and n."""

    def parse_range(text, flag):
        try:
            start, stop, step = (int(x) for x in text.split(":"))
        except ValueError as exc:
            raise click.UsageError(f"{flag}: expected start:stop:step") from exc
        if step < 1 or stop < start:
            raise click.UsageError(f"{flag}: empty range")
        return list(range(start, stop + 1, step))

    def body(session):
        ks = list(range(1, k_max + 1))
        if not ks:
            raise click.UsageError("--k-max: empty range")
        k_series = [(kk, analysis.analytic_fpr(m, n, kk)) for kk in ks]
        m_series = [
            (mm, analysis.analytic_fpr(mm, n, k)) for mm in parse_range(m_range, "--m-range")
        ]
        n_series = [
            (nn, analysis.analytic_fpr(m, nn, k)) for nn in parse_range(n_range, "--n-range")
        ]
        _write_table(session, "fp_vs_k", ("k", "fpr"), k_series, fmt)
        _write_table(session, "fp_vs_m", ("m", "fpr"), m_series, fmt)
        _write_table(session, "fp_vs_n", ("n", "fpr"), n_series, fmt)
        best = analysis.optimal_k(m, n)
        annotations = [
            ("optimal_k_exact", best.exact),
            ("optimal_k_rounded", float(best.rounded)),
            ("min_fpr", analysis.min_fpr(m, n)),
        ]
        _write_table(session, "annotations", ("quantity", "value"), annotations, fmt)
        figures.render_fpr_curves(
            k_series,
            m_series,
            n_series,
            out_dir=session.out_dir,
        )
        for name in ("fp_vs_k.png", "fp_vs_m.png", "fp_vs_n.png"):
            session.paths.append(session.out_dir / name)
        click.echo(f"wrote curves to {session.out_dir}")

    _run_session(out, body)


@main.command()
@_with_common
@click.option(
    "--algorithm",
    type=click.Choice(sorted(ALGORITHMS)),
    default="ratio",
    show_default=True,
)
@click.option("--betas", default=",".join(str(b) for b in DEFAULT_BETAS),
              show_default=True)
@click.option("--trials", type=int, default=15, show_default=True)
def clearing(seed, out, fmt, scale, algorithm, betas, trials):
    """Beta sweep of one clearing algorithm with Student-t aggregates."""

    def body(session):
        config = ExperimentConfig.at_scale(
            algorithm,
            scale,
            master_seed=seed,
            betas=_parse_float_list(betas, "--betas"),
            trials=trials,
        )
        result = run_comparison(config, (algorithm,))[algorithm]
        _write_table(session, f"clearing_{algorithm}", TABLE_COLUMNS,
                     _table_rows(result), fmt)
        chi_series, bits_series = _series_files(session, result, fmt)
        figures.render_series(
            chi_series, session.path("chi_vs_beta.png"),
            "beta", "chi", "false positives removed per false negative",
        )
        figures.render_series(
            bits_series, session.path("bits_vs_beta.png"),
            "beta", "bits reset", "clearing effort", logy=True,
        )
        click.echo(f"wrote clearing tables to {session.out_dir}")

    _run_session(out, body)


@main.command()
@_with_common
@click.option("--betas", default="0.01,0.05,0.25,0.75,1.0", show_default=True)
@click.option("--trials", type=int, default=15, show_default=True)
def improved(seed, out, fmt, scale, betas, trials):
    """Standard versus improved selective clearing, one series per variant."""

    pairs = (("min_fn", "improved_min_fn"), ("max_fp", "improved_max_fp"),
             ("ratio", "improved_ratio"))

    def body(session):
        algos = tuple(a for pair in pairs for a in pair)
        config = ExperimentConfig.at_scale(
            algos[0],
            scale,
            master_seed=seed,
            betas=_parse_float_list(betas, "--betas"),
            trials=trials,
        )
        results = run_comparison(config, algos)
        rows = []
        chi_all = {}
        for algo in algos:
            rows.extend(_table_rows(results[algo]))
            chi, _ = _series_files(session, results[algo], fmt)
            chi_all.update(chi)
        _write_table(session, "improved_comparison", TABLE_COLUMNS, rows, fmt)
        for standard, better in pairs:
            figures.render_series(
                {standard: chi_all[standard], better: chi_all[better]},
                session.path(f"chi_{standard}_vs_improved.png"),
                "beta", "chi", f"{standard}: standard vs improved",
            )
        click.echo(f"wrote improved-clearing comparison to {session.out_dir}")

    _run_session(out, body)


@main.command("rss")
@_with_common
@click.option("--kind", type=click.Choice(rss.RSS_KINDS), default="rbf",
              show_default=True)
@click.option("--m", type=int, default=1024, show_default=True)
@click.option("--k", type=int, default=5, show_default=True)
@click.option("--beta", "beta_text", default="0.25", show_default=True,
              help="comma separated list for a sweep")
@click.option("--algorithm", type=click.Choice(sorted(ALGORITHMS)),
              default="ratio", show_default=True)
@click.option("--cycles", type=int, default=1, show_default=True)
@click.option("--corpus", "corpus_path", type=click.Path(exists=True, dir_okay=False),
              default=None, help="trace corpus file; generated when omitted")
@click.option("--monitors", type=int, default=10, show_default=True)
@click.option("--destinations", type=int, default=300, show_default=True)
@click.option("--mean-path-length", type=int, default=8, show_default=True)
@click.option("--sharing", type=float, default=0.5, show_default=True)
@click.option("--dynamics", type=float, default=0.05, show_default=True)
def rss_cmd(seed, out, fmt, scale, kind, m, k, beta_text, algorithm, cycles,
            corpus_path, monitors, destinations, mean_path_length, sharing,
            dynamics):
    """Stop-set replay: learn on cycle 0, replay later cycles."""

    def body(session):
        betas = _parse_float_list(beta_text, "--beta")
        if corpus_path is not None:
            corpus = rss.ingest_corpus(corpus_path)
        else:
            config = rss.SyntheticTopologyConfig(
                monitor_count=monitors,
                destination_count=destinations,
                mean_path_length=mean_path_length,
                sharing_factor=sharing,
                dynamics_rate=dynamics,
            )
            corpus = rss.generate_corpus(config, seed=seed, cycles=cycles + 1)
        if len(corpus.cycles) < cycles + 1:
            raise click.UsageError(
                f"--cycles: corpus has {len(corpus.cycles)} cycles, "
                f"need {cycles + 1}"
            )
        learning = corpus.cycles[0]
        stop_set = rss.build_rss(learning)
        header = (
            "impl", "m", "beta", "cycle", "success", "stopping_short",
            "collision", "nodes_missed", "links_missed",
        )
        rows = []
        for beta in betas:
            if kind == "list":
                impl = rss.RssImplementation.from_set(stop_set)
            else:
                impl = rss.encode_rss(
                    stop_set, kind, m=m, k=k, seed=seed, beta=beta,
                    algorithm=algorithm, learning=learning,
                )
            for ci, metrics in enumerate(
                rss.multi_cycle_replay(corpus, impl, cycles=cycles), start=1
            ):
                rows.append(
                    (
                        kind,
                        impl.m if impl.m is not None else "",
                        beta if kind == "rbf" else "",
                        ci,
                        metrics.success_rate,
                        metrics.stopping_short_rate,
                        metrics.collision_rate,
                        metrics.nodes_missed,
                        metrics.links_missed,
                    )
                )
            if kind != "rbf":
                break  # beta only matters for retouched filters
        _write_table(session, "rss_metrics", header, rows, fmt)
        fig_rows = [dict(zip(header, row)) for row in rows]
        xkey = "beta" if (kind == "rbf" and len(betas) > 1 and cycles == 1) else "cycle"
        plot_rows = [r for r in fig_rows if r["cycle"] == 1] if xkey == "beta" else [
            r for r in fig_rows if r["beta"] == fig_rows[0]["beta"]
        ]
        figures.render_rss_rates(plot_rows, session.path("rss_rates.png"), xkey)
        click.echo(f"wrote stop-set replay metrics to {session.out_dir}")

    _run_session(out, body)


@main.command("gen-corpus")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--out", type=click.Path(file_okay=False), default="out",
              show_default=True)
@click.option("--name", default="corpus.tsv", show_default=True)
@click.option("--cycles", type=int, default=2, show_default=True)
@click.option("--monitors", type=int, default=10, show_default=True)
@click.option("--destinations", type=int, default=300, show_default=True)
@click.option("--mean-path-length", type=int, default=8, show_default=True)
@click.option("--sharing", type=float, default=0.5, show_default=True)
@click.option("--dynamics", type=float, default=0.05, show_default=True)
def gen_corpus(seed, out, name, cycles, monitors, destinations,
               mean_path_length, sharing, dynamics):
    """Write a deterministic synthetic trace corpus."""

    def body(session):
        config = rss.SyntheticTopologyConfig(
            monitor_count=monitors,
            destination_count=destinations,
            mean_path_length=mean_path_length,
            sharing_factor=sharing,
            dynamics_rate=dynamics,
        )
        corpus = rss.generate_corpus(config, seed=seed, cycles=cycles)
        rss.write_corpus(corpus, session.path(name))
        n = sum(len(c) for c in corpus.cycles)
        click.echo(f"wrote {n} traces over {cycles} cycles to {session.out_dir / name}")

    _run_session(out, body)


if __name__ == "__main__":
    main()
