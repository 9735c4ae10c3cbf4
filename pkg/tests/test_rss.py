"""Stop-set simulator: corpus I/O, generator, replay classification."""

import numpy as np
import pytest

from rbfkit.rss import (
    CorpusParseError,
    InsufficientCyclesError,
    PathCorpus,
    RssImplementation,
    SyntheticTopologyConfig,
    TraceRoute,
    beta_sweep,
    build_rss,
    encode_rss,
    generate_corpus,
    ingest_corpus,
    multi_cycle_replay,
    replay_probing,
    write_corpus,
)

SMALL = SyntheticTopologyConfig(destination_count=120, dynamics_rate=0.05)
STATIC = SyntheticTopologyConfig(destination_count=120, dynamics_rate=0.0)


def test_trace_route_invariants():
    t = TraceRoute(monitor="mon", destination=9, hops=(1, 2, 9))
    assert t.reached and t.penultimate == 2
    unfinished = TraceRoute(monitor="mon", destination=9, hops=(1, 2, 3))
    assert not unfinished.reached and unfinished.penultimate is None
    with pytest.raises(ValueError):
        TraceRoute(monitor="mon", destination=9, hops=())


def test_ingest_rejects_empty_and_bad_lines(tmp_path):
    empty = tmp_path / "empty.tsv"
    empty.write_text("", encoding="utf-8")
    with pytest.raises(CorpusParseError):
        ingest_corpus(empty)
    comments_only = tmp_path / "comments.tsv"
    comments_only.write_text("# nothing\n\n", encoding="utf-8")
    with pytest.raises(CorpusParseError):
        ingest_corpus(comments_only)
    bad = tmp_path / "bad.tsv"
    bad.write_text("0\tmon\t5\t1,2,5\n0\tmon\tbroken\t1,2\n", encoding="utf-8")
    with pytest.raises(CorpusParseError, match="line 2"):
        ingest_corpus(bad)
    fewfields = tmp_path / "few.tsv"
    fewfields.write_text("0\tmon\t5\n", encoding="utf-8")
    with pytest.raises(CorpusParseError, match="line 1"):
        ingest_corpus(fewfields)


def test_corpus_round_trip(tmp_path):
    corpus = generate_corpus(SMALL, seed=4, cycles=3)
    path = tmp_path / "corpus.tsv"
    write_corpus(corpus, path)
    back = ingest_corpus(path)
    assert back == corpus


def test_generator_deterministic_and_static_without_dynamics():
    a = generate_corpus(STATIC, seed=9, cycles=3)
    b = generate_corpus(STATIC, seed=9, cycles=3)
    assert a == b
    assert a.cycles[0] == a.cycles[1] == a.cycles[2]
    moved = generate_corpus(SMALL, seed=9, cycles=2)
    assert moved.cycles[0] != moved.cycles[1]


def test_generator_trace_counts():
    config = SyntheticTopologyConfig(monitor_count=10, destination_count=1000)
    corpus = generate_corpus(config, seed=0, cycles=1)
    assert len(corpus.cycles[0]) == 10_000
    assert len(corpus.monitors) == 10
    assert len(corpus.destinations) == 1000


def test_generator_validation():
    with pytest.raises(ValueError):
        SyntheticTopologyConfig(monitor_count=0)
    with pytest.raises(ValueError):
        SyntheticTopologyConfig(mean_path_length=2)
    with pytest.raises(ValueError):
        SyntheticTopologyConfig(dynamics_rate=1.5)
    with pytest.raises(ValueError):
        generate_corpus(SMALL, seed=0, cycles=0)


def test_build_rss_penultimate_extraction():
    traces = [
        TraceRoute(monitor="a", destination=40, hops=(10, 20, 30, 40)),
        TraceRoute(monitor="a", destination=41, hops=(41,)),  # adjacent: nothing
        TraceRoute(monitor="b", destination=50, hops=(10, 33, 50)),
        TraceRoute(monitor="b", destination=60, hops=(10, 20, 99)),  # unreached
    ]
    assert build_rss(traces) == {30, 33}


def test_build_rss_matches_direct_enumeration():
    corpus = generate_corpus(SMALL, seed=2, cycles=1)
    naive = {
        t.hops[-2]
        for t in corpus.cycles[0]
        if len(t.hops) >= 2 and t.hops[-1] == t.destination
    }
    assert build_rss(corpus.cycles[0]) == naive


def test_encode_list_and_bloom_contracts():
    corpus = generate_corpus(SMALL, seed=5, cycles=1)
    rss_set = build_rss(corpus.cycles[0])
    lst = encode_rss(rss_set, "list")
    assert all(lst.contains(k) for k in rss_set)
    assert not lst.contains(-1 & 0xFFFF)
    bloom = encode_rss(rss_set, "bloom", m=4096, k=5, seed=5)
    assert all(bloom.contains(k) for k in rss_set)
    with pytest.raises(ValueError):
        encode_rss(rss_set, "bloom")  # missing m
    with pytest.raises(ValueError):
        encode_rss(rss_set, "trie")


def test_encode_rbf_removes_targeted_false_positives():
    corpus = generate_corpus(SMALL, seed=6, cycles=1)
    learning = corpus.cycles[0]
    rss_set = build_rss(learning)
    bloom = encode_rss(rss_set, "bloom", m=256, k=5, seed=6)
    universe = sorted({h for t in learning for h in t.hops})
    fp = [x for x in universe if x not in rss_set and bloom.contains(x)]
    assert fp, "fixture needs at least one false positive"
    rbf = encode_rss(
        rss_set, "rbf", m=256, k=5, seed=6, beta=1.0, learning=learning
    )
    assert not any(rbf.contains(x) for x in fp)


def test_encode_rbf_beta_zero_equals_bloom():
    corpus = generate_corpus(SMALL, seed=7, cycles=1)
    rss_set = build_rss(corpus.cycles[0])
    bloom = encode_rss(rss_set, "bloom", m=2048, k=5, seed=7)
    rbf = encode_rss(
        rss_set, "rbf", m=2048, k=5, seed=7, beta=0.0, learning=corpus.cycles[0]
    )
    assert np.array_equal(rbf.filter.bits, bloom.filter.bits)


def test_replay_list_static_network_is_perfect():
    corpus = generate_corpus(STATIC, seed=8, cycles=2)
    impl = RssImplementation.from_set(build_rss(corpus.cycles[0]))
    metrics = replay_probing(corpus.cycles[1], impl)
    assert metrics.success_rate == 1.0
    assert metrics.collision_rate == 0.0
    assert metrics.nodes_missed == 0.0
    assert metrics.links_missed == 0.0


def test_replay_always_negative_impl_collides_everywhere():
    corpus = generate_corpus(STATIC, seed=8, cycles=2)
    impl = RssImplementation.from_set(())
    metrics = replay_probing(corpus.cycles[1], impl)
    assert metrics.collision_rate == 1.0


def test_replay_classification_partitions_traces():
    corpus = generate_corpus(SMALL, seed=10, cycles=2)
    rss_set = build_rss(corpus.cycles[0])
    impl = encode_rss(rss_set, "bloom", m=1024, k=5, seed=10)
    metrics = replay_probing(corpus.cycles[1], impl)
    total = (
        metrics.success_rate
        + metrics.stopping_short_rate
        + metrics.collision_rate
        + metrics.no_stop_rate
    )
    assert total == pytest.approx(1.0)


def test_replay_self_block_guard():
    # the monitor's first hop is in the stop set, but its own trace passes it
    trace = TraceRoute(monitor="m", destination=5, hops=(50, 7, 5))
    impl = RssImplementation.from_set({50, 7})
    metrics = replay_probing([trace], impl)
    assert metrics.success_rate == 1.0


def test_replay_troublesomeness_counts_sum_to_short_events():
    corpus = generate_corpus(SMALL, seed=11, cycles=2)
    rss_set = build_rss(corpus.cycles[0])
    impl = encode_rss(rss_set, "bloom", m=768, k=5, seed=11)
    metrics = replay_probing(corpus.cycles[1], impl)
    n_short = round(metrics.stopping_short_rate * metrics.n_traces)
    assert sum(metrics.troublesomeness.values()) == n_short


def test_replay_unreached_trace_stop_is_short_else_no_stop():
    stopped = TraceRoute(monitor="m", destination=99, hops=(1, 2, 3))
    metrics = replay_probing([stopped], RssImplementation.from_set({3}))
    assert metrics.stopping_short_rate == 1.0
    metrics = replay_probing([stopped], RssImplementation.from_set(()))
    assert metrics.no_stop_rate == 1.0


def test_multi_cycle_replay_flat_without_dynamics():
    corpus = generate_corpus(STATIC, seed=12, cycles=4)
    impl = RssImplementation.from_set(build_rss(corpus.cycles[0]))
    series = multi_cycle_replay(corpus, impl, cycles=3)
    assert [m.success_rate for m in series] == [1.0, 1.0, 1.0]
    with pytest.raises(InsufficientCyclesError):
        multi_cycle_replay(corpus, impl, cycles=4)


def test_beta_sweep_requires_probing_cycle():
    corpus = generate_corpus(SMALL, seed=13, cycles=1)
    with pytest.raises(InsufficientCyclesError):
        beta_sweep(corpus, m=512, betas=(0.5,))


def test_beta_one_removes_every_learned_false_positive_contribution():
    corpus = generate_corpus(SMALL, seed=14, cycles=2)
    sweep = beta_sweep(corpus, m=768, betas=(1.0,), k=5, seed=14)
    _, metrics = sweep[0]
    # all learned false positives retouched away: remaining short events can
    # only come from network dynamics, bounded by the list implementation
    lst = RssImplementation.from_set(build_rss(corpus.cycles[0]))
    list_metrics = replay_probing(corpus.cycles[1], lst)
    assert metrics.stopping_short_rate <= list_metrics.stopping_short_rate + 0.01


def test_bloom_success_never_decreases_with_m():
    rates = {m: [] for m in (768, 1536, 3072)}
    for seed in range(10):
        corpus = generate_corpus(SMALL, seed=seed, cycles=2)
        rss_set = build_rss(corpus.cycles[0])
        for m in rates:
            impl = encode_rss(rss_set, "bloom", m=m, k=5, seed=seed)
            rates[m].append(replay_probing(corpus.cycles[1], impl).success_rate)
    means = [float(np.mean(rates[m])) for m in sorted(rates)]
    assert means[0] <= means[1] <= means[2]


def test_multi_cycle_degradation_trends():
    # With network dynamics the stop set ages: success decays over cycles,
    # and the retouched filter tracks the exact list cycle over cycle.
    n_seeds, n_cycles = 6, 8
    succ_list = np.zeros(n_cycles)
    succ_rbf = np.zeros(n_cycles)
    for seed in range(n_seeds):
        config = SyntheticTopologyConfig(destination_count=300, dynamics_rate=0.08)
        corpus = generate_corpus(config, seed=seed, cycles=n_cycles + 1)
        rss_set = build_rss(corpus.cycles[0])
        lst = RssImplementation.from_set(rss_set)
        rbf = encode_rss(
            rss_set, "rbf", m=1536, k=5, seed=seed, beta=0.25,
            learning=corpus.cycles[0],
        )
        for ci, met in enumerate(multi_cycle_replay(corpus, lst, cycles=n_cycles)):
            succ_list[ci] += met.success_rate
        for ci, met in enumerate(multi_cycle_replay(corpus, rbf, cycles=n_cycles)):
            succ_rbf[ci] += met.success_rate
    succ_list /= n_seeds
    succ_rbf /= n_seeds
    assert succ_list[-1] < succ_list[0]
    assert succ_rbf[-1] < succ_rbf[0]
    agree = np.mean(np.sign(np.diff(succ_list)) == np.sign(np.diff(succ_rbf)))
    assert agree >= 0.7  # both implementations move the same way


def test_path_corpus_from_cycles_collects_identifiers():
    t1 = TraceRoute(monitor="a", destination=5, hops=(1, 5))
    t2 = TraceRoute(monitor="b", destination=6, hops=(2, 6))
    corpus = PathCorpus.from_cycles([[t1], [t2]])
    assert corpus.monitors == {"a", "b"}
    assert corpus.destinations == {5, 6}
