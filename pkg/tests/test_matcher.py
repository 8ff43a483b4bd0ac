import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import DOWN, UP, brute_force_match, label, make_sample, random_corpus, random_summary
from pktseqfp.fingerprint import SummaryFingerprint, SummarySequence, summarize
from pktseqfp.matcher import (
    VacuousFingerprintError,
    check_loadable,
    match_sample,
    window_matches,
)
from pktseqfp.metrics import Technique, TechniqueKind
from pktseqfp.refinement import RefinementConfig, refine
from pktseqfp.tabulation import TabulatedTrafficSample

SDBF = Technique(TechniqueKind.SDBF)


def summary_of(seqs, technique=SDBF):
    return SummaryFingerprint(1, technique, None, tuple(seqs))


def point_seq(packets, domain="api.example.com"):
    lab = label(domain)
    return SummarySequence(
        tuple(s for s, _ in packets), tuple(s for s, _ in packets),
        tuple({d} for _, d in packets), tuple({lab} for _ in packets),
    )


def test_vacuous_fingerprint_rejected():
    empty = summary_of([])
    with pytest.raises(VacuousFingerprintError, match="vacuous fingerprint"):
        match_sample(empty, make_sample(1, 1, []))
    with pytest.raises(VacuousFingerprintError):
        check_loadable(empty, "x.json")


def test_window_length_mismatch():
    with pytest.raises(ValueError):
        window_matches([], point_seq([(1, UP)]), SDBF)


def test_window_examples():
    seq = SummarySequence((100, 200), (120, 200), ({UP}, {DOWN}), ({label("x.example.com")},) * 2)
    sample = make_sample(1, 1, [("x.example.com", [(110, UP), (200, DOWN)]),
                                ("x.example.com", [(130, UP), (200, DOWN)])])
    s1, s2 = sample.streams.values()
    assert window_matches(s1, seq, SDBF)
    assert not window_matches(s2, seq, SDBF)


def test_esld_window_example():
    seq = SummarySequence((1,), (1,), ({UP},), ({label("x.example.com")},))
    win = make_sample(1, 1, [("y.example.com", [(999, DOWN)])]).records
    assert window_matches(win, seq, Technique(TechniqueKind.ESLDBF))
    assert not window_matches(win, seq, Technique(TechniqueKind.FQDNBF))


def test_esdbf_window_needs_same_endpoint():
    seq = point_seq([(100, UP)], "x.example.com")
    win = make_sample(1, 1, [("y.example.com", [(100, UP)])]).records
    assert window_matches(win, seq, SDBF)
    assert not window_matches(win, seq, Technique(TechniqueKind.ESDBF))


def test_early_termination():
    seq = point_seq([(100, UP), (200, DOWN)])
    streams = [("api.example.com", [(100, UP), (200, DOWN)])] + [
        ("cdn.example.com", [(50, UP)] * 10)
    ]
    sample = make_sample(1, 1, streams)  # stream 1 rows come first
    res = match_sample(summary_of([seq]), sample)
    assert res.matched and res.packets_processed == 2 < len(sample.records)
    assert res.locations[0].stream_id == 1 and res.locations[0].end_position == 2


def test_missing_sequence_scans_everything():
    sample = make_sample(1, 1, [("api.example.com", [(100, UP), (200, DOWN)])])
    res = match_sample(summary_of([point_seq([(100, UP), (200, DOWN)]), point_seq([(7, UP)])]), sample)
    assert not res.matched and res.packets_processed == len(sample.records)
    assert res.locations[1] is None


def test_windows_never_cross_streams():
    seq = point_seq([(100, UP), (200, DOWN)])
    sample = make_sample(1, 1, [("api.example.com", [(100, UP)]), ("api.example.com", [(200, DOWN)])],
                         rng=None)
    # rows: (s1,100) then (s2,200); adjacent in row order, but different streams
    assert not match_sample(summary_of([seq]), sample).matched


def test_peak_buffer_bound():
    rng = random.Random(3)
    samples = random_corpus(rng)
    seq = point_seq([(1, UP), (2, UP), (3, UP)])
    for s in samples:
        res = match_sample(summary_of([seq]), s)
        assert res.peak_buffered <= 3 * len(s.streams)


def test_own_training_samples_match():
    rng = random.Random(8)
    checked = 0
    for _ in range(30):
        samples = random_corpus(rng, shared=3)
        for tech in ("sdbf", "esdbf", "ebf", "fqdnbf", "esldbf"):
            fp = refine(samples, RefinementConfig.strict(Technique.parse(tech), 5, n_min=1))
            if fp.is_empty:
                continue
            checked += 1
            summary = summarize(fp)
            assert all(match_sample(summary, s).matched for s in samples)
    assert checked > 20


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 10 ** 6), technique=st.sampled_from(["sdbf", "esdbf", "ebf", "fqdnbf", "esldbf"]))
def test_streaming_matches_brute_force(seed, technique):
    rng = random.Random(seed)
    sample = random_corpus(rng, T=1, n_sizes=6)[0]
    summary = random_summary(rng, sample, Technique.parse(technique))
    assert match_sample(summary, sample).matched == brute_force_match(summary, sample)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10 ** 6))
def test_monotone_under_extra_streams_and_packets(seed):
    rng = random.Random(seed)
    sample = random_corpus(rng, T=1, n_sizes=6)[0]
    summary = random_summary(rng, sample, SDBF)
    if not match_sample(summary, sample).matched:
        return
    streams = [(recs[0].domain.value, [(r.size, r.direction) for r in recs]) for recs in sample.streams.values()]
    streams = [(d, p + [(rng.randint(40, 1500), UP)]) for d, p in streams]
    streams.append(("cdn.example.com", [(77, DOWN)]))
    bigger = make_sample(1, 1, streams, rng)
    assert match_sample(summary, bigger).matched


def test_accepts_plain_record_iterables():
    sample = make_sample(1, 1, [("api.example.com", [(100, UP)])])
    assert match_sample(summary_of([point_seq([(100, UP)])]), iter(sample.records)).matched
    assert isinstance(sample, TabulatedTrafficSample)
