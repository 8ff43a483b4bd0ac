import json
import random
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import DOWN, UP, label, make_sample, random_corpus
from pktseqfp.evaluation import (
    Bins,
    Dataset,
    false_positive_scan,
    generate_planted_dataset,
    load_dataset,
    merge_datasets,
    nat_merge,
    percent,
    prevalence,
    write_dataset,
)
from pktseqfp.evaluation.merge import merge_samples
from pktseqfp.evaluation.prevalence import has_baseline_traffic
from pktseqfp.evaluation.report import (
    plot_fp_bins,
    plot_prevalence,
    write_fp_cells_csv,
    write_fp_csv,
    write_prevalence_csv,
)
from pktseqfp.evaluation.synth import (
    EventPlan,
    NoiseSequence,
    PlanError,
    PlantedSequence,
    PlantPlan,
    random_plan,
)
from pktseqfp.fingerprint import SummaryFingerprint, SummarySequence
from pktseqfp.matcher import VacuousFingerprintError, match_sample
from pktseqfp.metrics import Technique, TechniqueKind
from pktseqfp.refinement import ConfigError, RefinementConfig

SDBF = Technique(TechniqueKind.SDBF)
SIGNATURE = [(583, UP), (1514, DOWN)]


def signature_fp(event_id=1):
    lab = label("api.example.com")
    seq = SummarySequence((583, 1514), (583, 1514), ({UP}, {DOWN}), ({lab}, {lab}))
    return SummaryFingerprint(event_id, SDBF, RefinementConfig(T=2, n_min=2), (seq,))


def target_dataset(name, n_events, carriers, T=2):
    """Events 1..n_events; the events in ``carriers`` hold the signature in their first sample."""
    events = {}
    for e in range(1, n_events + 1):
        samples = []
        for s in range(1, T + 1):
            streams = [("cdn.example.com", [(60 + s, UP), (70 + e, DOWN)])]
            if e in carriers and s == 1:
                streams.append(("api.example.com", SIGNATURE))
            samples.append(make_sample(e, s, streams))
        events[e] = samples
    return Dataset(name, events)


# -- percentages -----------------------------------------------------------------------

@pytest.mark.parametrize("count,total,expected", [
    (964, 1000, 96), (95, 140, 68), (1, 8, 13), (1, 200, 1), (1, 201, 0), (0, 0, 0), (5, 5, 100),
])
def test_percent(count, total, expected):
    assert percent(count, total) == expected


@settings(max_examples=200)
@given(total=st.integers(1, 5000), data=st.data())
def test_percent_is_nearest_with_half_up(total, data):
    count = data.draw(st.integers(0, total))
    p = percent(count, total)
    assert abs(100 * count - p * total) * 2 <= total
    assert 0 <= p <= 100


# -- prevalence -------------------------------------------------------------------------

def test_prevalence_counts_planted_events():
    plan = PlantPlan(4, (
        EventPlan(1, (PlantedSequence("api.example.com", tuple(SIGNATURE)),)),
        EventPlan(2, ()),
        EventPlan(3, (PlantedSequence("cdn.example.net", ((90, UP), (91, UP), (92, DOWN))),)),
    ))
    ds, _ = generate_planted_dataset(plan, seed=1)
    report = prevalence(ds, RefinementConfig.strict(SDBF, 4, n_min=2), keep_fingerprints=True)
    row = report.row("sdbf")
    assert (row.fingerprintable, row.total, row.percentage) == (2, 3, 67)
    assert report.fingerprints["sdbf"][2].is_empty


def test_prevalence_baseline_skips_events_with_silent_samples():
    ds = Dataset("d", {
        1: [make_sample(1, 1, [("a.example.com", SIGNATURE)]), make_sample(1, 2, [("a.example.com", SIGNATURE)])],
        2: [make_sample(2, 1, [("a.example.com", SIGNATURE)]), make_sample(2, 2, [])],
    })
    assert has_baseline_traffic(ds.events[1]) and not has_baseline_traffic(ds.events[2])
    row = prevalence(ds, RefinementConfig.strict(SDBF, 2, n_min=2)).rows[0]
    assert (row.fingerprintable, row.total, row.baseline_total, row.baseline_percentage) == (1, 2, 1, 100)


def test_prevalence_empty_dataset_is_flagged():
    row = prevalence(Dataset("none", {}), RefinementConfig(T=3, n_min=1)).rows[0]
    assert row.empty and row.total == 0 and row.percentage == 0


def test_prevalence_rejects_mismatched_T():
    ds, _ = generate_planted_dataset(random_plan(random.Random(1), 2, 3), seed=1)
    with pytest.raises(ConfigError):
        prevalence(ds, RefinementConfig(T=4, n_min=1))


def test_prevalence_parallel_equals_serial():
    ds, _ = generate_planted_dataset(random_plan(random.Random(4), 6, 3), seed=4)
    cfgs = [RefinementConfig.strict(SDBF, 3, n_min=2), RefinementConfig.strict(Technique.parse("ebf"), 3)]
    assert prevalence(ds, cfgs).rows == prevalence(ds, cfgs, jobs=2).rows


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 5))
def test_prevalence_is_antimonotone_in_T_min(seed):
    rng = random.Random(seed)
    ds = Dataset("r", {e: random_corpus(rng, T=5, event_id=e, shared=2) for e in range(1, 4)})
    counts = [
        prevalence(ds, RefinementConfig(T=5, n_min=1, T_min=t, min_pts=t)).rows[0].fingerprintable
        for t in range(1, 6)
    ]
    assert counts == sorted(counts, reverse=True)


# -- false positives -------------------------------------------------------------------

def test_bins():
    b = Bins()
    assert b.labels == ("0", "1-10", "11-100", "101+")
    assert [b.label(n) for n in (0, 1, 10, 11, 100, 101, 150)] == ["0", "1-10", "1-10", "11-100", "11-100", "101+", "101+"]
    assert Bins.parse("0,5").labels == ("0", "1-5", "6+")
    assert Bins.parse("2,5").labels == ("0-2", "3-5", "6+")
    for bad in ("5,5", "x", "", "-1,3"):
        with pytest.raises(ValueError):
            Bins.parse(bad)


@pytest.mark.parametrize("n_carriers,expected_bin", [(0, "0"), (3, "1-10"), (10, "1-10"), (11, "11-100"), (150, "101+")])
def test_fp_bin_matches_enumeration(n_carriers, expected_bin):
    n_events = max(n_carriers + 2, 5)
    target = target_dataset("other", n_events, set(range(2, 2 + n_carriers)))
    fp = signature_fp()
    report = false_positive_scan({"src": [fp]}, [target])
    (row,) = report.rows
    enumerated = [e for e, ss in target.events.items() if any(match_sample(fp, s).matched for s in ss)]
    assert list(row.foreign_events) == enumerated and row.fp_events == n_carriers
    assert row.bin == expected_bin and row.fp_samples == n_carriers


def test_own_event_is_excluded():
    ds = target_dataset("home", 5, {1, 2, 3})
    (row,) = false_positive_scan({"home": [signature_fp(1)]}, [ds]).rows
    assert row.foreign_events == (2, 3) and row.own_matches == 1
    # the same events under another dataset name are all foreign
    (row,) = false_positive_scan({"elsewhere": [signature_fp(1)]}, [ds]).rows
    assert row.foreign_events == (1, 2, 3) and row.own_matches is None


def test_fp_scan_rejects_vacuous_and_duplicates():
    ds = target_dataset("t", 2, set())
    empty = SummaryFingerprint(1, SDBF, None, ())
    with pytest.raises(VacuousFingerprintError):
        false_positive_scan({"s": [empty]}, [ds])
    with pytest.raises(ValueError, match="duplicate"):
        false_positive_scan({"s": [signature_fp(1), signature_fp(1)]}, [ds])


def test_cells_and_parallel_scan():
    targets = [target_dataset("a", 6, {2, 3}), target_dataset("b", 4, set())]
    fps = {"a": [signature_fp(1), signature_fp(4)]}
    serial = false_positive_scan(fps, targets)
    assert false_positive_scan(fps, targets, jobs=2).rows == serial.rows
    cells = serial.cells()
    assert cells[("a", "a")] == Counter({"1-10": 2})
    assert cells[("a", "b")] == Counter({"0": 2})


def test_journal_resume_and_torn_line(tmp_path, caplog):
    targets = [target_dataset("t", 5, {2, 4})]
    fps = {"s": [signature_fp(1)]}
    journal = tmp_path / "fp.jsonl"
    first = false_positive_scan(fps, targets, journal=journal)
    lines = journal.read_text().splitlines()
    assert len(lines) == 5
    assert {"source", "event_id", "technique", "digest", "target", "target_event", "matched_samples"} == set(json.loads(lines[0]))
    # keep two units, then a torn write
    journal.write_text("\n".join(lines[:2]) + "\n" + lines[2][:10])
    with caplog.at_level("INFO"):
        again = false_positive_scan(fps, targets, journal=journal)
    assert again.rows == first.rows
    assert "2 from journal" in caplog.text
    # a changed fingerprint does not reuse stale journal entries
    lab = label("api.example.com")
    other = SummaryFingerprint(1, SDBF, None, (SummarySequence((1,), (1,), ({UP},), ({lab},)),))
    (row,) = false_positive_scan({"s": [other]}, targets, journal=journal).rows
    assert row.fp_events == 0


# -- merging --------------------------------------------------------------------------------

def test_merge_samples_keeps_every_stream_in_order():
    a = make_sample(1, 1, [("a.example.com", [(1, UP), (2, DOWN)]), ("b.example.com", [(3, UP)])])
    b = make_sample(2, 1, [("c.example.com", [(4, DOWN), (5, DOWN)])])
    m = merge_samples([a, b], 9, 3)
    assert (m.event_id, m.sample_id) == (9, 3)
    assert len(m.streams) == len(a.streams) + len(b.streams)
    got = [[(r.domain.value, r.size) for r in recs] for recs in m.streams.values()]
    assert got == [[("a.example.com", 1), ("a.example.com", 2)], [("b.example.com", 3)],
                   [("c.example.com", 4), ("c.example.com", 5)]]
    with pytest.raises(ValueError):
        merge_samples([], 1, 1)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10 ** 5))
def test_merged_samples_still_match(seed):
    rng = random.Random(seed)
    a, b = random_corpus(rng, T=1)[0], random_corpus(rng, T=1, event_id=2)[0]
    recs = next(iter(a.streams.values()), None)
    if not recs:
        return
    seq = SummarySequence(
        tuple(r.size for r in recs[:3]), tuple(r.size for r in recs[:3]),
        tuple({r.direction} for r in recs[:3]), tuple({r.domain} for r in recs[:3]),
    )
    fp = SummaryFingerprint(1, SDBF, None, (seq,))
    assert match_sample(fp, a).matched
    assert match_sample(fp, merge_samples([a, b], 1, 1)).matched
    assert match_sample(fp, merge_samples([b, a], 1, 1)).matched


def test_nat_merge_and_merge_datasets():
    ds = target_dataset("d", 4, {1})
    nat = nat_merge(ds, [[1, 2], [3, 4]])
    assert list(nat.events) == [1, 2] and nat.T == 2 and nat.name == "d-nat"
    assert len(nat.events[1][0].streams) == len(ds.events[1][0].streams) + len(ds.events[2][0].streams)
    with pytest.raises(KeyError):
        nat_merge(ds, [[1, 9]])
    other = target_dataset("o", 4, {3})
    joined = merge_datasets([ds, other])
    assert joined.name == "d+o" and list(joined.events) == [1, 2, 3, 4]
    (row,) = false_positive_scan({"x": [signature_fp(1)]}, [joined]).rows
    assert row.foreign_events == (1, 3)
    with pytest.raises(ValueError):
        merge_datasets([ds, target_dataset("short", 3, set())])


# -- synthetic datasets ------------------------------------------------------------------------

def test_synth_is_deterministic_and_round_trips(tmp_path):
    plan = random_plan(random.Random(2), 3, 4)
    a, ta = generate_planted_dataset(plan, seed=7, name="p")
    b, tb = generate_planted_dataset(plan, seed=7, name="p")
    assert a == b and ta == tb
    c, _ = generate_planted_dataset(plan, seed=8, name="p")
    assert c != a
    write_dataset(a, tmp_path / "p")
    assert load_dataset(tmp_path / "p") == a


def test_synth_plan_errors():
    sig = PlantedSequence("api.example.com", tuple(SIGNATURE))
    with pytest.raises(PlanError, match="identical"):
        generate_planted_dataset(PlantPlan(3, (EventPlan(1, (sig,), (NoiseSequence(sig.domain, sig.packets, (1,)),)),)), 1)
    with pytest.raises(PlanError, match="contained"):
        generate_planted_dataset(PlantPlan(3, (EventPlan(1, (sig, PlantedSequence("api.example.com", tuple(SIGNATURE[:1])))),)), 1)
    with pytest.raises(PlanError):
        generate_planted_dataset(PlantPlan(1, (EventPlan(1, (sig,)),)), 1)
    with pytest.raises(PlanError, match="malformed"):
        generate_planted_dataset({"T": 3}, 1)


def test_event_without_plants_has_empty_fingerprint():
    ds, truth = generate_planted_dataset(PlantPlan(5, (EventPlan(1, ()),)), seed=3)
    assert truth[1].is_empty
    assert prevalence(ds, RefinementConfig.strict(SDBF, 5, n_min=1)).rows[0].fingerprintable == 0


# -- reports --------------------------------------------------------------------------------------

def test_report_files(tmp_path):
    ds, _ = generate_planted_dataset(random_plan(random.Random(3), 3, 3), seed=3, name="p")
    rows = prevalence(ds, [RefinementConfig.strict(SDBF, 3, n_min=2),
                           RefinementConfig.strict(Technique.parse("ebf"), 3)]).rows
    write_prevalence_csv(rows, tmp_path / "prev.csv")
    plot_prevalence(rows, tmp_path / "prev.png")
    header = (tmp_path / "prev.csv").read_text().splitlines()[0]
    assert header.startswith("dataset,technique,fingerprintable,total,percentage")
    rep = false_positive_scan({"home": [signature_fp(1)]}, [target_dataset("home", 4, {2})])
    write_fp_csv(rep, tmp_path / "fp.csv")
    write_fp_cells_csv(rep, tmp_path / "cells.csv")
    plot_fp_bins(rep, tmp_path / "fp.png")
    assert (tmp_path / "cells.csv").read_text().splitlines() == [
        "source,target,technique,0,1-10,11-100,101+", "home,home,sdbf,0,1,0,0"]
    for png in ("prev.png", "fp.png"):
        assert (tmp_path / png).read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"
    first = (tmp_path / "fp.png").read_bytes()
    plot_fp_bins(rep, tmp_path / "fp.png")
    assert (tmp_path / "fp.png").read_bytes() == first
