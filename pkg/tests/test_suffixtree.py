from hypothesis import given, settings
from hypothesis import strategies as st

from pktseqfp.suffixtree import GeneralizedSuffixTree, LinearSequenceIndex, SequenceIndex


def runs(seq):
    return {tuple(seq[i:j]) for i in range(len(seq)) for j in range(i + 1, len(seq) + 1)}


def test_basic_containment():
    tree = GeneralizedSuffixTree(["banana", "ananas"])
    for q in ["ban", "nana", "anas", "a", "banana", "ananas"]:
        assert tree.contains(q)
    for q in ["bananas", "nab", "x", "anana s"]:
        assert not tree.contains(q)


def test_no_match_across_sequence_boundaries():
    tree = GeneralizedSuffixTree([(1, 2), (3, 4)])
    assert tree.contains((2,)) and tree.contains((3,))
    assert not tree.contains((2, 3))


def test_tuple_tokens():
    toks = [("upstream", 583), ("downstream", 1514), ("upstream", 99)]
    tree = GeneralizedSuffixTree([toks])
    assert tree.contains(toks[1:])
    assert not tree.contains([("upstream", 583), ("upstream", 99)])


alphabet = st.sampled_from("abc")


@settings(max_examples=300, deadline=None)
@given(seqs=st.lists(st.lists(alphabet, min_size=1, max_size=12), min_size=1, max_size=5),
       query=st.lists(alphabet, min_size=1, max_size=6))
def test_tree_agrees_with_enumeration(seqs, query):
    tree = GeneralizedSuffixTree(seqs)
    expected = any(tuple(query) in runs(s) for s in seqs)
    assert tree.contains(query) == expected
    for s in seqs:
        for r in runs(s):
            assert tree.contains(r)


@settings(max_examples=200, deadline=None)
@given(clusters=st.lists(st.lists(st.lists(alphabet, min_size=1, max_size=8), min_size=1, max_size=3), max_size=4),
       queries=st.lists(st.lists(alphabet, min_size=1, max_size=5), min_size=1, max_size=10))
def test_index_matches_linear_fallback(clusters, queries):
    fast, slow = SequenceIndex(), LinearSequenceIndex()
    for c in clusters:
        fast.add_cluster(c)
        slow.add_cluster(c)
    for q in queries:
        assert fast.contains(q) == slow.contains(q)
