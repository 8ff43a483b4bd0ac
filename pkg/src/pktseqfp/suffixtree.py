"""Generalized suffix tree over sequences of hashable tokens.

Built with Ukkonen's online algorithm over the concatenation of all added
sequences, each closed by its own unique terminator.  Since no query contains
a terminator, a query can only match inside a single member sequence.
"""

from __future__ import annotations

from typing import Hashable, Iterable, Sequence


class _Terminator:
    __slots__ = ("n",)

    def __init__(self, n):
        self.n = n

    def __repr__(self):
        return "$%d" % self.n


class _Node:
    __slots__ = ("start", "end", "children", "link")

    def __init__(self, start: int, end, link=None):
        self.start = start
        self.end = end  # None marks a leaf whose edge runs to the end of the text
        self.children: dict = {}
        self.link = link


class GeneralizedSuffixTree:
    def __init__(self, sequences: Iterable[Sequence[Hashable]] = ()):
        self.text: list = []
        self.root = _Node(-1, -1)
        self.root.link = self.root
        self._active_node = self.root
        self._active_edge = 0
        self._active_length = 0
        self._remainder = 0
        self.count = 0
        for seq in sequences:
            self.add(seq)

    def __len__(self):
        return self.count

    def _edge_length(self, node: _Node, pos: int) -> int:
        end = pos + 1 if node.end is None else node.end
        return end - node.start

    def add(self, seq: Sequence[Hashable]) -> None:
        """Insert one sequence; earlier sequences stay queryable."""
        for token in seq:
            self._extend(token)
        self._extend(_Terminator(self.count))
        self.count += 1

    def _extend(self, token) -> None:
        text = self.text
        text.append(token)
        pos = len(text) - 1
        root = self.root
        self._remainder += 1
        pending = None  # internal node created this phase, awaiting its suffix link
        while self._remainder > 0:
            if self._active_length == 0:
                self._active_edge = pos
            first = text[self._active_edge]
            child = self._active_node.children.get(first)
            if child is None:
                self._active_node.children[first] = _Node(pos, None)
                if pending is not None:
                    pending.link = self._active_node
                    pending = None
            else:
                edge_len = self._edge_length(child, pos)
                if self._active_length >= edge_len:
                    # walk down
                    self._active_edge += edge_len
                    self._active_length -= edge_len
                    self._active_node = child
                    continue
                if text[child.start + self._active_length] == token:
                    if pending is not None and self._active_node is not root:
                        pending.link = self._active_node
                        pending = None
                    self._active_length += 1
                    break
                split = _Node(child.start, child.start + self._active_length, root)
                self._active_node.children[first] = split
                split.children[token] = _Node(pos, None)
                child.start += self._active_length
                split.children[text[child.start]] = child
                if pending is not None:
                    pending.link = split
                pending = split
            self._remainder -= 1
            if self._active_node is root and self._active_length > 0:
                self._active_length -= 1
                self._active_edge = pos - self._remainder + 1
            elif self._active_node is not root:
                self._active_node = self._active_node.link or root

    def contains(self, query: Sequence[Hashable]) -> bool:
        """True iff ``query`` is a contiguous run inside some added sequence."""
        text = self.text
        end_of_text = len(text)
        node = self.root
        i = 0
        n = len(query)
        while i < n:
            child = node.children.get(query[i])
            if child is None:
                return False
            end = end_of_text if child.end is None else child.end
            j = child.start
            while j < end and i < n:
                if text[j] != query[i]:
                    return False
                i += 1
                j += 1
            node = child
        return True


def _is_subsequence_run(query: tuple, seq: tuple) -> bool:
    n = len(query)
    return any(seq[i:i + n] == query for i in range(len(seq) - n + 1))


class SequenceIndex:
    """Token sequences of every accepted cluster, one suffix tree per cluster."""

    def __init__(self):
        self.trees: list = []

    def add_cluster(self, token_sequences: Iterable[Sequence[Hashable]]) -> None:
        self.trees.append(GeneralizedSuffixTree(token_sequences))

    def contains(self, tokens: Sequence[Hashable]) -> bool:
        return any(tree.contains(tokens) for tree in self.trees)


class LinearSequenceIndex:
    """Same contract as :class:`SequenceIndex`, answered by brute-force scanning."""

    def __init__(self):
        self.clusters: list = []

    def add_cluster(self, token_sequences: Iterable[Sequence[Hashable]]) -> None:
        self.clusters.append([tuple(s) for s in token_sequences])

    def contains(self, tokens: Sequence[Hashable]) -> bool:
        query = tuple(tokens)
        return any(_is_subsequence_run(query, seq) for cluster in self.clusters for seq in cluster)
