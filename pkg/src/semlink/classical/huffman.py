"""Word-level Huffman coding built from corpus frequencies.

The codebook covers every corpus word plus an end-of-sentence marker so the
decoder knows where a sentence stops inside a padded channel block.  Codes
are canonical-by-construction from a deterministic heap (ties broken by
insertion order), so the same corpus always yields the same codebook.
"""

from __future__ import annotations

import collections
import heapq

import numpy as np

EOS_WORD = "<eos>"


class HuffmanError(ValueError):
    pass


class HuffmanCodebook:
    def __init__(self, frequencies):
        """frequencies: word -> weight; must already include EOS_WORD if the
        codebook will frame sentences (from_corpus takes care of that)."""
        freqs = dict(frequencies)
        if not freqs:
            raise HuffmanError("empty frequency table")
        heap = []
        for order, (word, count) in enumerate(sorted(freqs.items())):
            heapq.heappush(heap, (count, order, word))
        next_id = len(freqs)
        trees = {}
        while len(heap) > 1:
            c1, o1, t1 = heapq.heappop(heap)
            c2, o2, t2 = heapq.heappop(heap)
            node = (trees.pop(t1, t1), trees.pop(t2, t2))
            trees[next_id] = node
            heapq.heappush(heap, (c1 + c2, next_id, next_id))
            next_id += 1
        _, _, root = heap[0]
        root = trees.pop(root, root)

        self.codes: dict[str, str] = {}
        if isinstance(root, str):
            self.codes[root] = "0"
        else:
            self._walk(root, "")
        self.decode_trie = root

    def _walk(self, node, path):
        if isinstance(node, str):
            self.codes[node] = path
            return
        self._walk(node[0], path + "0")
        self._walk(node[1], path + "1")

    @classmethod
    def from_corpus(cls, sentences):
        counts = collections.Counter()
        for s in sentences:
            counts.update(s.lower().split())
            counts[EOS_WORD] += 1
        del counts[EOS_WORD]
        counts[EOS_WORD] = len(sentences)
        return cls(counts)

    def expected_length(self, frequencies):
        total = sum(frequencies.values())
        return sum(cnt * len(self.codes[w])
                   for w, cnt in frequencies.items()) / total

    def encode(self, words):
        """Word sequence -> bit array (EOS appended)."""
        out = []
        for w in list(words) + [EOS_WORD]:
            code = self.codes.get(w)
            if code is None:
                raise HuffmanError(f"word {w!r} not in codebook")
            out.append(code)
        return np.frombuffer("".join(out).encode("ascii"), dtype=np.uint8) - ord("0")

    def decode(self, bits):
        """Bit array -> (words, ok flag).  ok is False when no EOS is found
        or an undecodable path is hit (feeds the CRC/NAK logic)."""
        node = self.decode_trie
        if isinstance(node, str):
            return [], False
        words = []
        current = node
        for b in np.asarray(bits).reshape(-1):
            current = current[int(b)]
            if isinstance(current, str):
                if current == EOS_WORD:
                    return words, True
                words.append(current)
                current = node
        return words, False
