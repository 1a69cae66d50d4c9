import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One round of the splitmix64 finalizer on a 64-bit integer."""
    x = (x + GOLDEN_GAMMA) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def mix_words(seed: int, words) -> int:
    """Hash a seed and a sequence of (possibly negative) integers to 64 bits."""
    h = splitmix64(seed & MASK64)
    for word in words:
        h = splitmix64(h ^ (int(word) & MASK64))
    return h


def unit_float(h: int) -> float:
    # top 53 bits, as numpy does for doubles
    return (h >> 11) * (1.0 / 9007199254740992.0)


def derive_seed(master_seed: int, replica_index: int) -> int:
    return mix_words(master_seed, (replica_index,))


class RngStream:
    """
    Counter-based uniform stream for one replica.

    Philox4x64 keyed on (master_seed, replica_index): streams with distinct keys
    are independent by construction. Uniforms are drawn in chunks but handed out
    one at a time, so the stream position is just the number of uniforms
    consumed (`draws`), which is all a replay needs.
    """

    ALGORITHM = "philox4x64-10"
    CHUNK = 4096

    def __init__(self, master_seed: int, replica_index: int = 0):
        self.master_seed = master_seed & MASK64
        self.replica_index = replica_index & MASK64
        key = (self.replica_index << 64) | self.master_seed
        self.generator = np.random.Generator(np.random.Philox(key=key))
        self.draws = 0
        self._buffer = []
        self._pos = 0

    def _refill(self):
        self._buffer = self.generator.random(self.CHUNK).tolist()
        self._pos = 0

    def uniform(self) -> float:
        if self._pos >= len(self._buffer):
            self._refill()
        u = self._buffer[self._pos]
        self._pos += 1
        self.draws += 1
        return u

    def uniforms(self, count: int) -> np.ndarray:
        """The next `count` uniforms, identical to `count` calls of uniform()."""
        out = np.empty(count, dtype=np.float64)
        filled = 0
        while filled < count:
            if self._pos >= len(self._buffer):
                self._refill()
            take = min(count - filled, len(self._buffer) - self._pos)
            out[filled:filled + take] = self._buffer[self._pos:self._pos + take]
            self._pos += take
            filled += take
        self.draws += count
        return out

    def state(self) -> dict:
        return {
            "algorithm": self.ALGORITHM,
            "master_seed": self.master_seed,
            "replica_index": self.replica_index,
            "draws": self.draws,
        }

    @classmethod
    def from_state(cls, state: dict) -> "RngStream":
        """Jump to the chunk holding draw `draws`, then skip within it."""
        stream = cls(state["master_seed"], state["replica_index"])
        chunks, rest = divmod(state["draws"], cls.CHUNK)
        # one 64-bit output per double; the Philox counter steps once per four outputs
        stream.generator.bit_generator.advance(chunks * cls.CHUNK // 4)
        if rest:
            stream._refill()
            stream._pos = rest
        stream.draws = state["draws"]
        return stream

    def clone(self) -> "RngStream":
        return RngStream.from_state(self.state())


def replica_streams(master_seed: int, replicas: int, start: int = 0) -> list[RngStream]:
    return [RngStream(master_seed, index) for index in range(start, start + replicas)]
