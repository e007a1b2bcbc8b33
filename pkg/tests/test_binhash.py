import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nbnnplace import BinaryCode, ValidationError, train_projection
from nbnnplace import binhash as bh


def popcount_loop(a, b, bits):
    """Bit-by-bit reference for the vectorized population count."""
    x = (int(a) ^ int(b)) & ((1 << bits) - 1)
    return bin(x).count("1")


def words_to_int(words):
    value = 0
    for i, w in enumerate(np.asarray(words, dtype=np.uint64)):
        value |= int(w) << (64 * i)
    return value


# ---------------------------------------------------------------- code plumbing


def test_words_for_bits():
    assert bh.words_for_bits(1) == 1
    assert bh.words_for_bits(64) == 1
    assert bh.words_for_bits(65) == 2
    assert bh.words_for_bits(128) == 2
    with pytest.raises(ValidationError):
        bh.words_for_bits(0)


def test_code_int_round_trip():
    rng = np.random.default_rng(0)
    for bits in (1, 7, 20, 63, 64, 65, 128):
        for _ in range(20):
            value = int(rng.integers(0, 2 ** min(bits, 62)))
            code = bh.code_from_int(value, bits)
            assert int(code) == value
            assert code.bits == bits


def test_code_from_int_range_checked():
    with pytest.raises(ValidationError):
        bh.code_from_int(16, 4)
    with pytest.raises(ValidationError):
        bh.code_from_int(-1, 4)


# ---------------------------------------------------------------- projection training


def test_projection_deterministic():
    a = train_projection(99, 16, 20)
    b = train_projection(99, 16, 20)
    np.testing.assert_array_equal(a.rows, b.rows)
    np.testing.assert_array_equal(a.thresholds, b.thresholds)
    c = train_projection(100, 16, 20)
    assert not np.array_equal(a.rows, c.rows)


def test_projection_rows_unit_norm():
    model = train_projection(1, 32, 24)
    np.testing.assert_allclose(np.linalg.norm(model.rows, axis=1), 1.0, atol=1e-12)


def test_median_thresholds_balance_bits():
    """Each bit splits the training set as evenly as an odd/even count allows."""
    rng = np.random.default_rng(2)
    X = rng.normal(size=(501, 16)) + 3.0  # offset so zero thresholds would be useless
    model = train_projection(7, 16, 12, training=X)
    codes = bh.encode_many(model, X)
    n = X.shape[0]
    for bit in range(12):
        word, off = divmod(bit, 64)
        ones = int(((codes[:, word] >> np.uint64(off)) & np.uint64(1)).sum())
        assert min(ones, n - ones) >= n // 2 - 1


def test_untrained_thresholds_zero():
    model = train_projection(3, 8, 6)
    np.testing.assert_array_equal(model.thresholds, np.zeros(6))


def test_seed_range_checked():
    with pytest.raises(ValidationError):
        train_projection(-1, 8, 6)
    with pytest.raises(ValidationError):
        train_projection(2**63, 8, 6)


# ---------------------------------------------------------------- encode / distance


def test_encode_matches_definition():
    rng = np.random.default_rng(4)
    model = train_projection(11, 10, 20, training=rng.normal(size=(200, 10)))
    for _ in range(50):
        v = rng.normal(size=10)
        code = bh.encode(model, v)
        expected = 0
        for i in range(20):
            if model.rows[i] @ v > model.thresholds[i]:
                expected |= 1 << i
        assert int(code) == expected


def test_hamming_matches_bit_loop():
    rng = np.random.default_rng(5)
    for bits in (12, 16, 20, 128):
        n_words = bh.words_for_bits(bits)
        for _ in range(250):
            wa = rng.integers(0, 2**64, size=n_words, dtype=np.uint64)
            wb = rng.integers(0, 2**64, size=n_words, dtype=np.uint64)
            # mask tail bits the way the encoder guarantees
            tail = bits % 64
            if tail:
                mask = np.uint64((1 << tail) - 1)
                wa[-1] &= mask
                wb[-1] &= mask
            a = BinaryCode(bits=bits, words=wa)
            b = BinaryCode(bits=bits, words=wb)
            assert bh.hamming(a, b) == popcount_loop(words_to_int(wa), words_to_int(wb), bits)


def test_hamming_width_mismatch():
    a = bh.code_from_int(3, 8)
    b = bh.code_from_int(3, 9)
    with pytest.raises(ValidationError):
        bh.hamming(a, b)


@settings(max_examples=100, deadline=None)
@given(
    st.integers(min_value=0, max_value=2**20 - 1),
    st.integers(min_value=0, max_value=2**20 - 1),
    st.integers(min_value=0, max_value=2**20 - 1),
)
def test_hamming_metric_axioms(x, y, z):
    a, b, c = (bh.code_from_int(v, 20) for v in (x, y, z))
    dab = bh.hamming(a, b)
    assert dab == bh.hamming(b, a)
    assert dab == 0 if x == y else dab > 0
    assert dab <= bh.hamming(a, c) + bh.hamming(c, b)


def test_hamming_many_agrees_with_scalar():
    rng = np.random.default_rng(6)
    model = train_projection(8, 12, 20)
    codes = bh.encode_many(model, rng.normal(size=(100, 12)))
    q = bh.encode(model, rng.normal(size=12))
    dists = bh.hamming_many(q.words, codes)
    for i in range(100):
        assert dists[i] == bh.hamming(q, BinaryCode(bits=20, words=codes[i]))


def test_hamming_table_pairwise():
    rng = np.random.default_rng(7)
    model = train_projection(9, 12, 128)
    a = bh.encode_many(model, rng.normal(size=(13, 12)))
    b = bh.encode_many(model, rng.normal(size=(7, 12)))
    table = bh.hamming_table(a, b)
    assert table.shape == (13, 7)
    for i in range(13):
        for j in range(7):
            assert table[i, j] == bh.hamming(
                BinaryCode(128, a[i]), BinaryCode(128, b[j])
            )


def test_complement_is_max_distance():
    rng = np.random.default_rng(8)
    for bits in (5, 20, 64, 100):
        value = int(rng.integers(0, 2 ** min(bits, 62)))
        code = bh.code_from_int(value, bits)
        comp = bh.complement(code)
        assert bh.hamming(code, comp) == bits
        assert int(bh.complement(comp)) == value


def test_sign_flip_input_gives_complement():
    """Negating a vector flips every zero-threshold bit."""
    rng = np.random.default_rng(9)
    model = train_projection(10, 16, 20)  # zero thresholds
    for _ in range(20):
        v = rng.normal(size=16)
        code = bh.encode(model, v)
        flipped = bh.encode(model, -v)
        # ties at exactly zero projection are measure-zero for Gaussian draws
        assert bh.hamming(code, flipped) == 20


def test_hamming_tracks_angle():
    """Hamming distance grows linearly with the angle between inputs."""
    rng = np.random.default_rng(10)
    model = train_projection(13, 24, 128)
    angles = []
    dists = []
    for _ in range(300):
        u = rng.normal(size=24)
        u /= np.linalg.norm(u)
        w = rng.normal(size=24)
        w -= (w @ u) * u
        w /= np.linalg.norm(w)
        theta = float(rng.uniform(0.0, np.pi))
        v = np.cos(theta) * u + np.sin(theta) * w
        angles.append(theta)
        dists.append(bh.hamming(bh.encode(model, u), bh.encode(model, v)))
    r = np.corrcoef(angles, dists)[0, 1]
    assert r > 0.9
    # mean normalized distance of near-orthogonal pairs sits near one half
    mask = np.abs(np.asarray(angles) - np.pi / 2) < 0.15
    assert np.mean(np.asarray(dists)[mask]) / 128 == pytest.approx(0.5, abs=0.05)


# ---------------------------------------------------------------- serialization


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(11)
    model = train_projection(55, 16, 20, training=rng.normal(size=(100, 16)))
    blob = bh.to_bytes(model)
    back = bh.from_bytes(blob)
    assert back.seed == model.seed
    np.testing.assert_array_equal(back.rows, model.rows)
    np.testing.assert_array_equal(back.thresholds, model.thresholds)
    assert back.digest() == model.digest()
    assert bh.to_bytes(back) == blob

    path = tmp_path / "proj.nbbp"
    bh.save_model(model, path)
    assert bh.load_model(path).digest() == model.digest()


def test_from_bytes_rejects_corruption():
    model = train_projection(1, 4, 6)
    blob = bh.to_bytes(model)
    with pytest.raises(Exception):
        bh.from_bytes(blob[:10])
    bad = b"WRNG" + blob[4:]
    with pytest.raises(Exception):
        bh.from_bytes(bad)
