"""Manifest handling, splits, batch assembly, and synthetic corpus tests."""

import numpy as np
import pytest

from respeak.audio import read_wav
from respeak.corpus import (
    Manifest,
    Utterance,
    load_manifest,
    make_batches,
    split,
    stable_seed,
    synth_corpus,
    write_manifest,
)
from respeak.errors import ManifestError
from respeak.spectro import SpectroImage, write_spim


def test_empty_manifest(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text("")
    assert len(load_manifest(path)) == 0


def test_single_line_manifest(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"path":"a.wav","domain":"A","transcript":"on"}\n')
    m = load_manifest(path)
    assert len(m) == 1
    u = m.utterances[0]
    assert u.id == "a.wav"
    assert u.domain == "A"
    assert u.transcript == ("on",)
    assert u.path == tmp_path / "a.wav"


def test_malformed_json_cites_line(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"path":"a.wav","domain":"A","transcript":"x"}\n{broken\n')
    with pytest.raises(ManifestError) as err:
        load_manifest(path)
    assert ":2:" in str(err.value)


def test_unknown_domain_rejected(tmp_path):
    path = tmp_path / "m.jsonl"
    path.write_text('{"path":"a.wav","domain":"C","transcript":"x"}\n')
    with pytest.raises(ManifestError):
        load_manifest(path)


def test_duplicate_id_cites_both_lines(tmp_path):
    path = tmp_path / "m.jsonl"
    rows = [
        '{"id":"u1","path":"a.wav","domain":"A","transcript":"x"}',
        '{"id":"u2","path":"b.wav","domain":"A","transcript":"x"}',
        '{"id":"u1","path":"c.wav","domain":"B","transcript":"x"}',
    ]
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(ManifestError) as err:
        load_manifest(path)
    msg = str(err.value)
    assert "u1" in msg and "1" in msg and "3" in msg


def test_manifest_roundtrip(tmp_path):
    m = Manifest([
        Utterance("a", tmp_path / "a.wav", "A", ("on",)),
        Utterance("b", tmp_path / "b.wav", "B", ("turn", "off")),
    ])
    write_manifest(m, tmp_path / "m.jsonl")
    back = load_manifest(tmp_path / "m.jsonl")
    assert [u.id for u in back.utterances] == ["a", "b"]
    assert back.utterances[1].transcript == ("turn", "off")


def make_manifest(n_a, n_b):
    utts = [Utterance(f"A{i}", f"A{i}.wav", "A", ("x",)) for i in range(n_a)]
    utts += [Utterance(f"B{i}", f"B{i}.wav", "B", ("x",)) for i in range(n_b)]
    return Manifest(utts)


def test_split_arithmetic():
    train, test = split(make_manifest(10, 10), 0.2, seed=0)
    assert len(train.by_domain("A")) == 8 and len(train.by_domain("B")) == 8
    assert len(test.by_domain("A")) == 2 and len(test.by_domain("B")) == 2
    assert train.split == "train" and test.split == "test"


def test_split_deterministic():
    m = make_manifest(17, 9)
    t1, s1 = split(m, 0.3, seed=5)
    t2, s2 = split(m, 0.3, seed=5)
    assert [u.id for u in t1.utterances] == [u.id for u in t2.utterances]
    assert [u.id for u in s1.utterances] == [u.id for u in s2.utterances]
    t3, _ = split(m, 0.3, seed=6)
    assert [u.id for u in t3.utterances] != [u.id for u in t1.utterances]


def test_split_union_and_disjointness_property():
    rng = np.random.default_rng(9)
    for trial in range(20):
        n_a = int(rng.integers(2, 30))
        n_b = int(rng.integers(2, 30))
        frac = float(rng.uniform(0.05, 0.9))
        m = make_manifest(n_a, n_b)
        train, test = split(m, frac, seed=trial)
        train_ids = {u.id for u in train.utterances}
        test_ids = {u.id for u in test.utterances}
        assert train_ids.isdisjoint(test_ids)
        assert train_ids | test_ids == {u.id for u in m.utterances}
        for dom in "AB":
            assert len(train.by_domain(dom)) >= 1
            assert len(test.by_domain(dom)) >= 1


def test_split_rejects_tiny_domain():
    with pytest.raises(ManifestError):
        split(make_manifest(1, 10), 0.5, seed=0)


def prepared_dir(tmp_path, manifest, size=16):
    rng = np.random.default_rng(0)
    for u in manifest.utterances:
        img = SpectroImage(rng.uniform(-1, 1, (size, size)).astype(np.float32), -80.0, 0.0, size)
        write_spim(img, tmp_path / f"{u.id}.spim")
    return tmp_path


def test_make_batches_shapes_and_determinism(tmp_path):
    m = make_manifest(6, 5)
    prepared = prepared_dir(tmp_path, m)
    a1, b1 = make_batches(m, prepared, batch_size=4, seed=3, step=7)
    a2, b2 = make_batches(m, prepared, batch_size=4, seed=3, step=7)
    assert a1.shape == (4, 16, 16, 1) and b1.shape == (4, 16, 16, 1)
    assert np.array_equal(a1, a2) and np.array_equal(b1, b2)
    a3, _ = make_batches(m, prepared, batch_size=4, seed=3, step=8)
    assert not np.array_equal(a1, a3)


def test_make_batches_coverage(tmp_path):
    # every utterance sampled at least once within 10*N/batch steps
    m = make_manifest(12, 12)
    prepared = prepared_dir(tmp_path, m)
    images = {}
    for u in m.utterances:
        from respeak.spectro import read_spim
        images[u.id] = read_spim(prepared / f"{u.id}.spim").pixels
    steps = 10 * 12 // 4
    seen = set()
    for step in range(1, steps + 1):
        a, b = make_batches(m, prepared, batch_size=4, seed=1, step=step)
        for batch, dom in ((a, "A"), (b, "B")):
            for img in batch[:, :, :, 0]:
                for uid, pix in images.items():
                    if uid.startswith(dom) and np.array_equal(img, pix):
                        seen.add(uid)
    assert len(seen) == 24


def test_make_batches_missing_file_names_utterance(tmp_path):
    m = make_manifest(3, 3)
    prepared = prepared_dir(tmp_path, m)
    (prepared / "A1.spim").unlink()
    with pytest.raises(ManifestError) as err:
        # draw enough batches that A1 is certainly requested
        for step in range(50):
            make_batches(m, prepared, batch_size=4, seed=0, step=step)
    assert "A1" in str(err.value)


def test_stable_seed_deterministic():
    assert stable_seed("pad", "u1") == stable_seed("pad", "u1")
    assert stable_seed("pad", "u1") != stable_seed("pad", "u2")


def test_synth_corpus_structure(tmp_path):
    m = synth_corpus(6, 3, seed=11, out_dir=tmp_path)
    assert len(m) == 12
    assert len(m.by_domain("A")) == 6 and len(m.by_domain("B")) == 6
    assert m.vocabulary == ["w00", "w01", "w02"]
    # every token appears in both domains
    for dom in "AB":
        tokens = {u.transcript[0] for u in m.by_domain(dom)}
        assert tokens == {"w00", "w01", "w02"}
    # wavs exist, are mono 16 kHz, and loadable
    for u in m.utterances:
        w = read_wav(u.path)
        assert w.sample_rate == 16000
        assert len(w) > 8000
    # manifest written alongside and loads back
    back = load_manifest(tmp_path / "manifest.jsonl")
    assert {u.id for u in back.utterances} == {u.id for u in m.utterances}


def test_synth_corpus_deterministic(tmp_path):
    m1 = synth_corpus(2, 2, seed=5, out_dir=tmp_path / "c1")
    m2 = synth_corpus(2, 2, seed=5, out_dir=tmp_path / "c2")
    for u1, u2 in zip(m1.utterances, m2.utterances):
        assert np.array_equal(read_wav(u1.path).samples, read_wav(u2.path).samples)


def test_synth_corpus_domains_stretched(tmp_path):
    m = synth_corpus(4, 2, seed=3, out_dir=tmp_path)
    mean_a = np.mean([len(read_wav(u.path)) for u in m.by_domain("A")])
    mean_b = np.mean([len(read_wav(u.path)) for u in m.by_domain("B")])
    assert mean_a > 1.1 * mean_b  # 20% stretch on average


def test_synth_corpus_rejects_tiny():
    with pytest.raises(ManifestError):
        synth_corpus(1, 5, 0, "/tmp/never")
    with pytest.raises(ManifestError):
        synth_corpus(5, 1, 0, "/tmp/never")


def test_synth_domains_separable_by_mean_spectrum(tmp_path):
    # a trivial nearest-domain-mean classifier on time-averaged dB spectra
    # must separate the two domains almost perfectly
    from respeak.config import Config
    from respeak.pipeline import image_from_waveform

    m = synth_corpus(14, 3, seed=21, out_dir=tmp_path)
    cfg = Config()

    def mean_spectrum(u):
        img = image_from_waveform(read_wav(u.path), cfg, noise_seed=0)
        return img.pixels[:, : img.n_speech_frames].mean(axis=1)

    feats = {u.id: mean_spectrum(u) for u in m.utterances}
    fit_a = [feats[u.id] for u in m.by_domain("A")[:7]]
    fit_b = [feats[u.id] for u in m.by_domain("B")[:7]]
    held = m.by_domain("A")[7:] + m.by_domain("B")[7:]
    center_a = np.mean(fit_a, axis=0)
    center_b = np.mean(fit_b, axis=0)
    correct = sum(
        ("A" if np.linalg.norm(feats[u.id] - center_a) < np.linalg.norm(feats[u.id] - center_b)
         else "B") == u.domain
        for u in held
    )
    assert correct / len(held) >= 0.95
