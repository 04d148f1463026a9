"""Smoke test for the jumpdiff_py extension module.

Build and run from the workspace root:

    cargo build -p jumpdiff-py --release --features extension-module
    cp target/release/libjumpdiff_py.so crates/py/python/jumpdiff_py.so
    python3 crates/py/python/smoke.py
"""

import tempfile

import jumpdiff_py as jd


def main():
    assert jd.schedule_length(100, 20, 0.55) == 60
    assert jd.schedule_length(73, 10, 0.37) == 54

    retain, prior, sigma = jd.NoiseSchedule().coefficients(0.5)
    assert abs(retain + prior - 1.0) < 1e-12 and 0.0 < sigma < 1.0

    corpus = jd.Corpus.generate(seed=0, num_utterances=4)
    assert len(corpus) == 4
    utt = corpus.utterance(0)
    x0 = utt["x0"]
    assert x0.frames == sum(utt["durations"])

    c = corpus.corrupt(0, t=0.5, seed=1)
    assert len(c["kept"]) == c["x_t"].frames

    out = corpus.synthesize(0, seed=2, steps=20, allocation="argmax")
    assert out["durations"] == utt["durations"], out["durations"]
    assert out["lengths"][-1] == x0.frames

    slow = corpus.synthesize(0, seed=2, steps=20, mode="udd", location="uniform", speed=0.75)
    align = jd.dtw(x0, slow["x"])
    assert 0.0 <= align["r2"] <= 1.0 and align["cost"] >= 0.0

    assert abs(jd.wasserstein1([1.0, 2.0], [2.0, 3.0]) - 1.0) < 1e-12
    assert 0.0 <= jd.silence_ratio(x0, corpus.silence_threshold) <= 1.0

    with tempfile.TemporaryDirectory() as d:
        corpus.save(d)
        again = jd.Corpus.load(d)
        assert again.utterance(3)["x0"].to_frames() == corpus.utterance(3)["x0"].to_frames()

    try:
        jd.schedule_length(10, 20, 0.5)
    except ValueError:
        pass
    else:
        raise AssertionError("expected ValueError")

    print("smoke ok")


if __name__ == "__main__":
    main()
