import numpy as np
import pytest
import scipy.io.wavfile
from hypothesis import given
from hypothesis import strategies as st

from conftest import sine
from vcrobust.signal_io import Waveform, frame_signal, hann, istft, read_wav, stft, write_wav


def test_waveform_rejects_nonfinite_and_2d():
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, np.nan]))
    with pytest.raises(ValueError):
        Waveform(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        Waveform(np.zeros(3), 0)


def test_read_pcm16_silence(tmp_path):
    p = tmp_path / "s.wav"
    scipy.io.wavfile.write(p, 16000, np.zeros(16000, dtype=np.int16))
    w = read_wav(p)
    assert len(w) == 16000 and w.sample_rate == 16000 and not np.any(w.samples)


def test_read_full_scale_square(tmp_path):
    p = tmp_path / "sq.wav"
    x = np.tile(np.array([32767, -32767], dtype=np.int16), 100)
    scipy.io.wavfile.write(p, 16000, x)
    w = read_wav(p)
    assert np.array_equal(w.samples, np.tile([32767 / 32768, -32767 / 32768], 100))


def test_read_float32_and_stereo_downmix(tmp_path):
    p = tmp_path / "st.wav"
    x = np.stack([np.full(50, 0.5, np.float32), np.full(50, -0.1, np.float32)], axis=1)
    scipy.io.wavfile.write(p, 22050, x)
    w = read_wav(p)
    assert w.sample_rate == 22050
    assert np.allclose(w.samples, 0.2)


def test_read_errors(tmp_path):
    bad = tmp_path / "bad.wav"
    bad.write_bytes(b"RIFFjunkjunk")
    with pytest.raises(ValueError):
        read_wav(bad)
    empty = tmp_path / "empty.wav"
    scipy.io.wavfile.write(empty, 16000, np.zeros(0, dtype=np.int16))
    with pytest.raises(ValueError):
        read_wav(empty)
    i32 = tmp_path / "i32.wav"
    scipy.io.wavfile.write(i32, 16000, np.zeros(10, dtype=np.int32))
    with pytest.raises(ValueError):
        read_wav(i32)


def test_write_empty_is_header_only(tmp_path):
    p = tmp_path / "e.wav"
    assert write_wav(Waveform(np.zeros(0)), p) == 0
    assert p.stat().st_size == 44


def test_write_clips_and_counts(tmp_path):
    p = tmp_path / "c.wav"
    n = write_wav(Waveform(np.array([1.5, 0.0, -2.0, 0.25])), p)
    assert n == 2
    _, raw = scipy.io.wavfile.read(p)
    assert raw.tolist() == [32767, 0, -32768, 8192]


def test_write_unwritable(tmp_path):
    with pytest.raises(OSError):
        write_wav(Waveform(np.zeros(4)), tmp_path / "missing" / "x.wav")


@given(st.integers(0, 2 ** 32 - 1))
def test_wav_round_trip_error_bound(tmp_path_factory, seed):
    x = np.random.default_rng(seed).uniform(-1, 1 - 2 ** -15, 500)
    p = tmp_path_factory.mktemp("rt") / "x.wav"
    write_wav(Waveform(x), p)
    assert np.max(np.abs(read_wav(p).samples - x)) <= 2 ** -15


def test_frame_signal_layout():
    x = np.arange(10.0)
    f = frame_signal(x, 4, 2)
    assert f.shape == (4, 4)
    assert f[1].tolist() == [2, 3, 4, 5]
    assert f[-1].tolist() == [6, 7, 8, 9]
    assert frame_signal(np.arange(3.0), 4, 2).shape == (0, 4)


def test_hann_is_cola():
    w = hann(512)
    total = w[:256] + w[256:]
    assert np.allclose(total, 1.0)


def test_stft_sine_peak_bin():
    S = stft(sine(1000.0, 0.5), 512, 256, 512)
    mags = np.abs(S.frames[2:-2])
    assert np.all(np.argmax(mags, axis=1) == 32)
    assert S.num_bins == 257


def test_stft_zero_and_short():
    S = stft(Waveform(np.zeros(2000)))
    assert not np.any(S.frames)
    assert np.all(istft(S).samples == 0)
    short = stft(Waveform(np.ones(100)))
    assert short.num_frames == 0
    assert len(istft(short)) == 100


@pytest.mark.parametrize("args", [(512, 256, 500), (512, 256, 256), (512, 300, 512), (512, 512, 512)])
def test_stft_argument_errors(args):
    with pytest.raises(ValueError):
        stft(Waveform(np.zeros(4000)), *args)


def test_parseval():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(8000)
    S = stft(Waveform(x), 512, 256, 512)
    win = hann(512)
    frames = frame_signal(np.concatenate([np.zeros(256), x, np.zeros(256)]), 512, 256) * win
    time_energy = np.sum(frames ** 2)
    full = np.fft.fft(frames, 512, axis=1)
    freq_energy = np.sum(np.abs(full) ** 2) / 512
    assert abs(time_energy - freq_energy) / time_energy < 1e-6
    # the one-sided spectrum carries the same energy
    one = np.abs(S.frames) ** 2
    one_sided = (one[:, 0] + one[:, -1] + 2 * one[:, 1:-1].sum(axis=1)).sum() / 512
    assert abs(one_sided - time_energy) / time_energy < 1e-6
    # squared Hann averages 3/8, two frames overlap each sample
    assert abs(time_energy / np.sum(x ** 2) - 0.75) < 0.01


@given(st.integers(0, 10 ** 6), st.integers(600, 5000), st.sampled_from([(512, 256), (512, 128), (256, 64), (400, 200)]))
def test_perfect_reconstruction(seed, n, cfg):
    win, hop = cfg
    nfft = 1 << (win - 1).bit_length()
    x = np.random.default_rng(seed).uniform(-1, 1, n)
    y = istft(stft(Waveform(x), win, hop, nfft)).samples
    assert len(y) == n
    assert np.max(np.abs(y - x)) <= 1e-6


def test_istft_linearity_and_shape_check():
    x = np.random.default_rng(2).uniform(-0.4, 0.4, 3000)
    S = stft(Waveform(x))
    assert np.max(np.abs(istft(S.with_frames(2 * S.frames)).samples - 2 * x)) <= 1e-6
    with pytest.raises(ValueError):
        S.with_frames(S.frames[:, :-1])
