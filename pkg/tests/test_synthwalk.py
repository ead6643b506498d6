"""Walker generator, background subtraction, and corpus layout tests."""

import math

import numpy as np
import pytest

from gaitflow.errors import DataError
from gaitflow.optflow import Frame, farneback_flow, load_frame_dir
from gaitflow.posepatch import REQUIRED_JOINTS, read_keypoints
from gaitflow.rng import substream
from gaitflow.synthwalk import (WalkerIdentity, bbox_from_mask, generate,
                                load_mask, read_manifest, sample_identities,
                                subtract_background, video_dirs, write_corpus)


def make_identity(freq=0.0625, amp=6.0, sway=1.0, height=80.0, speed=0.3,
                  leg=0.0, arm=0.0, torso=0.0):
    return WalkerIdentity(stride_freq=freq, limb_amp=amp,
                          phases={"leg": leg, "arm": arm, "torso": torso},
                          torso_sway=sway, height=height, speed=speed)


class TestGenerate:
    def test_deterministic_given_seed(self):
        ident = make_identity()
        a = generate(ident, "normal", 32, (64, 96), substream(5, "vid"))
        b = generate(ident, "normal", 32, (64, 96), substream(5, "vid"))
        for fa, fb in zip(a.frames, b.frames):
            assert np.array_equal(fa.pixels, fb.pixels)
        for ma, mb in zip(a.masks, b.masks):
            assert np.array_equal(ma, mb)
        c = generate(ident, "normal", 32, (64, 96), substream(6, "vid"))
        assert any(not np.array_equal(x.pixels, y.pixels)
                   for x, y in zip(a.frames, c.frames))

    def test_static_figure_zero_flow(self):
        ident = make_identity(amp=0.0, sway=0.0, speed=0.0)
        vid = generate(ident, "normal", 32, (64, 96), substream(1, "static"))
        assert np.array_equal(vid.frames[0].pixels, vid.frames[20].pixels)
        fm = farneback_flow(vid.frames[0], vid.frames[1])
        assert np.abs(fm.u[10:-10, 10:-10]).max() < 1e-3

    def test_foot_frequency_spectral_ratio(self):
        # frequencies on exact FFT bins: 4/128 and 8/128 cycles per frame
        n = 128

        def peak_bin(freq):
            vid = generate(make_identity(freq=freq, speed=0.0), "normal", n,
                           (64, 96), substream(2, "spect"))
            ys = np.array([vid.keypoints[t].joints["left_foot"][1]
                           for t in range(n)])
            spectrum = np.abs(np.fft.rfft(ys - ys.mean()))
            return int(np.argmax(spectrum[1:])) + 1

        assert peak_bin(8.0 / n) == 2 * peak_bin(4.0 / n)

    def test_streams_consistent_lengths(self):
        vid = generate(make_identity(), "perturbed-a", 40, (64, 96),
                       substream(3, "len"))
        assert len(vid.frames) == len(vid.masks) == len(vid.keypoints) == 40

    def test_keypoints_inside_frame_and_on_figure(self):
        vid = generate(make_identity(), "normal", 32, (64, 96), substream(4, "kp"))
        for t, kp in vid.keypoints.items():
            for name, (x, y) in kp.joints.items():
                assert 0 <= x < 64 and 0 <= y < 96
            # the renderer consumed these joints, so limbs cover them
            for name in ("head", "left_foot", "right_foot", "left_hand"):
                x, y = kp.joints[name]
                assert vid.masks[t][int(round(y)), int(round(x))]

    def test_fast_walker_wraps_without_truncation(self):
        ident = make_identity(speed=2.0)
        vid = generate(ident, "normal", 40, (64, 96), substream(7, "wrap"))
        for t, mask in enumerate(vid.masks):
            assert mask.sum() > 200, f"figure truncated at frame {t}"
            for x, y in vid.keypoints[t].joints.values():
                assert 0 <= x < 64

    def test_bad_inputs_rejected(self):
        with pytest.raises(DataError, match="condition"):
            generate(make_identity(), "running", 32, (64, 96), substream(0, "x"))
        with pytest.raises(DataError, match="32"):
            generate(make_identity(), "normal", 16, (64, 96), substream(0, "x"))
        with pytest.raises(DataError, match="tall"):
            generate(make_identity(height=95.0), "normal", 32, (64, 96),
                     substream(0, "x"))
        with pytest.raises(DataError, match="frequency"):
            make_identity(freq=0.5)
        with pytest.raises(DataError, match="torso"):
            WalkerIdentity(stride_freq=0.1, limb_amp=5.0,
                           phases={"leg": 0.0, "arm": 0.0},
                           torso_sway=1.0, height=80.0, speed=0.3)


class TestIdentitySampling:
    def test_identities_differ_in_every_field(self):
        idents = sample_identities(12, substream(9, "ids"))
        for i in range(len(idents)):
            for j in range(i + 1, len(idents)):
                a, b = idents[i], idents[j]
                assert a.stride_freq != b.stride_freq
                assert a.limb_amp != b.limb_amp
                assert a.height != b.height
                assert a.speed != b.speed

    def test_parameters_within_declared_ranges(self):
        for ident in sample_identities(20, substream(10, "ids")):
            assert 0.01 < ident.stride_freq < 0.2
            assert ident.limb_amp > 0 and ident.torso_sway > 0
            assert ident.height <= 86.0 and ident.speed <= 0.5


class TestBackgroundSubtraction:
    def test_bbox_single_pixel(self):
        mask = np.zeros((20, 20), dtype=bool)
        mask[9, 7] = True
        assert bbox_from_mask(mask).box == (7.0, 9.0, 1.0, 1.0)

    def test_bbox_full_frame(self):
        assert bbox_from_mask(np.ones((12, 16), bool)).box == (0.0, 0.0, 16.0, 12.0)

    def test_bbox_matches_scan_oracle(self):
        rng = substream(11, "blob")
        mask = np.zeros((40, 50), dtype=bool)
        ys = rng.integers(5, 35, size=60)
        xs = rng.integers(4, 46, size=60)
        mask[ys, xs] = True
        x0 = y0 = 10**9
        x1 = y1 = -1
        for y in range(40):
            for x in range(50):
                if mask[y, x]:
                    x0, y0 = min(x0, x), min(y0, y)
                    x1, y1 = max(x1, x), max(y1, y)
        assert bbox_from_mask(mask).box == (float(x0), float(y0),
                                            float(x1 - x0 + 1), float(y1 - y0 + 1))

    def test_empty_mask_rejected(self):
        with pytest.raises(DataError, match="empty"):
            bbox_from_mask(np.zeros((8, 8), bool))

    def test_equal_frames_give_empty_mask(self):
        bg = np.full((32, 32), 0.4, dtype=np.float32)
        masks = subtract_background([Frame(bg.copy())], bg)
        assert not masks[0].any()

    def test_threshold_zero_includes_all_differing(self):
        bg = np.full((32, 32), 0.2, dtype=np.float32)
        frame = bg.copy()
        frame[10:20, 5:15] = 0.9
        masks = subtract_background([Frame(frame)], bg, threshold=0.0,
                                    largest_component=False)
        assert np.array_equal(masks[0], frame != bg)

    def test_subtracted_mask_iou_against_truth(self):
        vid = generate(make_identity(), "normal", 32, (64, 96),
                       substream(12, "iou"))
        est = subtract_background(vid.frames, vid.background)
        ious = []
        for m, gt in zip(est, vid.masks):
            inter = np.logical_and(m, gt).sum()
            union = np.logical_or(m, gt).sum()
            ious.append(inter / union)
        assert np.mean(ious) >= 0.9, f"mean IoU {np.mean(ious):.3f}"

    def test_largest_component_removes_speckle(self):
        bg = np.full((32, 32), 0.2, dtype=np.float32)
        frame = bg.copy()
        frame[10:20, 5:15] = 0.9   # the figure
        frame[2, 30] = 0.9         # isolated speckle
        masks = subtract_background([Frame(frame)], bg, threshold=0.3)
        assert masks[0][12, 8] and not masks[0][2, 30]


class TestCorpusLayout:
    def test_roundtrip(self, tmp_path):
        videos = (("n00", "normal"), ("a00", "perturbed-a"))
        manifest = write_corpus(tmp_path, seed=99, n_subjects=2, n_frames=32,
                                frame_size=(64, 96), videos=videos)
        assert manifest["splits"]["train"] == ["s00"]
        assert manifest["splits"]["eval"] == ["s01"]
        back = read_manifest(tmp_path)
        assert back["conditions"] == {"n00": "normal", "a00": "perturbed-a"}

        entries = list(video_dirs(tmp_path))
        assert len(entries) == 4
        subject, name, cond, vdir = entries[0]
        assert (subject, name, cond) == ("s00", "a00", "perturbed-a")

        frames = load_frame_dir(vdir / "frames")
        assert len(frames) == 32
        assert frames[0].pixels.shape == (96, 64)
        mask = load_mask(vdir / "masks" / "0000.pbm")
        assert mask.shape == (96, 64) and mask.any()
        kps = read_keypoints(vdir / "keypoints.txt")
        assert sorted(kps) == list(range(32))
        for name in REQUIRED_JOINTS:
            assert name in kps[0].joints

    def test_regeneration_is_bit_identical(self, tmp_path):
        videos = (("n00", "normal"),)
        write_corpus(tmp_path / "a", seed=7, n_subjects=1, n_frames=32,
                     videos=videos)
        write_corpus(tmp_path / "b", seed=7, n_subjects=1, n_frames=32,
                     videos=videos)
        fa = (tmp_path / "a" / "s00" / "n00" / "frames" / "0007.pgm").read_bytes()
        fb = (tmp_path / "b" / "s00" / "n00" / "frames" / "0007.pgm").read_bytes()
        assert fa == fb

    def test_missing_manifest_rejected(self, tmp_path):
        with pytest.raises(DataError, match="manifest"):
            read_manifest(tmp_path)
