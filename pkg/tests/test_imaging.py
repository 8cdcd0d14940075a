"""PNG/PPM writers and montage composition."""

import struct
import zlib

import numpy as np
import pytest

from vtp import imaging


def checkerboard():
    img = np.zeros((64, 64, 3), dtype=np.uint8)
    img[::2, ::2] = (255, 0, 0)
    img[1::2, 1::2] = (0, 255, 0)
    return img


def decode_png(path):
    blob = path.read_bytes()
    assert blob[:8] == b"\x89PNG\r\n\x1a\n"
    off = 8
    width = height = None
    idat = b""
    while off < len(blob):
        (length,) = struct.unpack(">I", blob[off:off + 4])
        tag = blob[off + 4:off + 8]
        payload = blob[off + 8:off + 8 + length]
        if tag == b"IHDR":
            width, height = struct.unpack(">II", payload[:8])
            assert payload[8] == 8 and payload[9] == 2  # 8-bit RGB
        elif tag == b"IDAT":
            idat += payload
        off += 12 + length
    raw = zlib.decompress(idat)
    stride = width * 3 + 1
    rows = []
    for r in range(height):
        line = raw[r * stride:(r + 1) * stride]
        assert line[0] == 0  # filter: none
        rows.append(np.frombuffer(line[1:], dtype=np.uint8))
    return np.stack(rows).reshape(height, width, 3)


def test_png_roundtrip(tmp_path):
    img = checkerboard()
    path = tmp_path / "img.png"
    imaging.write_png(path, img)
    back = decode_png(path)
    np.testing.assert_array_equal(back, img)


def test_ppm_roundtrip(tmp_path):
    img = checkerboard()
    path = tmp_path / "img.ppm"
    imaging.write_ppm(path, img)
    blob = path.read_bytes()
    assert blob.startswith(b"P6\n64 64\n255\n")
    back = np.frombuffer(blob[len(b"P6\n64 64\n255\n"):], dtype=np.uint8)
    np.testing.assert_array_equal(back.reshape(64, 64, 3), img)


def test_save_image_picks_format(tmp_path):
    img = np.random.default_rng(0).random((64, 64, 3)).astype(np.float32)
    imaging.save_image(tmp_path / "a.png", img)
    imaging.save_image(tmp_path / "b.ppm", img)
    assert (tmp_path / "a.png").read_bytes()[:4] == b"\x89PNG"
    assert (tmp_path / "b.ppm").read_bytes()[:2] == b"P6"


def test_montage_width_and_tiles(tmp_path):
    rng = np.random.default_rng(1)
    imgs = [rng.random((64, 64, 3)).astype(np.float32) for _ in range(3)]
    out = imaging.render_montage(imgs, ["one", "two", "three"],
                                 tmp_path / "m.png")
    assert out.shape == (64 + imaging.LABEL_STRIP, 3 * 64, 3)
    for i, img in enumerate(imgs):
        np.testing.assert_array_equal(out[imaging.LABEL_STRIP:, i * 64:(i + 1) * 64],
                                      imaging.to_u8(img))


def test_montage_hidden_state_channel_mean(tmp_path):
    rng = np.random.default_rng(2)
    h = rng.random((8, 8, 8)).astype(np.float32)
    out = imaging.render_montage([h], [""], tmp_path / "h.png")
    tile = out[imaging.LABEL_STRIP:, :64]
    # direct averaging oracle, upscaled 8x
    mean = h.mean(axis=2)
    for r in range(8):
        for c in range(8):
            want = imaging.to_u8(np.full((1, 1, 3), mean[r, c]))[0, 0]
            block = tile[r * 8:(r + 1) * 8, c * 8:(c + 1) * 8]
            assert (block == want).all()


def test_montage_empty_raises(tmp_path):
    with pytest.raises(ValueError, match="at least one"):
        imaging.render_montage([], [], tmp_path / "x.png")


def test_montage_label_pixels_present(tmp_path):
    img = np.zeros((64, 64, 3), dtype=np.uint8)
    out = imaging.render_montage([img], ["abc"], tmp_path / "l.png")
    strip = out[:imaging.LABEL_STRIP]
    assert (strip == 255).any()  # glyph pixels stamped white
