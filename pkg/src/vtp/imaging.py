"""Minimal image output: PNG (stdlib zlib) with a PPM P6 fallback, plus
labeled montage strips for plans, dreams and hidden-state visualization."""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

# 3x5 pixel glyphs, rows top-down, 3-bit masks
_FONT = {
    "a": (0b010, 0b101, 0b111, 0b101, 0b101),
    "b": (0b110, 0b101, 0b110, 0b101, 0b110),
    "c": (0b011, 0b100, 0b100, 0b100, 0b011),
    "d": (0b110, 0b101, 0b101, 0b101, 0b110),
    "e": (0b111, 0b100, 0b110, 0b100, 0b111),
    "f": (0b111, 0b100, 0b110, 0b100, 0b100),
    "g": (0b011, 0b100, 0b101, 0b101, 0b011),
    "h": (0b101, 0b101, 0b111, 0b101, 0b101),
    "i": (0b111, 0b010, 0b010, 0b010, 0b111),
    "j": (0b001, 0b001, 0b001, 0b101, 0b010),
    "k": (0b101, 0b101, 0b110, 0b101, 0b101),
    "l": (0b100, 0b100, 0b100, 0b100, 0b111),
    "m": (0b101, 0b111, 0b111, 0b101, 0b101),
    "n": (0b101, 0b111, 0b111, 0b111, 0b101),
    "o": (0b010, 0b101, 0b101, 0b101, 0b010),
    "p": (0b110, 0b101, 0b110, 0b100, 0b100),
    "q": (0b010, 0b101, 0b101, 0b110, 0b011),
    "r": (0b110, 0b101, 0b110, 0b101, 0b101),
    "s": (0b011, 0b100, 0b010, 0b001, 0b110),
    "t": (0b111, 0b010, 0b010, 0b010, 0b010),
    "u": (0b101, 0b101, 0b101, 0b101, 0b111),
    "v": (0b101, 0b101, 0b101, 0b101, 0b010),
    "w": (0b101, 0b101, 0b111, 0b111, 0b101),
    "x": (0b101, 0b101, 0b010, 0b101, 0b101),
    "y": (0b101, 0b101, 0b010, 0b010, 0b010),
    "z": (0b111, 0b001, 0b010, 0b100, 0b111),
    "0": (0b010, 0b101, 0b101, 0b101, 0b010),
    "1": (0b010, 0b110, 0b010, 0b010, 0b111),
    "2": (0b110, 0b001, 0b010, 0b100, 0b111),
    "3": (0b111, 0b001, 0b010, 0b001, 0b110),
    "4": (0b101, 0b101, 0b111, 0b001, 0b001),
    "5": (0b111, 0b100, 0b110, 0b001, 0b110),
    "6": (0b011, 0b100, 0b111, 0b101, 0b010),
    "7": (0b111, 0b001, 0b010, 0b010, 0b010),
    "8": (0b010, 0b101, 0b010, 0b101, 0b010),
    "9": (0b010, 0b101, 0b111, 0b001, 0b110),
    "_": (0b000, 0b000, 0b000, 0b000, 0b111),
    "-": (0b000, 0b000, 0b111, 0b000, 0b000),
    ".": (0b000, 0b000, 0b000, 0b000, 0b010),
    " ": (0b000, 0b000, 0b000, 0b000, 0b000),
}

LABEL_STRIP = 8


def to_u8(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img)
    if img.dtype == np.uint8:
        return img
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(path, img: np.ndarray) -> None:
    """8-bit RGB PNG, no filtering."""
    img = to_u8(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"write_png expects (H,W,3), got {img.shape}")
    h, w = img.shape[:2]
    raw = b"".join(b"\x00" + img[r].tobytes() for r in range(h))

    def chunk(tag: bytes, payload: bytes) -> bytes:
        return (struct.pack(">I", len(payload)) + tag + payload
                + struct.pack(">I", zlib.crc32(tag + payload)))

    with open(path, "wb") as f:
        f.write(b"\x89PNG\r\n\x1a\n")
        f.write(chunk(b"IHDR", struct.pack(">IIBBBBB", w, h, 8, 2, 0, 0, 0)))
        f.write(chunk(b"IDAT", zlib.compress(raw, 6)))
        f.write(chunk(b"IEND", b""))


def write_ppm(path, img: np.ndarray) -> None:
    """Binary PPM P6."""
    img = to_u8(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"write_ppm expects (H,W,3), got {img.shape}")
    h, w = img.shape[:2]
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode())
        f.write(img.tobytes())


def save_image(path, img: np.ndarray) -> None:
    path = Path(path)
    if path.suffix.lower() == ".ppm":
        write_ppm(path, img)
    else:
        write_png(path, img)


def stamp_text(img: np.ndarray, text: str, row: int, col: int,
               color=(255, 255, 255)) -> None:
    """Blit 3x5 glyphs in place; unknown characters render as spaces."""
    for ch in text.lower():
        glyph = _FONT.get(ch, _FONT[" "])
        for r, bits in enumerate(glyph):
            for c in range(3):
                if bits & (0b100 >> c):
                    rr, cc = row + r, col + c
                    if 0 <= rr < img.shape[0] and 0 <= cc < img.shape[1]:
                        img[rr, cc] = color
        col += 4


def hidden_tile(h: np.ndarray) -> np.ndarray:
    """Channel-mean of an 8x8xC hidden state as a 64x64 grayscale image."""
    h = np.asarray(h, dtype=np.float32)
    mean = h.mean(axis=2)
    up = np.repeat(np.repeat(mean, 8, axis=0), 8, axis=1)
    return np.stack([up, up, up], axis=2)


def render_montage(images, labels, path) -> np.ndarray:
    """Horizontal strip of 64x64 tiles with a label band above each tile.

    Entries of shape (8,8,C) are treated as hidden states and rendered as
    upscaled channel means; everything else must already be 64x64x3.
    Returns the composed u8 image (also written to `path`).
    """
    images = list(images)
    if not images:
        raise ValueError("render_montage needs at least one image")
    if labels is None:
        labels = [""] * len(images)
    if len(labels) != len(images):
        raise ValueError("labels must match images one to one")
    tiles = []
    for img in images:
        arr = np.asarray(img)
        if arr.ndim == 3 and arr.shape[:2] == (8, 8):
            arr = hidden_tile(arr)
        if arr.shape != (64, 64, 3):
            raise ValueError(f"montage tiles must be 64x64x3, got {arr.shape}")
        tiles.append(to_u8(arr))
    width = 64 * len(tiles)
    out = np.zeros((64 + LABEL_STRIP, width, 3), dtype=np.uint8)
    out[:LABEL_STRIP] = 32
    for i, (tile, label) in enumerate(zip(tiles, labels)):
        out[LABEL_STRIP:, i * 64:(i + 1) * 64] = tile
        stamp_text(out, str(label)[:15], 1, i * 64 + 2)
    save_image(path, out)
    return out
