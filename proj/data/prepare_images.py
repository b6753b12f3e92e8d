"""Writes the bundled PGM images from scikit-image's sample data.

Training images: centre square crop, resized to 128x128.
Test image: the camera image resized to 128x128, centre 64x64 crop.
"""
import pathlib

import numpy as np
from skimage import color, data, transform

TRAIN = ["astronaut", "chelsea", "coffee", "coins", "moon", "rocket", "brick", "grass"]
OUT = pathlib.Path(__file__).resolve().parent


def gray_square(name, size):
    img = getattr(data, name)()
    if img.ndim == 3:
        img = color.rgb2gray(img[..., :3])
    else:
        img = img.astype(float) / 255.0
    h, w = img.shape
    s = min(h, w)
    img = img[(h - s) // 2:(h - s) // 2 + s, (w - s) // 2:(w - s) // 2 + s]
    img = transform.resize(img, (size, size), anti_aliasing=True)
    return np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)


def write_pgm(path, img):
    with open(path, "wb") as f:
        f.write(b"P5\n%d %d\n255\n" % (img.shape[1], img.shape[0]))
        f.write(img.tobytes())


def main():
    for name in TRAIN:
        write_pgm(OUT / "train" / f"{name}.pgm", gray_square(name, 128))
    cam = gray_square("camera", 128)
    write_pgm(OUT / "test_camera64.pgm", cam[32:96, 32:96])


if __name__ == "__main__":
    main()
