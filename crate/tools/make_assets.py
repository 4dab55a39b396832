#!/usr/bin/env python3
"""Regenerates the committed test corpus, reference detections and demo assets.

Requires opencv-python(-headless) 4.x (which ships the stock Haar cascades and
the reference CascadeClassifier), numpy, Pillow and scikit-image.

    python tools/make_assets.py [--out data]
"""
import argparse
import json
import math
import os
import shutil

import cv2
import numpy as np
import skimage.data as sd
from PIL import Image, ImageDraw, ImageFilter
import matplotlib.cbook as cbook

SCALE_FACTOR = 1.1
MIN_NEIGHBORS = 3
MIN_SIZE = (24, 24)

SLOTS = [(150, 250, 140, 140), (440, 220, 150, 150), (730, 260, 130, 130), (1000, 230, 140, 140)]


def gray(img):
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    if img.dtype != np.uint8:
        img = (np.clip(img, 0, 1) * 255).astype(np.uint8)
    if img.ndim == 3:
        img = cv2.cvtColor(img[..., :3], cv2.COLOR_RGB2GRAY)
    return img


def lfw_faces():
    faces = sd.lfw_subset()[:100]
    return [(f * 255).astype(np.uint8) for f in faces]


def place(canvas, face, x, y, size):
    big = cv2.resize(face, (size, size), interpolation=cv2.INTER_CUBIC)
    canvas[y:y + size, x:x + size] = big


def textured_background(rng, w, h):
    sources = [sd.brick, sd.grass, sd.gravel, sd.moon, sd.coffee, sd.rocket]
    base = gray(sources[int(rng.integers(0, len(sources)))]())
    base = cv2.resize(base, (w, h), interpolation=cv2.INTER_AREA)
    # flatten contrast so planted faces dominate
    return (base.astype(np.float32) * 0.35 + 100).astype(np.uint8)


def detect(cc, img):
    d = cc.detectMultiScale(img, scaleFactor=SCALE_FACTOR, minNeighbors=MIN_NEIGHBORS, minSize=MIN_SIZE)
    return [[int(v) for v in r] for r in (d if len(d) else [])]


def non_overlapping(rng, w, h, sizes):
    boxes = []
    for s in sizes:
        for _ in range(500):
            x = int(rng.integers(0, w - s))
            y = int(rng.integers(0, h - s))
            if all(x + s + 8 < bx or bx + bs + 8 < x or y + s + 8 < by or by + bs + 8 < y for bx, by, bs in boxes):
                boxes.append((x, y, s))
                break
    return boxes


def make_corpus(out, cc, rng):
    faces = lfw_faces()
    faces_dir = os.path.join(out, "corpus", "faces")
    neg_dir = os.path.join(out, "corpus", "negatives")
    os.makedirs(faces_dir, exist_ok=True)
    os.makedirs(neg_dir, exist_ok=True)
    entries = []

    photos = {
        "astronaut.png": gray(sd.astronaut()),
        "hopper.png": np.array(Image.open(cbook.get_sample_data("grace_hopper.jpg")).convert("L")),
    }
    for name, img in photos.items():
        Image.fromarray(img).save(os.path.join(faces_dir, name))
        entries.append({"file": "faces/" + name, "labels": None, "reference": detect(cc, img)})

    face_idx = 0
    for i in range(22):
        w, h = 400, 300
        canvas = textured_background(rng, w, h)
        n = 1 + i % 3
        sizes = sorted((int(rng.integers(56, 130)) for _ in range(n)), reverse=True)
        labels = []
        for x, y, s in non_overlapping(rng, w, h, sizes):
            place(canvas, faces[face_idx % len(faces)], x, y, s)
            face_idx += 1
            labels.append([x, y, s, s])
        name = "group_%02d.png" % i
        Image.fromarray(canvas).save(os.path.join(faces_dir, name))
        entries.append({"file": "faces/" + name, "labels": labels, "reference": detect(cc, canvas)})

    negatives = {
        "brick.png": sd.brick(), "grass.png": sd.grass(), "gravel.png": sd.gravel(),
        "coins.png": sd.coins(), "moon.png": sd.moon(), "text.png": sd.text(),
        "page.png": sd.page(), "rocket.png": sd.rocket(), "coffee.png": sd.coffee(),
        "colorwheel.png": sd.colorwheel(),
    }
    for name, img in negatives.items():
        g = gray(img)
        Image.fromarray(g).save(os.path.join(neg_dir, name))
        entries.append({"file": "negatives/" + name, "labels": [], "reference": detect(cc, g)})

    # six planted faces of distinct sizes
    w, h = 640, 400
    canvas = textured_background(rng, w, h)
    sizes = [150, 130, 112, 96, 80, 66]
    spots = [(20, 20), (230, 30), (420, 40), (40, 250), (250, 280), (450, 290)]
    labels = []
    for k, ((x, y), s) in enumerate(zip(spots, sizes)):
        place(canvas, faces[40 + k], x, y, s)
        labels.append([x, y, s, s])
    Image.fromarray(canvas).save(os.path.join(out, "corpus", "six_faces.png"))
    six = {"file": "six_faces.png", "labels": labels, "reference": detect(cc, canvas)}

    ref = {
        "detector": "OpenCV %s CascadeClassifier.detectMultiScale" % cv2.__version__,
        "cascade": "haarcascade_frontalface_default.xml",
        "scale_factor": SCALE_FACTOR,
        "min_neighbors": MIN_NEIGHBORS,
        "min_size": list(MIN_SIZE),
        "images": entries,
        "six_faces": six,
    }
    with open(os.path.join(out, "corpus", "reference.json"), "w") as f:
        json.dump(ref, f, indent=1)
    return faces


def make_sequence(out, faces, rng):
    seq_dir = os.path.join(out, "corpus", "sequence")
    os.makedirs(seq_dir, exist_ok=True)
    w, h = 640, 360
    bg = textured_background(rng, w, h)
    for t in range(30):
        canvas = bg.copy()
        place(canvas, faces[60], 40 + 9 * t, 60, 110)
        place(canvas, faces[61], 470 - 7 * t, 170 + t, 96)
        rgb = np.stack([canvas] * 3, axis=-1)
        tint = np.array([1.0, 0.97, 0.92])
        rgb = np.clip(rgb * tint, 0, 255).astype(np.uint8)
        Image.fromarray(rgb).save(os.path.join(seq_dir, "frame_%03d.png" % t))


def make_faces(out, faces):
    d = os.path.join(out, "faces")
    os.makedirs(d, exist_ok=True)
    for k, idx in enumerate([3, 17, 29, 51, 72, 88]):
        big = cv2.resize(faces[idx], (160, 160), interpolation=cv2.INTER_CUBIC)
        Image.fromarray(np.stack([big] * 3, axis=-1)).save(os.path.join(d, "face_%02d.png" % k))


def make_background(out, frames=8):
    d = os.path.join(out, "background")
    os.makedirs(d, exist_ok=True)
    w, h = 1280, 800
    rng = np.random.default_rng(11)
    stars = [(int(rng.integers(0, w)), int(rng.integers(0, 300)), float(rng.uniform(0, 2 * math.pi))) for _ in range(120)]
    for f in range(frames):
        img = Image.new("RGB", (w, h))
        px = ImageDraw.Draw(img)
        for y in range(h):
            t = y / h
            px.line([(0, y), (w, y)], fill=(int(18 + 40 * t), int(28 + 50 * t), int(60 + 70 * t)))
        phase = 2 * math.pi * f / frames
        for sx, sy, sp in stars:
            b = int(150 + 100 * (0.5 + 0.5 * math.sin(phase + sp)))
            px.point((sx, sy), fill=(b, b, b))
        px.ellipse([-300, 560, 900, 1100], fill=(222, 228, 240))
        px.ellipse([500, 590, 1700, 1150], fill=(232, 236, 246))
        px.rectangle([0, 700, w, h], fill=(228, 232, 244))
        for x, y, s, _ in SLOTS:
            cx = x + s // 2
            body = int(s * 1.6)
            px.ellipse([cx - body // 2, y + s - 10, cx + body // 2, y + s - 10 + body], fill=(245, 247, 252), outline=(190, 198, 215), width=3)
            px.ellipse([x, y, x + s, y + s], fill=(236, 240, 250), outline=(190, 198, 215), width=3)
        img = img.filter(ImageFilter.GaussianBlur(0.6))
        img.save(os.path.join(d, "bg_%03d.png" % f), optimize=True)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "data"))
    args = ap.parse_args()
    out = os.path.abspath(args.out)
    casc_dir = os.path.join(out, "cascades")
    os.makedirs(casc_dir, exist_ok=True)
    for name in ["haarcascade_frontalface_default.xml", "haarcascade_frontalface_alt.xml"]:
        shutil.copy(os.path.join(cv2.data.haarcascades, name), os.path.join(casc_dir, name))
    cc = cv2.CascadeClassifier(os.path.join(casc_dir, "haarcascade_frontalface_default.xml"))
    rng = np.random.default_rng(2014)
    faces = make_corpus(out, cc, rng)
    make_sequence(out, faces, rng)
    make_faces(out, faces)
    make_background(out)


if __name__ == "__main__":
    main()
