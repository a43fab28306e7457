#!/usr/bin/env python3
"""Draws the placeholder images of the sample bundle (data/sample/images).

    python3 tools/make_placeholder_images.py [out_dir]

The drawings are crude stand-ins so the pipeline can run end to end; swap in
real or generated photographs (see data/sample/prompts.txt) for meaningful
predictions.
"""

import os
import sys

import cv2
import numpy as np


def canvas(w, h, top, bottom):
    ramp = np.linspace(0.0, 1.0, h)[:, None, None]
    img = (1 - ramp) * np.array(top, float) + ramp * np.array(bottom, float)
    return np.repeat(img, w, axis=1).astype(np.uint8)


def chainsaw():
    img = canvas(384, 256, (60, 140, 60), (30, 90, 40))  # foliage
    cv2.rectangle(img, (40, 90), (150, 180), (40, 110, 230), -1)
    cv2.rectangle(img, (60, 70), (130, 95), (30, 30, 30), -1)
    cv2.rectangle(img, (150, 115), (350, 150), (190, 190, 190), -1)
    for x in range(155, 350, 12):
        cv2.line(img, (x, 113), (x + 6, 108), (70, 70, 70), 2)
        cv2.line(img, (x, 152), (x + 6, 157), (70, 70, 70), 2)
    for cx, cy in ((70, 210), (200, 60), (320, 210)):
        cv2.circle(img, (cx, cy), 14, (200, 120, 220), -1)
    return img


def lion():
    img = canvas(320, 320, (230, 200, 150), (110, 80, 40))
    cv2.circle(img, (160, 170), 110, (30, 80, 140), -1)  # mane
    cv2.circle(img, (160, 175), 70, (60, 160, 215), -1)
    for dx in (-25, 25):
        cv2.circle(img, (160 + dx, 160), 9, (20, 20, 20), -1)
    cv2.ellipse(img, (160, 200), (18, 12), 0, 0, 360, (40, 60, 90), -1)
    return img


def snail():
    img = canvas(300, 260, (210, 230, 200), (70, 120, 60))
    cv2.ellipse(img, (150, 205), (120, 22), 0, 0, 360, (150, 190, 210), -1)
    for r, shade in ((75, 60), (55, 90), (35, 120), (15, 150)):
        cv2.circle(img, (145, 140), r, (shade, shade + 40, 160), -1)
    cv2.line(img, (250, 190), (265, 140), (150, 190, 210), 4)
    cv2.line(img, (240, 190), (245, 145), (150, 190, 210), 4)
    cv2.rectangle(img, (110, 45), (185, 60), (20, 20, 20), -1)  # cap
    return img


def car():
    img = canvas(400, 280, (235, 205, 160), (120, 120, 120))
    cv2.rectangle(img, (50, 130), (350, 200), (40, 40, 200), -1)
    pts = np.array([[110, 130], [150, 85], [260, 85], [300, 130]], np.int32)
    cv2.fillPoly(img, [pts], (40, 40, 180))
    cv2.rectangle(img, (160, 95), (250, 128), (230, 220, 200), -1)
    for cx in (110, 290):
        cv2.circle(img, (cx, 205), 32, (20, 20, 20), -1)
        cv2.circle(img, (cx, 205), 14, (180, 180, 180), -1)
    return img


def dam():
    img = canvas(360, 240, (240, 210, 170), (200, 150, 90))
    cv2.rectangle(img, (0, 40), (360, 120), (160, 110, 60), -1)  # reservoir
    pts = np.array([[0, 120], [360, 120], [330, 200], [30, 200]], np.int32)
    cv2.fillPoly(img, [pts], (170, 175, 180))
    for x in range(60, 320, 50):
        cv2.rectangle(img, (x, 130), (x + 18, 200), (220, 230, 235), -1)
    cv2.rectangle(img, (0, 200), (360, 240), (120, 90, 50), -1)
    return img


IMAGES = {
    "chainsaw.png": chainsaw,
    "lion.jpg": lion,
    "snail.png": snail,
    "car.jpg": car,
    "dam.png": dam,
}


def main(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    for name, draw in IMAGES.items():
        img = cv2.GaussianBlur(draw(), (3, 3), 0)  # OpenCV arrays are BGR
        params = [cv2.IMWRITE_JPEG_QUALITY, 92] if name.endswith(".jpg") else []
        cv2.imwrite(os.path.join(out_dir, name), img, params)
        print("wrote", os.path.join(out_dir, name))


if __name__ == "__main__":
    default = os.path.join(os.path.dirname(os.path.abspath(__file__)), "..", "data", "sample", "images")
    main(sys.argv[1] if len(sys.argv) > 1 else default)
