"""Bundled procedural scenes: an indoor room and an outdoor street.

Both are plain axis-aligned geometry written as OBJ + canonical JSON, sized
so that every anchor view contains large smooth surfaces (walls, floor,
facade) broken up by a few boxes that create normal boundaries and
parallax occluders.
"""

from __future__ import annotations

import os

import numpy as np

from .scene import canonical_json

_DEJAVU_DIR = "/usr/share/fonts/truetype/dejavu"


def _face(qa, qb, qc, qd, normal):
    """One quad face with an outward normal; corners wound CCW seen from
    the normal side."""
    a, b, c, d = (np.asarray(p, dtype=np.float64) for p in (qa, qb, qc, qd))
    n = np.asarray(normal, dtype=np.float64)
    if np.dot(np.cross(b - a, d - a), n) < 0:
        a, b, c, d = a, d, c, b
    return (a, b, c, d), n


def _box_faces(lo, hi, flip=False):
    """Six quad faces of an axis-aligned box; flip=True points normals inward."""
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    sign = -1.0 if flip else 1.0
    faces = [
        _face((x0, y0, z0), (x0, y1, z0), (x0, y1, z1), (x0, y0, z1), (-sign, 0, 0)),
        _face((x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1), (sign, 0, 0)),
        _face((x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1), (0, -sign, 0)),
        _face((x0, y1, z0), (x1, y1, z0), (x1, y1, z1), (x0, y1, z1), (0, sign, 0)),
        _face((x0, y0, z0), (x1, y0, z0), (x1, y1, z0), (x0, y1, z0), (0, 0, -sign)),
        _face((x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1), (0, 0, sign)),
    ]
    return faces


def write_obj(path: str, faces) -> None:
    """Write quad faces as triangles with one shared normal per face."""
    lines = ["# generated mesh"]
    vert_index: dict[tuple, int] = {}
    norm_index: dict[tuple, int] = {}
    v_lines: list[str] = []
    n_lines: list[str] = []
    f_lines: list[str] = []

    def vid(p) -> int:
        key = (round(float(p[0]), 6), round(float(p[1]), 6), round(float(p[2]), 6))
        if key not in vert_index:
            vert_index[key] = len(vert_index) + 1
            v_lines.append(f"v {key[0]:.6f} {key[1]:.6f} {key[2]:.6f}")
        return vert_index[key]

    def nid(n) -> int:
        key = (round(float(n[0]), 6), round(float(n[1]), 6), round(float(n[2]), 6))
        if key not in norm_index:
            norm_index[key] = len(norm_index) + 1
            n_lines.append(f"vn {key[0]:.6f} {key[1]:.6f} {key[2]:.6f}")
        return norm_index[key]

    for (a, b, c, d), n in faces:
        ia, ib, ic, idd = vid(a), vid(b), vid(c), vid(d)
        ni = nid(n)
        f_lines.append(f"f {ia}//{ni} {ib}//{ni} {ic}//{ni}")
        f_lines.append(f"f {ia}//{ni} {ic}//{ni} {idd}//{ni}")

    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines + v_lines + n_lines + f_lines) + "\n")


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    return [float(x) for x in v / np.linalg.norm(v)]


def build_room_scene(out_dir: str) -> str:
    """8x6x3 room with a column and a crate; one anchor facing the far wall."""
    os.makedirs(out_dir, exist_ok=True)
    w, d, h = 8.0, 6.0, 3.0

    write_obj(
        os.path.join(out_dir, "floor.obj"),
        [_face((0, 0, 0), (w, 0, 0), (w, d, 0), (0, d, 0), (0, 0, 1))],
    )
    write_obj(
        os.path.join(out_dir, "ceiling.obj"),
        [_face((0, 0, h), (w, 0, h), (w, d, h), (0, d, h), (0, 0, -1))],
    )
    walls = [
        _face((0, 0, 0), (w, 0, 0), (w, 0, h), (0, 0, h), (0, 1, 0)),
        _face((0, d, 0), (w, d, 0), (w, d, h), (0, d, h), (0, -1, 0)),
        _face((0, 0, 0), (0, d, 0), (0, d, h), (0, 0, h), (1, 0, 0)),
        _face((w, 0, 0), (w, d, 0), (w, d, h), (w, 0, h), (-1, 0, 0)),
    ]
    write_obj(os.path.join(out_dir, "walls.obj"), walls)
    write_obj(os.path.join(out_dir, "column.obj"), _box_faces((4.7, 3.9, 0.0), (5.3, 4.5, h)))
    write_obj(os.path.join(out_dir, "crate.obj"), _box_faces((1.0, 4.6, 0.0), (2.2, 5.5, 1.1)))

    doc = {
        "id": "demo-room",
        "meshes": [
            {"path": "floor.obj", "material": "floor"},
            {"path": "ceiling.obj", "material": "ceiling"},
            {"path": "walls.obj", "material": "wall"},
            {"path": "column.obj", "material": "column"},
            {"path": "crate.obj", "material": "crate"},
        ],
        "materials": {
            "floor": {"albedo": [0.45, 0.37, 0.3]},
            "ceiling": {"albedo": [0.85, 0.85, 0.82]},
            "wall": {"albedo": [0.75, 0.77, 0.72]},
            "column": {"albedo": [0.6, 0.6, 0.64]},
            "crate": {"albedo": [0.55, 0.42, 0.28]},
        },
        "lights": [
            {"kind": "ambient", "color": [1.0, 1.0, 1.0], "intensity": 0.45},
            {"kind": "point", "color": [1.0, 0.98, 0.92], "intensity": 0.55, "position": [4.0, 3.0, 2.7]},
            {"kind": "directional", "color": [1.0, 1.0, 1.0], "intensity": 0.3, "direction": _unit([0.3, 0.4, -0.85])},
        ],
        "fog": {"density": 0.0, "color": [0.7, 0.75, 0.8]},
        "z_max": 50.0,
        "anchors": [
            {"id": "a0", "position": [4.0, 1.8, 1.6], "yaw": 90.0, "pitch": 0.0, "roll": 0.0, "label": "far wall"}
        ],
    }
    scene_path = os.path.join(out_dir, "scene.json")
    with open(scene_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json(doc))
    return scene_path


def build_street_scene(out_dir: str) -> str:
    """Open street: ground, a long facade, a low wall and a few boxes."""
    os.makedirs(out_dir, exist_ok=True)

    write_obj(
        os.path.join(out_dir, "ground.obj"),
        [_face((-2, -4, 0), (28, -4, 0), (28, 10, 0), (-2, 10, 0), (0, 0, 1))],
    )
    write_obj(
        os.path.join(out_dir, "facade.obj"),
        [_face((-2, 10, 0), (28, 10, 0), (28, 10, 6), (-2, 10, 6), (0, -1, 0))],
    )
    write_obj(
        os.path.join(out_dir, "lowwall.obj"),
        [_face((-2, -4, 0), (28, -4, 0), (28, -4, 2.5), (-2, -4, 2.5), (0, 1, 0))],
    )
    write_obj(os.path.join(out_dir, "crates.obj"), _box_faces((6.0, 6.5, 0.0), (7.5, 8.0, 1.5)) + _box_faces((12.0, 7.0, 0.0), (13.2, 8.2, 1.2)))
    write_obj(os.path.join(out_dir, "kiosk.obj"), _box_faces((18.0, 5.5, 0.0), (20.0, 7.5, 2.8)))

    doc = {
        "id": "demo-street",
        "meshes": [
            {"path": "ground.obj", "material": "asphalt"},
            {"path": "facade.obj", "material": "facade"},
            {"path": "lowwall.obj", "material": "lowwall"},
            {"path": "crates.obj", "material": "crate"},
            {"path": "kiosk.obj", "material": "kiosk"},
        ],
        "materials": {
            "asphalt": {"albedo": [0.35, 0.36, 0.38]},
            "facade": {"albedo": [0.62, 0.58, 0.52]},
            "lowwall": {"albedo": [0.55, 0.6, 0.62]},
            "crate": {"albedo": [0.5, 0.38, 0.25]},
            "kiosk": {"albedo": [0.3, 0.45, 0.55]},
        },
        "lights": [
            {"kind": "ambient", "color": [1.0, 1.0, 1.0], "intensity": 0.4},
            {"kind": "directional", "color": [1.0, 0.97, 0.9], "intensity": 1.0, "direction": _unit([0.25, 0.35, -0.9])},
        ],
        "fog": {"density": 0.0, "color": [0.72, 0.76, 0.82]},
        "z_max": 50.0,
        "anchors": [
            {"id": "s0", "position": [2.0, 2.5, 1.7], "yaw": 35.0, "pitch": 2.0, "roll": 0.0, "label": "down the street"}
        ],
    }
    scene_path = os.path.join(out_dir, "scene.json")
    with open(scene_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json(doc))
    return scene_path


_CORPUS = """\
The morning market opens before sunrise and the stalls fill quickly.
Fresh bread, ripe fruit, and strong coffee draw a steady crowd.
Delivery vans line the curb while workers unload wooden crates.
A painted sign above the bakery lists prices for the week.
Turn left at the corner and follow the narrow lane to the river.
The ferry departs every twenty minutes during the busy season.
Tickets are sold at the kiosk beside the old stone bridge.
Visitors should keep to the marked paths along the waterfront.
Rain is expected after noon with gusty winds from the west.
Carry a light jacket because evenings cool down fast here.
The library stays open late on weekdays for students and readers.
Quiet rooms on the second floor can be reserved at the desk.
Local buses run on schedule except during road repairs.
Route maps are posted at every stop and inside each station.
The museum wing reopens next month with a new exhibit hall.
Guided tours start at ten and last about ninety minutes.
Photography is allowed in the courtyard but not in the gallery.
Fresh paint on the railing means the gate stays closed today.
Lost items can be claimed at the office near the main entrance.
Parking beyond this point is reserved for permit holders only.
The bakery on Mill Street sells out of rye loaves by nine.
Street musicians gather near the fountain on warm evenings.
Check the board for platform changes before boarding any train.
The hardware store stocks rope, lamps, paint, and garden tools.
Road crews will close the east lane between the two bridges.
Cyclists must dismount when crossing the wooden footbridge.
A small plaque marks the oldest house on the square.
The print shop offers same day service for small orders.
Warm soup and fresh rolls are served from a cart at lunch.
The night watchman locks the courtyard gates at eleven sharp.
Spare keys for the storage lockers hang in the front office.
Mind the step down as you enter the cellar workshop.
The florist arranges seasonal bouquets for the weekend fair.
Package pickup moved to the counter at the rear of the store.
Every window on the south wall was replaced last spring.
The clock tower chimes on the hour from eight until six.
Schedules shift by one hour when the winter season begins.
Use the service entrance when the front steps are icy.
The harbor master posts tide tables beside the pier office.
A fresh coat of blue paint brightened the ferry waiting room.
"""


def write_demo_corpus(path: str) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(_CORPUS)
    return path


def default_fonts_dir() -> str:
    return _DEJAVU_DIR if os.path.isdir(_DEJAVU_DIR) else "fonts"


def make_demo(out_dir: str) -> dict:
    """Emit both scenes, the corpus, and a ready-to-run pipeline config."""
    os.makedirs(out_dir, exist_ok=True)
    room = build_room_scene(os.path.join(out_dir, "room"))
    street = build_street_scene(os.path.join(out_dir, "street"))
    corpus = write_demo_corpus(os.path.join(out_dir, "corpus.txt"))

    config = {
        "scenes": ["room/scene.json", "street/scene.json"],
        "corpus": "corpus.txt",
        "fonts_dir": default_fonts_dir(),
        "output_dir": "dataset",
        "master_seed": 7,
        "samples_per_anchor": 20,
        "regions_per_view": [2, 6],
        "presets": ["normal", "bright", "dark", "fog"],
        "intrinsics": {"fx": 1000.0, "fy": 1000.0, "cx": 360.0, "cy": 540.0, "width": 720, "height": 1080},
        "proposal": {"threshold": 100, "min_width": 96, "min_height": 64, "strides": [12, 24, 36]},
        "viewpoint": {"radius": 0.5, "max_angle_deg": 15.0},
        "annotation": {"keep_threshold": 0.3, "char_quads": False, "visibility_samples": 64},
        "grid": [16, 8],
    }
    config_path = os.path.join(out_dir, "config.json")
    with open(config_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(canonical_json(config))
    return {"room": room, "street": street, "corpus": corpus, "config": config_path}
