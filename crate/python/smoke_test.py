"""Smoke test for the Python bindings: build a scene, edit it, render before and after.

Build the module first, e.g. `pip install --no-build-isolation ./crates/py`, then run
`python python/smoke_test.py`.
"""

import json
import math
import sys
import tempfile
from pathlib import Path

import nerfdeform_py as nd

SPEC = {
    "version": 1,
    "primitives": [
        {
            "shape": "capsule",
            "a": [-0.5, 0.0, 0.0],
            "b": [0.5, 0.0, 0.0],
            "radius": 0.3,
            "color": {
                "kind": "gradient",
                "from": [-0.8, 0.0, 0.0],
                "to": [0.8, 0.0, 0.0],
                "rgb_from": [0.9, 0.2, 0.1],
                "rgb_to": [0.1, 0.5, 0.9],
            },
        }
    ],
}


def orbit(n=6, dist=3.5):
    cams = []
    for k in range(n):
        a = 2 * math.pi * k / n
        cams.append(nd.Camera.look_at((dist * math.cos(a), 0.6, dist * math.sin(a)), (0.0, 0.0, 0.0), 0.8, 8, 8))
    return cams


def main():
    field = nd.Field.from_scene(json.dumps(SPEC), dims=48, half_extent=1.5)
    assert field.dims == [48, 48, 48]
    density, rgb = field.sample((0.0, 0.0, 0.0))
    assert density > 0.0 and all(0.0 <= c <= 1.0 for c in rgb)

    mesh = field.extract(resolution=24)
    assert mesh.is_closed() and len(mesh) > 0
    print("extracted", mesh)

    session = nd.EditSession(mesh, orbit())
    print("proxy:", session.num_tet_vertices, "tet vertices,", session.num_tets, "tets")

    view = nd.Camera.look_at((0.4, 0.9, 3.8), (0.0, 0.1, 0.0), 0.75, 48, 48)
    before = nd.render(field, view, samples=128)

    # Pinning every vertex to its rest position leaves the render unchanged.
    rest = mesh.vertices
    report = session.deform([(i, p) for i, p in enumerate(rest)])
    assert report["version"] == 1 and report["inverted_tets"] == []
    same = nd.render(field, view, session=session, samples=128)
    assert same.png_bytes() == before.png_bytes()
    assert nd.psnr(before, same) == math.inf and nd.ssim(before, same) == 1.0

    # Bend the right half upwards; the left half stays.
    handles = [(i, (x, y + 0.15 * (x - 0.3) / 0.5, z)) if x > 0.3 else (i, (x, y, z)) for i, (x, y, z) in enumerate(rest) if abs(x) > 0.3]
    report = session.deform(handles)
    print("surface iterations:", report["surface"]["iterations"], "tet iterations:", report["tet"]["iterations"])
    moved = session.deformed_mesh.vertices
    i = max(range(len(rest)), key=lambda k: rest[k][0])
    assert abs(moved[i][1] - rest[i][1] - 0.15 * (rest[i][0] - 0.3) / 0.5) < 1e-9

    after = {w: nd.render(field, view, session=session, warp=w, samples=128) for w in ("tet", "closest", "knn3")}
    for w, img in after.items():
        print(f"{w:8s} psnr vs unedited {nd.psnr(before, img):6.2f} dB, ssim {nd.ssim(before, img):.4f}")
        assert img.png_bytes() != before.png_bytes()

    # Errors surface as Python exceptions and keep the previous state.
    try:
        session.deform([(10**6, (0.0, 0.0, 0.0))])
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("out-of-range handle accepted")
    assert session.deformed_mesh.vertices == moved

    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        mesh.save(str(d / "rest.obj"))
        session.save_proxy(str(d / "proxy.tet"))
        after["tet"].save(str(d / "after.png"))
        field.save(str(d / "scene.field"))
        reloaded = nd.EditSession.load(str(d / "rest.obj"), str(d / "proxy.tet"))
        assert reloaded.num_tets == session.num_tets
        assert nd.Image.load(str(d / "after.png")).png_bytes() == after["tet"].png_bytes()
        assert nd.Field.load(str(d / "scene.field")).dims == field.dims

    print("ok")


if __name__ == "__main__":
    sys.exit(main())
