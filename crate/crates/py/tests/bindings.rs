use std::ffi::CString;

use pyo3::prelude::*;
use pyo3::types::PyDict;

fn run(script: &str) {
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(nerfdeform_py::nerfdeform_py)(py);
        py.import("sys").unwrap().getattr("modules").unwrap().set_item("nerfdeform_py", module).unwrap();
        let globals = PyDict::new(py);
        let code = CString::new(script).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("python script failed: {e}");
        }
    });
}

#[test]
fn edit_and_render_from_python() {
    run(r#"
import json, math
import nerfdeform_py as nd

spec = {"primitives": [{"shape": "sphere", "center": [0.0, 0.0, 0.0], "radius": 0.45,
                        "color": {"kind": "constant", "rgb": [0.8, 0.3, 0.2]}}]}
field = nd.Field.from_scene(json.dumps(spec), dims=40, half_extent=1.2)
mesh = field.extract(resolution=20)
assert mesh.is_closed()
cams = [nd.Camera.look_at((3.0 * math.cos(a), 0.5, 3.0 * math.sin(a)), (0, 0, 0), 0.8, 8, 8)
        for a in (0.0, 2.1, 4.2)]
session = nd.EditSession(mesh, cams)

u = (0.1, -0.05, 0.02)
report = session.deform([(i, (x + u[0], y + u[1], z + u[2])) for i, (x, y, z) in enumerate(mesh.vertices)])
assert report["mode"] == "two_step" and report["version"] == 1
for p, q in zip(mesh.vertices, session.deformed_mesh.vertices):
    assert all(abs(q[k] - p[k] - u[k]) < 1e-6 for k in range(3))

view = nd.Camera.look_at((0.0, 0.3, 3.0), (0, 0, 0), 0.7, 24, 24)
a = nd.render(field, view, session=session, samples=64)
b = nd.render(field, view, session=session, samples=64)
assert a.png_bytes() == b.png_bytes()
assert nd.psnr(a, b) == math.inf
assert 0.0 < nd.ssim(a, nd.render(field, view, samples=64)) < 1.0

for bad, exc in (([(10**6, (0, 0, 0))], ValueError),):
    try:
        session.deform(bad)
    except exc:
        pass
    else:
        raise AssertionError("accepted bad handles")
try:
    session.deform([(0, (0, 0, 0))], mode="sideways")
except ValueError as e:
    assert "sideways" in str(e)
try:
    nd.render(field, view, warp="bogus")
except ValueError:
    pass
else:
    raise AssertionError("accepted unknown warp")
"#);
}
