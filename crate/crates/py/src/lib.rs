//! Python bindings: fields, meshes, cameras, edit sessions, rendering and image metrics.

use nalgebra::Point3;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;

use nerfdeform::arap::HandleSet;
use nerfdeform::bend::WarpStrategy;
use nerfdeform::field::{generate_field, Aabb, RadianceFieldGrid, SceneSpec};
use nerfdeform::geom::{load_obj, marching_cubes_clamped, save_obj, IsoChannel, TriMesh, EDIT_EDGE_CLAMP};
use nerfdeform::pipeline::{build_proxy, resample_field, DeformMode, EditSession, PipelineError, EXIT_NUMERICAL};
use nerfdeform::render::{render_image, Camera, Image, SampleSpec, SpaceWarp};
use nerfdeform::tetproxy::save_proxy;

type Vec3 = (f64, f64, f64);

fn err(e: impl Into<PipelineError>) -> PyErr {
    let e = e.into();
    if e.exit_code() == EXIT_NUMERICAL {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn point(p: Vec3) -> Point3<f64> {
    Point3::new(p.0, p.1, p.2)
}

fn tuple(p: &Point3<f64>) -> Vec3 {
    (p.x, p.y, p.z)
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

/// Grid radiance field: density, color and optional signed distance on a lattice.
#[pyclass(name = "Field", module = "nerfdeform_py", frozen)]
pub struct PyField {
    inner: RadianceFieldGrid,
}

#[pymethods]
impl PyField {
    /// Samples a scene description (JSON text) on a `dims`^3 lattice over `[-half_extent, half_extent]^3`.
    #[staticmethod]
    #[pyo3(signature = (spec_json, dims = 96, half_extent = 1.5))]
    fn from_scene(py: Python<'_>, spec_json: &str, dims: usize, half_extent: f64) -> PyResult<Self> {
        let spec = SceneSpec::from_json(spec_json).map_err(err)?;
        let inner = py.detach(|| generate_field(&spec, [dims; 3], Aabb::cube(half_extent))).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: RadianceFieldGrid::load(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    #[getter]
    fn dims(&self) -> [usize; 3] {
        self.inner.dims()
    }

    #[getter]
    fn bounds(&self) -> (Vec3, Vec3) {
        let b = self.inner.bounds();
        (tuple(&b.min), tuple(&b.max))
    }

    /// `(density, (r, g, b))` by trilinear interpolation; zero outside the bounds.
    fn sample(&self, p: Vec3) -> (f64, [f64; 3]) {
        self.inner.sample(&point(p))
    }

    /// Marching cubes on the sdf channel (or density at `iso` when there is none), optionally
    /// on a resampled lattice.
    #[pyo3(signature = (resolution = None, iso = None, edge_clamp = EDIT_EDGE_CLAMP))]
    fn extract(&self, py: Python<'_>, resolution: Option<usize>, iso: Option<f64>, edge_clamp: f64) -> PyResult<PyMesh> {
        let mesh = py.detach(|| -> Result<TriMesh, PipelineError> {
            let field = match resolution {
                Some(r) => resample_field(&self.inner, [r; 3])?,
                None => self.inner.clone(),
            };
            let (channel, level) = match (field.sdf().is_some(), iso) {
                (true, i) => (IsoChannel::Sdf, i.unwrap_or(0.0)),
                (false, Some(i)) => (IsoChannel::Density, i),
                (false, None) => (IsoChannel::Density, nerfdeform::field::DEFAULT_DENSITY_SCALE / 2.0),
            };
            Ok(marching_cubes_clamped(&field, level, channel, edge_clamp)?)
        });
        Ok(PyMesh { inner: mesh.map_err(err)? })
    }
}

#[pyclass(name = "Mesh", module = "nerfdeform_py", frozen)]
pub struct PyMesh {
    inner: TriMesh,
}

#[pymethods]
impl PyMesh {
    #[new]
    fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> PyResult<Self> {
        Ok(Self { inner: TriMesh::new(vertices.into_iter().map(point).collect(), faces).map_err(err)? })
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: load_obj(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        save_obj(&self.inner, path).map_err(err)
    }

    #[getter]
    fn vertices(&self) -> Vec<Vec3> {
        self.inner.vertices.iter().map(tuple).collect()
    }

    #[getter]
    fn faces(&self) -> Vec<[usize; 3]> {
        self.inner.faces.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.num_vertices()
    }

    fn area(&self) -> f64 {
        self.inner.area()
    }

    fn is_closed(&self) -> bool {
        self.inner.is_closed()
    }

    fn __repr__(&self) -> String {
        format!("Mesh({} vertices, {} faces)", self.inner.num_vertices(), self.inner.num_faces())
    }
}

#[pyclass(name = "Camera", module = "nerfdeform_py", frozen)]
pub struct PyCamera {
    inner: Camera,
}

#[pymethods]
impl PyCamera {
    #[staticmethod]
    #[pyo3(signature = (position, target, fov, width, height))]
    fn look_at(position: Vec3, target: Vec3, fov: f64, width: usize, height: usize) -> PyResult<Self> {
        let inner = Camera::look_at(point(position), point(target), fov, width, height);
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self { inner: Camera::from_json(text).map_err(err)? })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height
    }
}

#[pyclass(name = "Image", module = "nerfdeform_py", frozen)]
pub struct PyImage {
    inner: Image,
}

#[pymethods]
impl PyImage {
    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        Ok(Self { inner: Image::load(path).map_err(err)? })
    }

    fn save(&self, path: &str) -> PyResult<()> {
        self.inner.save(path).map_err(err)
    }

    fn png_bytes<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &self.inner.png_bytes().map_err(err)?))
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn pixel(&self, x: usize, y: usize) -> PyResult<[f64; 3]> {
        if x >= self.inner.width() || y >= self.inner.height() {
            return Err(PyValueError::new_err(format!("pixel ({x}, {y}) outside the image")));
        }
        Ok(self.inner.get(x, y))
    }
}

/// Rest surface, tet proxy and the state of the last solve.
#[pyclass(name = "EditSession", module = "nerfdeform_py")]
pub struct PyEditSession {
    inner: EditSession,
}

#[pymethods]
impl PyEditSession {
    /// Builds the proxy around `mesh`: cage offset from the cameras unless given, cell size half
    /// the offset unless given.
    #[new]
    #[pyo3(signature = (mesh, cameras, offset = None, cell_size = None))]
    fn new(py: Python<'_>, mesh: &PyMesh, cameras: Vec<PyRef<'_, PyCamera>>, offset: Option<f64>, cell_size: Option<f64>) -> PyResult<Self> {
        let cams: Vec<Camera> = cameras.iter().map(|c| c.inner.clone()).collect();
        let mesh = mesh.inner.clone();
        let inner = py
            .detach(|| -> Result<EditSession, PipelineError> {
                let proxy = build_proxy(&mesh, &cams, offset, cell_size)?;
                EditSession::new(mesh, proxy.tet, proxy.embedding)
            })
            .map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(mesh_path: &str, proxy_path: &str) -> PyResult<Self> {
        Ok(Self { inner: EditSession::load(mesh_path, proxy_path).map_err(err)? })
    }

    /// Writes the current (deformed) proxy with its embedding.
    fn save_proxy(&self, path: &str) -> PyResult<()> {
        save_proxy(path, self.inner.tet(), Some(self.inner.embedding())).map_err(err)
    }

    /// Solves for `handles`, a list of `(vertex, (x, y, z))`. Returns the report as a dict.
    /// Raises ValueError for bad input and RuntimeError when the solve fails numerically; the
    /// previous state is kept either way.
    #[pyo3(signature = (handles, mode = "two_step"))]
    fn deform<'py>(&mut self, py: Python<'py>, handles: Vec<(usize, Vec3)>, mode: &str) -> PyResult<Bound<'py, PyAny>> {
        let mode = match mode {
            "two_step" => DeformMode::TwoStep,
            "edit_on_tet" => DeformMode::EditOnTet,
            other => return Err(PyValueError::new_err(format!("unknown mode {other:?}; expected two_step or edit_on_tet"))),
        };
        let set = HandleSet::from_pairs(handles.into_iter().map(|(i, p)| (i, point(p))));
        let inner = &mut self.inner;
        let report = py.detach(|| inner.deform(&set, mode).cloned()).map_err(err)?;
        json_to_py(py, &serde_json::to_string(&report).map_err(err)?)
    }

    #[getter]
    fn rest_mesh(&self) -> PyMesh {
        PyMesh { inner: self.inner.rest_mesh().clone() }
    }

    #[getter]
    fn deformed_mesh(&self) -> PyMesh {
        PyMesh { inner: self.inner.deformed_mesh().clone() }
    }

    #[getter]
    fn num_tet_vertices(&self) -> usize {
        self.inner.tet().num_vertices()
    }

    #[getter]
    fn num_tets(&self) -> usize {
        self.inner.tet().num_tets()
    }
}

/// Volume-renders `field`, bent by the session's current deformation when one is given.
#[pyfunction]
#[pyo3(signature = (field, camera, session = None, warp = "tet", samples = 256, seed = 0, jitter = false, white_background = false, mask_vacated = true))]
#[allow(clippy::too_many_arguments)]
fn render(
    py: Python<'_>,
    field: &PyField,
    camera: &PyCamera,
    session: Option<PyRef<'_, PyEditSession>>,
    warp: &str,
    samples: usize,
    seed: u64,
    jitter: bool,
    white_background: bool,
    mask_vacated: bool,
) -> PyResult<PyImage> {
    let strategy: WarpStrategy = warp.parse().map_err(err)?;
    let sampler = SampleSpec { samples, seed, jitter, white_background, ..SampleSpec::default() };
    let warp = match &session {
        Some(s) => Some(s.inner.snapshot().warp(strategy, mask_vacated).map_err(err)?),
        None => None,
    };
    let image = py
        .detach(|| render_image(&field.inner, &camera.inner, &sampler, warp.as_ref().map(|w| w as &dyn SpaceWarp)))
        .map_err(err)?;
    Ok(PyImage { inner: image })
}

/// Peak signal-to-noise ratio in dB; infinite for identical images.
#[pyfunction]
fn psnr(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    nerfdeform::render::psnr(&a.inner, &b.inner).map_err(err)
}

/// Mean structural similarity over 11x11 Gaussian windows.
#[pyfunction]
fn ssim(a: &PyImage, b: &PyImage) -> PyResult<f64> {
    nerfdeform::render::ssim(&a.inner, &b.inner).map_err(err)
}

#[pymodule]
pub fn nerfdeform_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyField>()?;
    m.add_class::<PyMesh>()?;
    m.add_class::<PyCamera>()?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyEditSession>()?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    Ok(())
}
