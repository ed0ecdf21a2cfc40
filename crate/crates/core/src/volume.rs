//! Raw volume files and the analytic test functions.
//!
//! A raw volume of `N1 x N2 x N3` voxels becomes a grid of `m = N - 2` cubes
//! per axis with `h = 1`: voxel `0` and voxel `N - 1` sit on the boundary
//! faces, the others at the cube centers. Physical voxel spacing never enters
//! the spline; it is kept as an affine map for output geometry.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::DataPoints;
use crate::qi::{grid_points, QiSpline, SampleField};
use crate::{par, DomainGrid, Error, Point, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    U8,
    U16,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
        }
    }

    fn max(self) -> f64 {
        match self {
            Dtype::U8 => u8::MAX as f64,
            Dtype::U16 => u16::MAX as f64,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Endianness {
    #[default]
    Little,
    Big,
}

/// Sidecar description of a headerless raw volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub dtype: Dtype,
    #[serde(default)]
    pub endianness: Endianness,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<[f64; 3]>,
}

impl VolumeHeader {
    pub fn new(dims: [usize; 3], dtype: Dtype) -> Self {
        Self { dims, dtype, endianness: Endianness::Little, spacing: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&n| n < 13) {
            return Err(Error::GridTooSmall(self.dims.map(|n| n.saturating_sub(2))));
        }
        if let Some(s) = self.spacing {
            if s.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
                return Err(Error::Format(format!("voxel spacing {s:?} must be positive")));
            }
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn byte_len(&self) -> usize {
        self.voxel_count() * self.dtype.size()
    }

    /// Cube counts of the spline grid, `N - 2` per axis.
    pub fn grid_dims(&self) -> [usize; 3] {
        self.dims.map(|n| n.saturating_sub(2))
    }

    pub fn grid(&self) -> Result<DomainGrid> {
        self.validate()?;
        DomainGrid::new(self.grid_dims(), 1.0)
    }

    /// Physical size of one grid unit along each axis.
    pub fn scale(&self) -> [f64; 3] {
        self.spacing.unwrap_or([1.0; 3])
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let h: Self = serde_json::from_str(s)?;
        h.validate()?;
        Ok(h)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("header serializes")
    }
}

/// `volume.raw` → `volume.raw.json`.
pub fn sidecar_path(raw: &Path) -> PathBuf {
    let mut s = raw.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Decode a raw byte stream into samples on the data points.
pub fn read_raw(header: &VolumeHeader, bytes: &[u8]) -> Result<(SampleField, DomainGrid)> {
    let grid = header.grid()?;
    if bytes.len() != header.byte_len() {
        return Err(Error::SizeMismatch { expected: header.byte_len(), got: bytes.len() });
    }
    let values: Vec<f64> = match (header.dtype, header.endianness) {
        (Dtype::U8, _) => bytes.iter().map(|&b| b as f64).collect(),
        (Dtype::U16, Endianness::Little) => {
            bytes.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]) as f64).collect()
        }
        (Dtype::U16, Endianness::Big) => bytes.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64).collect(),
    };
    debug_assert_eq!(values.len(), DataPoints::new(&grid).len());
    Ok((SampleField::new(grid, values)?, grid))
}

/// Encode samples back into the raw layout; values must be integers in range.
pub fn write_raw(header: &VolumeHeader, samples: &SampleField) -> Result<Vec<u8>> {
    header.validate()?;
    if samples.grid().m() != header.grid_dims() {
        return Err(Error::SizeMismatch { expected: header.voxel_count(), got: samples.values().len() });
    }
    let max = header.dtype.max();
    let mut out = Vec::with_capacity(header.byte_len());
    for &v in samples.values() {
        if !(v >= 0.0 && v <= max && v.fract() == 0.0) {
            return Err(Error::Format(format!("sample {v} is not representable as {:?}", header.dtype)));
        }
        match (header.dtype, header.endianness) {
            (Dtype::U8, _) => out.push(v as u8),
            (Dtype::U16, Endianness::Little) => out.extend_from_slice(&(v as u16).to_le_bytes()),
            (Dtype::U16, Endianness::Big) => out.extend_from_slice(&(v as u16).to_be_bytes()),
        }
    }
    Ok(out)
}

/// Read `raw` and its JSON sidecar.
pub fn load_raw(raw: &Path, header: Option<VolumeHeader>) -> Result<(VolumeHeader, SampleField, DomainGrid)> {
    let header = match header {
        Some(h) => h,
        None => VolumeHeader::from_json(&std::fs::read_to_string(sidecar_path(raw))?)?,
    };
    let bytes = std::fs::read(raw)?;
    let (s, g) = read_raw(&header, &bytes)?;
    Ok((header, s, g))
}

/// The analytic benchmarks: Marschner–Lobb, a Franke-type sum of Gaussians, and a tanh ridge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestFunction {
    F1,
    F2,
    F3,
}

const ML_ALPHA: f64 = 0.25;
const ML_FREQ: f64 = 6.0;

/// `(weight, exponent, center, active axes)` of the Gaussian terms of `f2`.
const FRANKE: [(f64, f64, [f64; 3], [bool; 3]); 4] = [
    (0.5, 10.0, [0.25, 0.25, 0.0], [true, true, false]),
    (0.75, 16.0, [0.5, 0.25, 0.25], [true, true, true]),
    (0.5, 10.0, [0.75, 0.125, 0.5], [true, true, true]),
    (-0.25, 20.0, [0.75, 0.75, 0.0], [true, true, false]),
];

impl TestFunction {
    pub const ALL: [TestFunction; 3] = [TestFunction::F1, TestFunction::F2, TestFunction::F3];

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f1" | "ml" | "marschner-lobb" => Ok(Self::F1),
            "f2" | "franke" => Ok(Self::F2),
            "f3" | "tanh" => Ok(Self::F3),
            _ => Err(Error::UnknownFunction(s.to_string())),
        }
    }

    pub fn id(self) -> &'static str {
        match self {
            Self::F1 => "f1",
            Self::F2 => "f2",
            Self::F3 => "f3",
        }
    }

    /// Lower corner and side length of the cube the function lives on.
    pub fn domain(self) -> (Point, f64) {
        match self {
            Self::F1 => ([-1.0; 3], 2.0),
            Self::F2 => ([0.0; 3], 1.0),
            Self::F3 => ([-0.5; 3], 1.0),
        }
    }

    pub fn eval(self, p: Point) -> f64 {
        let [x, y, z] = p;
        match self {
            Self::F1 => {
                let r = (x * x + y * y).sqrt();
                let inner = (2.0 * PI * ML_FREQ * (PI * r / 2.0).cos()).cos();
                (1.0 - (PI * z / 2.0).sin() + ML_ALPHA * (1.0 + inner)) / (2.0 * (1.0 + ML_ALPHA))
            }
            Self::F2 => FRANKE
                .iter()
                .map(|(w, k, c, act)| {
                    let d2: f64 = (0..3).filter(|&a| act[a]).map(|a| (p[a] - c[a]).powi(2)).sum();
                    w * (-k * d2).exp()
                })
                .sum(),
            Self::F3 => (9.0 * (z - x - y) + 1.0).tanh() / 9.0,
        }
    }

    pub fn gradient(self, p: Point) -> [f64; 3] {
        let [x, y, z] = p;
        match self {
            Self::F1 => {
                let s = 1.0 / (2.0 * (1.0 + ML_ALPHA));
                let r = (x * x + y * y).sqrt();
                let phase = 2.0 * PI * ML_FREQ * (PI * r / 2.0).cos();
                // d/dr of cos(phase), divided by r (finite as r -> 0)
                let sinc = if r > 0.0 { (PI * r / 2.0).sin() / r } else { PI / 2.0 };
                let dr_over_r = phase.sin() * 2.0 * PI * ML_FREQ * (PI / 2.0) * sinc;
                [
                    s * ML_ALPHA * dr_over_r * x,
                    s * ML_ALPHA * dr_over_r * y,
                    -s * (PI / 2.0) * (PI * z / 2.0).cos(),
                ]
            }
            Self::F2 => {
                let mut g = [0.0; 3];
                for (w, k, c, act) in FRANKE {
                    let d2: f64 = (0..3).filter(|&a| act[a]).map(|a| (p[a] - c[a]).powi(2)).sum();
                    let e = w * (-k * d2).exp();
                    for a in 0..3 {
                        if act[a] {
                            g[a] += -2.0 * k * (p[a] - c[a]) * e;
                        }
                    }
                }
                g
            }
            Self::F3 => {
                let t = (9.0 * (z - x - y) + 1.0).tanh();
                let d = 1.0 - t * t;
                [-d, -d, d]
            }
        }
    }
}

impl std::fmt::Display for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.id())
    }
}

/// A test function sampled on `m^3` cubes of its domain.
#[derive(Clone, Debug)]
pub struct SampledFunction {
    pub function: TestFunction,
    pub samples: SampleField,
    pub grid: DomainGrid,
    /// World position of the grid corner.
    pub origin: Point,
}

impl SampledFunction {
    pub fn to_world(&self, p: Point) -> Point {
        std::array::from_fn(|a| p[a] + self.origin[a])
    }
}

pub fn sample_test_function(f: TestFunction, m: usize) -> Result<SampledFunction> {
    let (origin, side) = f.domain();
    let grid = DomainGrid::uniform(m, side / m as f64)?;
    grid.require_qi()?;
    let samples = SampleField::from_fn(grid, |p| f.eval(std::array::from_fn(|a| p[a] + origin[a])));
    Ok(SampledFunction { function: f, samples, grid, origin })
}

/// Sample, approximate and tag a test function in one step.
pub fn approximate_test_function(f: TestFunction, m: usize) -> Result<QiSpline> {
    let s = sample_test_function(f, m)?;
    Ok(crate::qi::approximate(&s.samples, &s.grid)?.with_origin(s.origin).with_tag(f.id()))
}

/// `max |f - s|` over the `n^3` evaluation grid (endpoints included); `f` in world coordinates.
pub fn max_error(s: &QiSpline, f: impl Fn(Point) -> f64 + Sync + Send, n: usize) -> Result<f64> {
    let values = s.eval_grid(n)?;
    let pts = grid_points(s.grid(), n);
    let o = s.origin();
    let errs = par::map_range(values.len(), |i| {
        let p = pts.point(i);
        (f(std::array::from_fn(|a| p[a] + o[a])) - values[i]).abs()
    });
    Ok(errs.into_iter().fold(0.0, f64::max))
}

/// `max_a |d_a f - d_a s|` over the `n^3` evaluation grid.
pub fn max_gradient_error(s: &QiSpline, grad: impl Fn(Point) -> [f64; 3] + Sync + Send, n: usize) -> Result<f64> {
    let pts = grid_points(s.grid(), n);
    let o = s.origin();
    let sp = s.prepared_for(pts.len())?;
    let errs = par::map_range(pts.len(), |i| -> Result<f64> {
        let p = pts.point(i);
        let g = sp.eval_gradient(p)?;
        let want = grad(std::array::from_fn(|a| p[a] + o[a]));
        Ok((0..3).map(|a| (g[a] - want[a]).abs()).fold(0.0, f64::max))
    });
    errs.into_iter().try_fold(0.0, |m, e| Ok(f64::max(m, e?)))
}
