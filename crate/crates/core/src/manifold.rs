//! Coherent-state manifolds: the complex plane (field coherent states) and the
//! unit sphere (spin-J coherent states), their invariant measures, overlap
//! kernels and midpoint quadrature grids.
//!
//! Measures are normalized so that the coherent states resolve the identity:
//! `dμ = d²z / π` on the plane and `dμ = (2J+1)/(4π) sin θ dθ dφ` on the sphere.
//! The metric factor is folded into the cell weights.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, PrecsError, Result};
use crate::io::fmt_real;
use crate::par;

/// Spin magnitude J, a positive multiple of 1/2, stored as 2J.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinMagnitude(u32);

impl SpinMagnitude {
    pub fn from_twice(twice: u32) -> Result<Self> {
        if twice == 0 {
            return invalid("spin magnitude J must be positive");
        }
        Ok(SpinMagnitude(twice))
    }

    pub fn new(j: f64) -> Result<Self> {
        let twice = 2.0 * j;
        if !j.is_finite()
            || j <= 0.0
            || (twice - twice.round()).abs() > 1e-9
            || twice > u32::MAX as f64
        {
            return invalid(format!("J = {j} is not a positive half-integer"));
        }
        Self::from_twice(twice.round() as u32)
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn twice(self) -> u32 {
        self.0
    }

    /// Dimension 2J+1 of the spin representation.
    pub fn dimension(self) -> usize {
        self.0 as usize + 1
    }
}

impl fmt::Display for SpinMagnitude {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

impl Serialize for SpinMagnitude {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for SpinMagnitude {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = f64::deserialize(d)?;
        SpinMagnitude::new(j).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ManifoldKind {
    Plane,
    Sphere,
}

/// A point on a coherent-state manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhasePoint {
    Plane { re: f64, im: f64 },
    Sphere { theta: f64, phi: f64 },
}

impl PhasePoint {
    pub const ORIGIN: PhasePoint = PhasePoint::Plane { re: 0.0, im: 0.0 };
    pub const SOUTH_POLE: PhasePoint = PhasePoint::Sphere {
        theta: PI,
        phi: 0.0,
    };

    pub fn plane(re: f64, im: f64) -> Result<Self> {
        if !re.is_finite() || !im.is_finite() {
            return invalid("plane coordinates must be finite");
        }
        Ok(PhasePoint::Plane { re, im })
    }

    pub fn from_complex(z: Complex64) -> Result<Self> {
        Self::plane(z.re, z.im)
    }

    /// Sphere point from polar angle in [0, π] and any finite azimuth, which is
    /// wrapped into [0, 2π).
    pub fn sphere(theta: f64, phi: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&theta) || !phi.is_finite() {
            return invalid(format!(
                "sphere angles out of range: theta = {theta}, phi = {phi}"
            ));
        }
        Ok(PhasePoint::Sphere {
            theta,
            phi: wrap_azimuth(phi),
        })
    }

    /// Sphere point from a (not necessarily normalized) nonzero vector.
    pub fn from_vector(n: [f64; 3]) -> Result<Self> {
        let norm = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return invalid("direction vector must be finite and nonzero");
        }
        let theta = (n[2] / norm).clamp(-1.0, 1.0).acos();
        let phi = if n[0] == 0.0 && n[1] == 0.0 {
            0.0
        } else {
            n[1].atan2(n[0])
        };
        Self::sphere(theta, phi)
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            PhasePoint::Plane { .. } => ManifoldKind::Plane,
            PhasePoint::Sphere { .. } => ManifoldKind::Sphere,
        }
    }

    /// The two storage coordinates: (re, im) or (theta, phi).
    pub fn coords(&self) -> (f64, f64) {
        match *self {
            PhasePoint::Plane { re, im } => (re, im),
            PhasePoint::Sphere { theta, phi } => (theta, phi),
        }
    }

    pub fn as_complex(&self) -> Option<Complex64> {
        match *self {
            PhasePoint::Plane { re, im } => Some(Complex64::new(re, im)),
            PhasePoint::Sphere { .. } => None,
        }
    }

    pub fn unit_vector(&self) -> Option<[f64; 3]> {
        match *self {
            PhasePoint::Sphere { theta, phi } => {
                let (st, ct) = theta.sin_cos();
                let (sp, cp) = phi.sin_cos();
                Some([st * cp, st * sp, ct])
            }
            PhasePoint::Plane { .. } => None,
        }
    }
}

fn wrap_azimuth(phi: f64) -> f64 {
    let w = phi.rem_euclid(2.0 * PI);
    if w >= 2.0 * PI {
        0.0
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ManifoldSpec {
    Plane { half_width: f64 },
    Sphere { j: SpinMagnitude },
}

impl ManifoldSpec {
    pub fn plane(half_width: f64) -> Result<Self> {
        if !(half_width > 0.0) || !half_width.is_finite() {
            return invalid(format!(
                "plane half-width must be positive, got {half_width}"
            ));
        }
        Ok(ManifoldSpec::Plane { half_width })
    }

    pub fn sphere(j: SpinMagnitude) -> Self {
        ManifoldSpec::Sphere { j }
    }

    pub fn kind(&self) -> ManifoldKind {
        match self {
            ManifoldSpec::Plane { .. } => ManifoldKind::Plane,
            ManifoldSpec::Sphere { .. } => ManifoldKind::Sphere,
        }
    }

    /// det(m): density of dμ with respect to the coordinate area element
    /// (dx dy on the plane, solid angle on the sphere).
    pub fn metric_factor(&self) -> f64 {
        match *self {
            ManifoldSpec::Plane { .. } => 1.0 / PI,
            ManifoldSpec::Sphere { j } => (j.twice() as f64 + 1.0) / (4.0 * PI),
        }
    }

    fn check(&self, p: &PhasePoint) -> Result<()> {
        if p.kind() != self.kind() {
            return invalid(format!(
                "{:?} point used on a {:?} manifold",
                p.kind(),
                self.kind()
            ));
        }
        Ok(())
    }
}

/// Complex overlap ⟨a|b⟩ of two coherent states.
///
/// Sphere states use the chart regular at the south pole (the reference
/// state): |θ,φ⟩ = Σ_k √C(2J,k) cos^k(θ/2) sin^{2J-k}(θ/2) e^{-ikφ} |m = -J+k⟩.
pub fn overlap(spec: &ManifoldSpec, a: &PhasePoint, b: &PhasePoint) -> Result<Complex64> {
    spec.check(a)?;
    spec.check(b)?;
    Ok(overlap_unchecked(spec, a, b))
}

pub(crate) fn overlap_unchecked(spec: &ManifoldSpec, a: &PhasePoint, b: &PhasePoint) -> Complex64 {
    match (*spec, *a, *b) {
        (
            ManifoldSpec::Plane { .. },
            PhasePoint::Plane { re: ar, im: ai },
            PhasePoint::Plane { re: br, im: bi },
        ) => {
            let za = Complex64::new(ar, ai);
            let zb = Complex64::new(br, bi);
            (za.conj() * zb - 0.5 * za.norm_sqr() - 0.5 * zb.norm_sqr()).exp()
        }
        (
            ManifoldSpec::Sphere { j },
            PhasePoint::Sphere { theta: ta, phi: pa },
            PhasePoint::Sphere { theta: tb, phi: pb },
        ) => {
            let (sa, ca) = (ta / 2.0).sin_cos();
            let (sb, cb) = (tb / 2.0).sin_cos();
            let half = Complex64::new(sa * sb, 0.0) + ca * cb * Complex64::from_polar(1.0, pa - pb);
            half.powi(j.twice() as i32)
        }
        _ => unreachable!("manifold kinds checked by caller"),
    }
}

/// Squared overlap |⟨a|b⟩|², the Husimi kernel.
pub fn overlap2(spec: &ManifoldSpec, a: &PhasePoint, b: &PhasePoint) -> Result<f64> {
    spec.check(a)?;
    spec.check(b)?;
    Ok(overlap2_unchecked(spec, a, b))
}

pub(crate) fn overlap2_unchecked(spec: &ManifoldSpec, a: &PhasePoint, b: &PhasePoint) -> f64 {
    match (*spec, *a, *b) {
        (
            ManifoldSpec::Plane { .. },
            PhasePoint::Plane { re: ar, im: ai },
            PhasePoint::Plane { re: br, im: bi },
        ) => {
            let d2 = (ar - br).powi(2) + (ai - bi).powi(2);
            (-d2).exp()
        }
        (ManifoldSpec::Sphere { j }, _, _) => {
            let na = a.unit_vector().unwrap();
            let nb = b.unit_vector().unwrap();
            let dot = na[0] * nb[0] + na[1] * nb[1] + na[2] * nb[2];
            let base = ((1.0 + dot) / 2.0).clamp(0.0, 1.0);
            base.powi(j.twice() as i32)
        }
        _ => unreachable!("manifold kinds checked by caller"),
    }
}

/// Euclidean distance on the plane, great-circle angle on the sphere.
pub fn distance(a: &PhasePoint, b: &PhasePoint) -> Result<f64> {
    match (a, b) {
        (PhasePoint::Plane { re: ar, im: ai }, PhasePoint::Plane { re: br, im: bi }) => {
            Ok(((ar - br).powi(2) + (ai - bi).powi(2)).sqrt())
        }
        (PhasePoint::Sphere { .. }, PhasePoint::Sphere { .. }) => {
            let na = a.unit_vector().unwrap();
            let nb = b.unit_vector().unwrap();
            let cross = [
                na[1] * nb[2] - na[2] * nb[1],
                na[2] * nb[0] - na[0] * nb[2],
                na[0] * nb[1] - na[1] * nb[0],
            ];
            let sin = (cross[0].powi(2) + cross[1].powi(2) + cross[2].powi(2)).sqrt();
            let cos = na[0] * nb[0] + na[1] * nb[1] + na[2] * nb[2];
            Ok(sin.atan2(cos))
        }
        _ => invalid("distance between points on different manifolds"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub point: PhasePoint,
    pub weight: f64,
}

/// Midpoint discretization of a (truncated) manifold.
///
/// Cells are stored row-major: index = i1 * n2 + i2, where i1 runs over re
/// (or θ) and i2 over im (or φ).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: ManifoldSpec,
    cells: Vec<Cell>,
    resolution: (usize, usize),
}

pub fn build_plane_grid(half_width: f64, n: usize) -> Result<Grid> {
    let spec = ManifoldSpec::plane(half_width)?;
    if n < 8 {
        return invalid(format!("plane grid needs n >= 8, got {n}"));
    }
    let step = 2.0 * half_width / n as f64;
    let weight = step * step / PI;
    let cells = (0..n * n)
        .map(|idx| {
            let (i1, i2) = (idx / n, idx % n);
            let re = -half_width + (i1 as f64 + 0.5) * step;
            let im = -half_width + (i2 as f64 + 0.5) * step;
            Cell {
                point: PhasePoint::Plane { re, im },
                weight,
            }
        })
        .collect();
    Ok(Grid {
        spec,
        cells,
        resolution: (n, n),
    })
}

pub fn build_sphere_grid(n_theta: usize, n_phi: usize, j: SpinMagnitude) -> Result<Grid> {
    if n_theta < 8 || n_phi < 8 {
        return invalid(format!(
            "sphere grid needs n_theta, n_phi >= 8, got {n_theta} x {n_phi}"
        ));
    }
    let spec = ManifoldSpec::sphere(j);
    let d_theta = PI / n_theta as f64;
    let d_phi = 2.0 * PI / n_phi as f64;
    let density = spec.metric_factor();
    let cells = (0..n_theta * n_phi)
        .map(|idx| {
            let (i1, i2) = (idx / n_phi, idx % n_phi);
            let theta = (i1 as f64 + 0.5) * d_theta;
            let phi = i2 as f64 * d_phi;
            // exact solid angle of the cell: 2 sin θ sin(Δθ/2) Δφ
            Cell {
                point: PhasePoint::Sphere { theta, phi },
                weight: density * 2.0 * theta.sin() * (d_theta / 2.0).sin() * d_phi,
            }
        })
        .collect();
    Ok(Grid {
        spec,
        cells,
        resolution: (n_theta, n_phi),
    })
}

impl Grid {
    pub fn spec(&self) -> &ManifoldSpec {
        &self.spec
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn resolution(&self) -> (usize, usize) {
        self.resolution
    }

    pub fn total_weight(&self) -> f64 {
        par::compensated_sum(self.cells.iter().map(|c| c.weight))
    }

    /// Two grids are interchangeable for cell-index arithmetic.
    pub fn same_layout(&self, other: &Grid) -> bool {
        self.spec == other.spec && self.resolution == other.resolution
    }

    /// Index of the cell whose center is nearest to `p` in grid coordinates.
    pub fn nearest_cell(&self, p: &PhasePoint) -> Result<usize> {
        self.spec.check(p)?;
        let (n1, n2) = self.resolution;
        let (i1, i2) = match (self.spec, *p) {
            (ManifoldSpec::Plane { half_width }, PhasePoint::Plane { re, im }) => {
                let step = 2.0 * half_width / n1 as f64;
                let f = |x: f64| (((x + half_width) / step).floor().max(0.0) as usize).min(n1 - 1);
                (f(re), f(im))
            }
            (ManifoldSpec::Sphere { .. }, PhasePoint::Sphere { theta, phi }) => {
                let i1 = ((theta / (PI / n1 as f64)).floor() as usize).min(n1 - 1);
                let i2 = ((phi / (2.0 * PI / n2 as f64)).round() as usize) % n2;
                (i1, i2)
            }
            _ => unreachable!(),
        };
        Ok(i1 * n2 + i2)
    }

    /// 4-neighbour adjacency; the sphere wraps in φ.
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> {
        let (n1, n2) = self.resolution;
        let (i1, i2) = (idx / n2, idx % n2);
        let wrap = self.spec.kind() == ManifoldKind::Sphere;
        let mut out = [None; 4];
        if i1 > 0 {
            out[0] = Some((i1 - 1) * n2 + i2);
        }
        if i1 + 1 < n1 {
            out[1] = Some((i1 + 1) * n2 + i2);
        }
        if i2 > 0 {
            out[2] = Some(i1 * n2 + i2 - 1);
        } else if wrap {
            out[2] = Some(i1 * n2 + n2 - 1);
        }
        if i2 + 1 < n2 {
            out[3] = Some(i1 * n2 + i2 + 1);
        } else if wrap {
            out[3] = Some(i1 * n2);
        }
        out.into_iter().flatten()
    }

    /// Evaluate `f` at every cell center.
    pub fn map_points<F>(&self, f: F) -> Vec<f64>
    where
        F: Fn(&PhasePoint) -> f64 + Sync + Send,
    {
        par::map_slice(&self.cells, |c| f(&c.point))
    }

    /// CSV export: `idx,coord1,coord2,weight`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "idx,coord1,coord2,weight")?;
        for (i, c) in self.cells.iter().enumerate() {
            let (a, b) = c.point.coords();
            writeln!(
                out,
                "{i},{},{},{}",
                fmt_real(a),
                fmt_real(b),
                fmt_real(c.weight)
            )?;
        }
        Ok(())
    }
}

/// Midpoint quadrature Σ weightᵢ·valueᵢ.
pub fn integrate(grid: &Grid, values: &[f64]) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(PrecsError::InvalidArgument(format!(
            "value count {} does not match grid cell count {}",
            values.len(),
            grid.len()
        )));
    }
    Ok(par::compensated_sum(
        grid.cells.iter().zip(values).map(|(c, v)| c.weight * v),
    ))
}
