//! Closed analytic boundary curves and their Nyström discretization.
//!
//! Every curve is a counter-clockwise, 2π-periodic parametrization
//! `t ↦ x(t)`, so `ν = (x2', -x1') / |x'|` is the outward normal.
//! Reconstruction unknowns are always [`StarlikeShape`]s; the remaining
//! presets exist to generate synthetic data.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::ops::{Add, Mul};

use crate::error::{Error, Result};

/// Smallest admissible radius of a starlike shape, checked on [`RADIUS_CHECK_POINTS`].
pub const MIN_RADIUS: f64 = 0.05;
pub const RADIUS_CHECK_POINTS: usize = 512;
/// Minimum distance between the two boundaries.
pub const CONTAINMENT_MARGIN: f64 = 0.05;
/// Polyline resolution for simplicity and containment checks.
pub const POLYLINE_POINTS: usize = 256;

pub type Point = [f64; 2];

/// `center + r(θ)(cos θ, sin θ)` with
/// `r(θ) = α_0 + Σ_{l=1..M} [α_l cos(lθ) + α_{l+M} sin(lθ)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStarlike")]
pub struct StarlikeShape {
    pub center: Point,
    coeffs: Vec<f64>,
}

#[derive(Deserialize)]
struct RawStarlike {
    #[serde(default)]
    center: Point,
    coeffs: Vec<f64>,
}

impl TryFrom<RawStarlike> for StarlikeShape {
    type Error = Error;
    fn try_from(raw: RawStarlike) -> Result<Self> {
        StarlikeShape::new(raw.center, raw.coeffs)
    }
}

impl StarlikeShape {
    /// Builds a shape and enforces the radius floor.
    pub fn new(center: Point, coeffs: Vec<f64>) -> Result<Self> {
        let shape = Self::new_unchecked(center, coeffs)?;
        shape.check_radius()?;
        Ok(shape)
    }

    /// Builds a shape without the radius check (only the coefficient layout is validated).
    pub fn new_unchecked(center: Point, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() % 2 == 0 {
            return Err(Error::Geometry(format!(
                "a starlike shape needs 2M+1 coefficients, got {}",
                coeffs.len()
            )));
        }
        if coeffs.iter().chain(center.iter()).any(|c| !c.is_finite()) {
            return Err(Error::Geometry("non-finite shape coefficient".into()));
        }
        Ok(Self { center, coeffs })
    }

    pub fn circle(center: Point, radius: f64, degree: usize) -> Result<Self> {
        let mut coeffs = vec![0.0; 2 * degree + 1];
        coeffs[0] = radius;
        Self::new(center, coeffs)
    }

    /// Least-squares projection of a radial function onto trigonometric degree `degree`.
    pub fn fit_radial(center: Point, degree: usize, radius: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = 4 * degree.max(8) + 64;
        let h = 2.0 * PI / samples as f64;
        let values: Vec<f64> = (0..samples).map(|i| radius(i as f64 * h)).collect();
        let mut coeffs = vec![0.0; 2 * degree + 1];
        coeffs[0] = values.iter().sum::<f64>() / samples as f64;
        for l in 1..=degree {
            let (mut c, mut s) = (0.0, 0.0);
            for (i, v) in values.iter().enumerate() {
                let a = l as f64 * i as f64 * h;
                c += v * a.cos();
                s += v * a.sin();
            }
            coeffs[l] = 2.0 * c / samples as f64;
            coeffs[l + degree] = 2.0 * s / samples as f64;
        }
        Self::new(center, coeffs)
    }

    /// The trigonometric degree `M`.
    pub fn degree(&self) -> usize {
        self.coeffs.len() / 2
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `(r, r', r'')` at angle `theta`.
    pub fn radius_derivs(&self, theta: f64) -> (f64, f64, f64) {
        let m = self.degree();
        let (mut r, mut dr, mut ddr) = (self.coeffs[0], 0.0, 0.0);
        for l in 1..=m {
            let lf = l as f64;
            let (s, c) = (lf * theta).sin_cos();
            let (a, b) = (self.coeffs[l], self.coeffs[l + m]);
            r += a * c + b * s;
            dr += lf * (b * c - a * s);
            ddr -= lf * lf * (a * c + b * s);
        }
        (r, dr, ddr)
    }

    pub fn radius(&self, theta: f64) -> f64 {
        self.radius_derivs(theta).0
    }

    pub fn min_radius(&self, samples: usize) -> f64 {
        (0..samples)
            .map(|i| self.radius(2.0 * PI * i as f64 / samples as f64))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn check_radius(&self) -> Result<()> {
        let rmin = self.min_radius(RADIUS_CHECK_POINTS);
        if rmin < MIN_RADIUS {
            return Err(Error::Geometry(format!(
                "starlike radius drops to {rmin:.4} (< {MIN_RADIUS})"
            )));
        }
        Ok(())
    }
}

/// The named test shapes. All but the circle are centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    Circle {
        radius: f64,
        #[serde(default)]
        center: Point,
    },
    Apple,
    Kite,
    RoundedSquare,
    RoundedTriangle,
}

impl Preset {
    pub const NAMES: [&'static str; 5] = ["circle", "apple", "kite", "rounded_square", "rounded_triangle"];

    /// Looks a preset up by its exact name; `circle` requires a radius.
    pub fn from_name(name: &str, radius: Option<f64>) -> Result<Self> {
        Ok(match name {
            "circle" => Preset::Circle {
                radius: radius
                    .ok_or_else(|| Error::Config("preset `circle` needs a radius".into()))?,
                center: [0.0, 0.0],
            },
            "apple" => Preset::Apple,
            "kite" => Preset::Kite,
            "rounded_square" => Preset::RoundedSquare,
            "rounded_triangle" => Preset::RoundedTriangle,
            other => {
                return Err(Error::Config(format!(
                    "unknown preset `{other}` (expected one of {:?})",
                    Self::NAMES
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Circle { .. } => "circle",
            Preset::Apple => "apple",
            Preset::Kite => "kite",
            Preset::RoundedSquare => "rounded_square",
            Preset::RoundedTriangle => "rounded_triangle",
        }
    }

    fn derivs(&self, t: f64) -> [Point; 3] {
        let (s, c) = t.sin_cos();
        match *self {
            Preset::Circle { radius, center } => [
                [center[0] + radius * c, center[1] + radius * s],
                [-radius * s, radius * c],
                [-radius * c, -radius * s],
            ],
            Preset::Apple => {
                let (s2, c2) = (2.0 * t).sin_cos();
                let num = 0.5 + 0.4 * c + 0.1 * s2;
                let dnum = -0.4 * s + 0.2 * c2;
                let ddnum = -0.4 * c - 0.4 * s2;
                let den = 1.0 + 0.7 * c;
                let dden = -0.7 * s;
                let ddden = -0.7 * c;
                let r = num / den;
                let dr = (dnum - r * dden) / den;
                let ddr = (ddnum - 2.0 * dr * dden - r * ddden) / den;
                polar_derivs([0.0, 0.0], r, dr, ddr, t)
            }
            Preset::Kite => {
                let (s2, c2) = (2.0 * t).sin_cos();
                [
                    [c + 0.65 * c2 - 0.65, 1.5 * s],
                    [-s - 1.3 * s2, 1.5 * c],
                    [-c - 2.6 * c2, -1.5 * s],
                ]
            }
            Preset::RoundedSquare => {
                let k = 1.5;
                [
                    [k * (c * c * c + c), k * (s * s * s + s)],
                    [k * (-3.0 * c * c * s - s), k * (3.0 * s * s * c + c)],
                    [
                        k * (6.0 * c * s * s - 3.0 * c * c * c - c),
                        k * (6.0 * s * c * c - 3.0 * s * s * s - s),
                    ],
                ]
            }
            Preset::RoundedTriangle => {
                let (s3, c3) = (3.0 * t).sin_cos();
                polar_derivs([0.0, 0.0], 2.0 + 0.3 * c3, -0.9 * s3, -2.7 * c3, t)
            }
        }
    }
}

fn polar_derivs(center: Point, r: f64, dr: f64, ddr: f64, t: f64) -> [Point; 3] {
    let (s, c) = t.sin_cos();
    [
        [center[0] + r * c, center[1] + r * s],
        [dr * c - r * s, dr * s + r * c],
        [(ddr - r) * c - 2.0 * dr * s, (ddr - r) * s + 2.0 * dr * c],
    ]
}

/// A closed boundary curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParametricCurve {
    Preset(Preset),
    Starlike(StarlikeShape),
}

impl From<StarlikeShape> for ParametricCurve {
    fn from(s: StarlikeShape) -> Self {
        ParametricCurve::Starlike(s)
    }
}

impl From<Preset> for ParametricCurve {
    fn from(p: Preset) -> Self {
        ParametricCurve::Preset(p)
    }
}

impl ParametricCurve {
    pub fn preset(name: &str) -> Result<Self> {
        Preset::from_name(name, None).map(Self::Preset)
    }

    pub fn circle(radius: f64) -> Self {
        Self::Preset(Preset::Circle {
            radius,
            center: [0.0, 0.0],
        })
    }

    /// `x(t)`.
    pub fn eval(&self, t: f64) -> Point {
        self.derivs(t)[0]
    }

    /// `[x(t), x'(t), x''(t)]`, all in closed form.
    pub fn derivs(&self, t: f64) -> [Point; 3] {
        match self {
            ParametricCurve::Preset(p) => p.derivs(t),
            ParametricCurve::Starlike(s) => {
                let (r, dr, ddr) = s.radius_derivs(t);
                polar_derivs(s.center, r, dr, ddr, t)
            }
        }
    }

    /// Samples `x(t)` at `count` equispaced parameters.
    pub fn polyline(&self, count: usize) -> Vec<Point> {
        (0..count)
            .map(|i| self.eval(2.0 * PI * i as f64 / count as f64))
            .collect()
    }

    /// Nodes `t_j = πj/n`, `j = 0..2n`, with all quantities the integral operators need.
    pub fn discretize(&self, n: usize) -> Result<DiscretizedBoundary> {
        if n < 4 {
            return Err(Error::Input(format!("discretization needs n >= 4, got {n}")));
        }
        let count = 2 * n;
        let mut b = DiscretizedBoundary {
            n,
            nodes: Vec::with_capacity(count),
            points: Vec::with_capacity(count),
            d1: Vec::with_capacity(count),
            d2: Vec::with_capacity(count),
            normals: Vec::with_capacity(count),
            speed: Vec::with_capacity(count),
            curvature: Vec::with_capacity(count),
        };
        for j in 0..count {
            let t = PI * j as f64 / n as f64;
            let [x, dx, ddx] = self.derivs(t);
            let speed = dx[0].hypot(dx[1]);
            if !(speed >= 1e-10) {
                return Err(Error::DegenerateCurve { node: j, speed });
            }
            b.nodes.push(t);
            b.points.push(x);
            b.d1.push(dx);
            b.d2.push(ddx);
            b.normals.push([dx[1] / speed, -dx[0] / speed]);
            b.speed.push(speed);
            b.curvature
                .push((dx[0] * ddx[1] - dx[1] * ddx[0]) / (speed * speed * speed));
        }
        Ok(b)
    }
}

/// A boundary sampled at the `2n` equispaced quadrature nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedBoundary {
    pub n: usize,
    pub nodes: Vec<f64>,
    pub points: Vec<Point>,
    pub d1: Vec<Point>,
    pub d2: Vec<Point>,
    /// Unit outward normals.
    pub normals: Vec<Point>,
    /// `|x'(t_j)|`.
    pub speed: Vec<f64>,
    pub curvature: Vec<f64>,
}

impl DiscretizedBoundary {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Arc-length derivative `dg/ds = (dg/dt) / |x'(t)|` of nodal samples.
    pub fn arc_derivative<T>(&self, values: &[T]) -> Vec<T>
    where
        T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
    {
        spectral_derivative(values)
            .into_iter()
            .zip(&self.speed)
            .map(|(v, s)| v * (1.0 / s))
            .collect()
    }
}

/// One row of the Fourier differentiation matrix for `count` (even) equispaced points:
/// `w[m] = ½ (-1)^m cot(mπ/count)`, `w[0] = 0`.
pub fn differentiation_row(count: usize) -> Vec<f64> {
    assert!(count % 2 == 0, "spectral differentiation needs an even node count");
    (0..count)
        .map(|m| {
            if m == 0 {
                0.0
            } else {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                0.5 * sign / (PI * m as f64 / count as f64).tan()
            }
        })
        .collect()
}

/// Derivative of the trigonometric interpolant of samples at `t_j = 2πj/count`,
/// evaluated at the same nodes. Exact for trigonometric polynomials of degree `< count/2`.
pub fn spectral_derivative<T>(values: &[T]) -> Vec<T>
where
    T: Copy + Default + Add<Output = T> + Mul<f64, Output = T>,
{
    let count = values.len();
    let row = differentiation_row(count);
    (0..count)
        .map(|i| {
            let mut acc = T::default();
            for (j, v) in values.iter().enumerate() {
                let m = (i + count - j) % count;
                if m != 0 {
                    acc = acc + *v * row[m];
                }
            }
            acc
        })
        .collect()
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let orient = |p: Point, q: Point, r: Point| (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (ap[0] - t * ab[0]).hypot(ap[1] - t * ab[1])
}

fn point_in_polygon(p: Point, poly: &[Point]) -> bool {
    let mut inside = false;
    let n = poly.len();
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Fails if the closed polyline through `points` crosses itself.
pub fn check_simple(points: &[Point]) -> Result<()> {
    let n = points.len();
    for i in 0..n {
        let (a, b) = (points[i], points[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_intersect(a, b, points[j], points[(j + 1) % n]) {
                return Err(Error::Geometry(format!(
                    "curve self-intersects between segments {i} and {j}"
                )));
            }
        }
    }
    Ok(())
}

/// Minimum distance from the nodes of `a` to the closed polyline `b`.
pub fn polyline_distance(a: &[Point], b: &[Point]) -> f64 {
    let n = b.len();
    a.iter()
        .map(|&p| {
            (0..n)
                .map(|j| point_segment_distance(p, b[j], b[(j + 1) % n]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Fails unless `inner` lies strictly inside `outer`, at least `margin` away from it.
pub fn check_containment(outer: &[Point], inner: &[Point], margin: f64) -> Result<()> {
    if let Some(p) = inner.iter().find(|&&p| !point_in_polygon(p, outer)) {
        return Err(Error::Geometry(format!(
            "inner boundary point ({:.4}, {:.4}) lies outside the outer boundary",
            p[0], p[1]
        )));
    }
    let dist = polyline_distance(inner, outer).min(polyline_distance(outer, inner));
    if dist < margin {
        return Err(Error::Geometry(format!(
            "boundaries are {dist:.4} apart (< {margin})"
        )));
    }
    Ok(())
}

/// Checks a pair of boundaries: each simple, and `inner ⊂⊂ outer` with the containment margin.
pub fn check_pair(outer: &ParametricCurve, inner: &ParametricCurve) -> Result<()> {
    for curve in [outer, inner] {
        if let ParametricCurve::Starlike(s) = curve {
            s.check_radius()?;
        }
    }
    let po = outer.polyline(POLYLINE_POINTS);
    let pi = inner.polyline(POLYLINE_POINTS);
    check_simple(&po)?;
    check_simple(&pi)?;
    check_containment(&po, &pi, CONTAINMENT_MARGIN)
}
