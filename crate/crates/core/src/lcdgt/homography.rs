//! Planar homographies: normalized DLT, projection and its Jacobian.

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A screen-to-image point pair, in pixel units (`x` = column, `y` = row).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Correspondence {
    pub screen_x: f64,
    pub screen_y: f64,
    pub image_x: f64,
    pub image_y: f64,
}

impl Correspondence {
    pub fn new(screen: (f64, f64), image: (f64, f64)) -> Self {
        Self {
            screen_x: screen.0,
            screen_y: screen.1,
            image_x: image.0,
            image_y: image.1,
        }
    }

    pub fn screen(&self) -> (f64, f64) {
        (self.screen_x, self.screen_y)
    }

    pub fn image(&self) -> (f64, f64) {
        (self.image_x, self.image_y)
    }
}

/// Non-singular 3x3 projective map, scaled so `h[2][2] = 1` when possible.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Homography(Matrix3<f64>);

const SINGULAR_TOL: f64 = 1e-12;

impl Homography {
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("homography"));
        }
        let scale = m.norm();
        if scale == 0.0 || (m / scale).determinant().abs() < SINGULAR_TOL {
            return Err(Error::RankDeficient);
        }
        let m = if m[(2, 2)].abs() > SINGULAR_TOL * scale {
            m / m[(2, 2)]
        } else {
            m / scale
        };
        Ok(Self(m))
    }

    pub fn from_rows(rows: [[f64; 3]; 3]) -> Result<Self> {
        Self::new(Matrix3::from_fn(|r, c| rows[r][c]))
    }

    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Result<Self> {
        Self::new(self.0.try_inverse().ok_or(Error::RankDeficient)?)
    }

    /// `self` applied after `first`.
    pub fn compose(&self, first: &Homography) -> Result<Self> {
        Self::new(self.0 * first.0)
    }

    fn denominator(&self, p: (f64, f64)) -> Result<f64> {
        let h = &self.0;
        let terms = [h[(2, 0)] * p.0, h[(2, 1)] * p.1, h[(2, 2)]];
        let w: f64 = terms.iter().sum();
        let mag = terms.iter().map(|t| t.abs()).fold(0.0, f64::max);
        if !w.is_finite() || w.abs() <= 1e-12 * mag.max(f64::MIN_POSITIVE) {
            return Err(Error::PointAtInfinity);
        }
        Ok(w)
    }

    /// `H p / (h_3 . p)`.
    pub fn project(&self, p: (f64, f64)) -> Result<(f64, f64)> {
        let w = self.denominator(p)?;
        let q = self.0 * Vector3::new(p.0, p.1, 1.0);
        Ok((q[0] / w, q[1] / w))
    }

    /// Jacobian of [`Homography::project`] at `p`, rows `(du, dv)`, columns `(dx, dy)`.
    pub fn jacobian(&self, p: (f64, f64)) -> Result<Matrix2<f64>> {
        let w = self.denominator(p)?;
        let (u, v) = self.project(p)?;
        let h = &self.0;
        Ok(Matrix2::new(
            (h[(0, 0)] - u * h[(2, 0)]) / w,
            (h[(0, 1)] - u * h[(2, 1)]) / w,
            (h[(1, 0)] - v * h[(2, 0)]) / w,
            (h[(1, 1)] - v * h[(2, 1)]) / w,
        ))
    }
}

pub fn project_point(h: &Homography, p: (f64, f64)) -> Result<(f64, f64)> {
    h.project(p)
}

pub fn homography_jacobian(h: &Homography, p: (f64, f64)) -> Result<Matrix2<f64>> {
    h.jacobian(p)
}

/// Estimated homography with its mean reprojection error in image pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HomographyFit {
    pub homography: Homography,
    pub mean_reprojection_error: f64,
}

/// Similarity moving the centroid to the origin with mean distance sqrt(2).
fn normalizing_transform(pts: &[(f64, f64)]) -> Result<Matrix3<f64>> {
    let n = pts.len() as f64;
    let (cx, cy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let mean_d = pts.iter().map(|p| (p.0 - cx).hypot(p.1 - cy)).sum::<f64>() / n;
    if !(mean_d > 0.0 && mean_d.is_finite()) {
        return Err(Error::RankDeficient);
    }
    let s = std::f64::consts::SQRT_2 / mean_d;
    Ok(Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0))
}

fn apply(t: &Matrix3<f64>, p: (f64, f64)) -> (f64, f64) {
    (t[(0, 0)] * p.0 + t[(0, 2)], t[(1, 1)] * p.1 + t[(1, 2)])
}

/// Normalized direct linear transform from at least four correspondences.
pub fn estimate_homography(corr: &[Correspondence]) -> Result<HomographyFit> {
    if corr.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "a homography needs at least 4 correspondences, got {}",
            corr.len()
        )));
    }
    if corr.iter().any(|c| ![c.screen_x, c.screen_y, c.image_x, c.image_y].iter().all(|v| v.is_finite())) {
        return Err(Error::NonFinite("correspondence"));
    }
    let src: Vec<_> = corr.iter().map(Correspondence::screen).collect();
    let dst: Vec<_> = corr.iter().map(Correspondence::image).collect();
    let ts = normalizing_transform(&src)?;
    let td = normalizing_transform(&dst)?;
    let rows = (2 * corr.len()).max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (&s, &d)) in src.iter().zip(&dst).enumerate() {
        let (x, y) = apply(&ts, s);
        let (u, v) = apply(&td, d);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for j in 0..9 {
            a[(2 * i, j)] = r0[j];
            a[(2 * i + 1, j)] = r1[j];
        }
    }
    let svd = a.svd(false, true);
    let vt = svd.v_t.ok_or(Error::RankDeficient)?;
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let (smallest, second) = (order[0], order[1]);
    let largest = sv[order[order.len() - 1]];
    // A unique solution needs a one-dimensional null space.
    if sv[second] <= 1e-10 * largest {
        return Err(Error::RankDeficient);
    }
    let h = vt.row(smallest);
    let hn = Matrix3::from_fn(|r, c| h[3 * r + c]);
    let td_inv = td.try_inverse().ok_or(Error::RankDeficient)?;
    let homography = Homography::new(td_inv * hn * ts)?;
    let mut err = 0.0;
    for (&s, &d) in src.iter().zip(&dst) {
        let p = homography.project(s)?;
        err += (p.0 - d.0).hypot(p.1 - d.1);
    }
    Ok(HomographyFit {
        homography,
        mean_reprojection_error: err / corr.len() as f64,
    })
}

/// Reads `screen_x,screen_y,image_x,image_y` CSV.
pub fn read_correspondences(path: impl AsRef<std::path::Path>) -> Result<Vec<Correspondence>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = r.headers()?.clone();
    let expected = ["screen_x", "screen_y", "image_x", "image_y"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(Error::MalformedHeader(format!(
            "{}: expected header {}",
            path.display(),
            expected.join(",")
        )));
    }
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

pub fn write_correspondences(path: impl AsRef<std::path::Path>, corr: &[Correspondence]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for c in corr {
        w.serialize(c)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &std::path::Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!("checked is_io_error"),
        }
    } else {
        Error::Csv(e)
    }
}
