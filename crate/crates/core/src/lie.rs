//! Small fixed-size linear algebra and the SO(3) / SE₂(3) primitives used
//! by every other module.
//!
//! Rotations are plain 3×3 matrices wrapped in [`RotationMatrix`]; there are
//! no quaternions anywhere in the crate. Vectorization is column-major, so
//! the `j`-th 3-block of `vec3x3(M)` is the `j`-th column of `M`.

use std::ops::Mul;

use nalgebra::{DMatrix, Matrix3, Matrix5, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::tolerances as tol;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Mat5 = Matrix5<f64>;
pub type Vec9 = SVector<f64, 9>;
pub type Vec15 = SVector<f64, 15>;
pub type Mat15 = SMatrix<f64, 15, 15>;
pub type Mat3x15 = SMatrix<f64, 3, 15>;

/// Skew-symmetric matrix with `hat(w)·x = w × x`.
pub fn hat(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`hat`]. Rejects matrices that are not skew-symmetric.
pub fn vee(m: &Mat3) -> Result<Vec3> {
    let residual = (m + m.transpose()).norm();
    if residual > tol::SKEW {
        return Err(Error::NonSkewInput(residual));
    }
    Ok(Vec3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)]))
}

/// Orthogonal projector `I − yyᵀ` onto the plane normal to the unit vector `y`.
pub fn projector(y: &Vec3) -> Result<Mat3> {
    let n = y.norm();
    if (n - 1.0).abs() > tol::UNIT_NORM {
        return Err(Error::NonUnitInput(n));
    }
    Ok(Mat3::identity() - y * y.transpose())
}

/// Column-major stacking of a 3×3 matrix.
pub fn vec3x3(m: &Mat3) -> Vec9 {
    Vec9::from_column_slice(m.as_slice())
}

/// Inverse of [`vec3x3`].
pub fn unvec9(v: &Vec9) -> Mat3 {
    Mat3::from_column_slice(v.as_slice())
}

/// Kronecker product `A ⊗ B`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Symmetric part `(M + Mᵀ)/2`.
pub fn symmetrize<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    (m + m.transpose()) * 0.5
}

/// Relative asymmetry `‖M − Mᵀ‖_F / ‖M‖_F` (zero for the zero matrix).
pub fn asymmetry<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    let scale = m.norm();
    if scale == 0.0 {
        0.0
    } else {
        (m - m.transpose()).norm() / scale
    }
}

/// Element of SO(3).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RotationMatrix(Mat3);

impl Default for RotationMatrix {
    fn default() -> Self {
        Self::identity()
    }
}

impl RotationMatrix {
    pub fn identity() -> Self {
        Self(Mat3::identity())
    }

    /// Validates orthonormality and the determinant before wrapping `m`.
    pub fn new(m: Mat3) -> Result<Self> {
        let ortho = (m.transpose() * m - Mat3::identity()).norm();
        let det = m.determinant();
        if ortho > tol::ORTHONORMALITY || (det - 1.0).abs() > tol::DETERMINANT {
            return Err(Error::NotRotation { ortho, det });
        }
        Ok(Self(m))
    }

    /// Wraps `m` without checking. Callers must guarantee `m ∈ SO(3)` up to roundoff.
    pub(crate) fn from_matrix_unchecked(m: Mat3) -> Self {
        Self(m)
    }

    /// Rotation by `angle` about `e₃`.
    pub fn about_z(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
    }

    pub fn matrix(&self) -> &Mat3 {
        &self.0
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        ((self.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }

    /// `‖RᵀR − I‖_F`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Mat3::identity()).norm()
    }

    /// Angle of `selfᵀ·other`, i.e. the geodesic distance on SO(3).
    pub fn angle_to(&self, other: &RotationMatrix) -> f64 {
        (self.transpose() * *other).angle()
    }
}

impl Mul for RotationMatrix {
    type Output = RotationMatrix;
    fn mul(self, rhs: RotationMatrix) -> RotationMatrix {
        RotationMatrix(self.0 * rhs.0)
    }
}

impl Mul<Vec3> for RotationMatrix {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

impl Mul<Vec3> for &RotationMatrix {
    type Output = Vec3;
    fn mul(self, rhs: Vec3) -> Vec3 {
        self.0 * rhs
    }
}

/// Exponential map `so(3) → SO(3)` via the Rodrigues formula.
pub fn exp_so3(w: &Vec3) -> RotationMatrix {
    let theta = w.norm();
    let k = hat(w);
    let k2 = k * k;
    let m = if theta < tol::EXP_SERIES {
        Mat3::identity() + k + k2 * 0.5
    } else {
        let a = theta.sin() / theta;
        let b = (1.0 - theta.cos()) / (theta * theta);
        Mat3::identity() + k * a + k2 * b
    };
    RotationMatrix(m)
}

/// Element of SE₂(3): attitude, velocity and position.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct ExtendedPose {
    pub rot: RotationMatrix,
    pub v: Vec3,
    pub p: Vec3,
}

impl ExtendedPose {
    pub fn new(rot: RotationMatrix, v: Vec3, p: Vec3) -> Self {
        Self { rot, v, p }
    }

    /// 5×5 embedding `[[R, v, p], [0, I₂]]`.
    pub fn to_matrix(&self) -> Mat5 {
        let mut m = Mat5::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rot.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.v);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.p);
        m
    }

    /// Reads the blocks back out of a 5×5 embedding.
    pub fn from_matrix(m: &Mat5) -> Result<Self> {
        let rot = RotationMatrix::new(m.fixed_view::<3, 3>(0, 0).into_owned())?;
        Ok(Self {
            rot,
            v: m.fixed_view::<3, 1>(0, 3).into_owned(),
            p: m.fixed_view::<3, 1>(0, 4).into_owned(),
        })
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rot.transpose();
        Self {
            rot: rt,
            v: -(rt * self.v),
            p: -(rt * self.p),
        }
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &ExtendedPose) -> Self {
        Self {
            rot: self.rot * other.rot,
            v: self.rot * other.v + self.v,
            p: self.rot * other.p + self.p,
        }
    }
}
